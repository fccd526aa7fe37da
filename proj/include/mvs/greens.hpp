#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "mvs/errors.hpp"
#include "mvs/linear_solve.hpp"
#include "mvs/operator.hpp"

namespace mvs {

/// Discrete Green's function: op.matrix G = e_{x0} / h^dim, G = 0 on the boundary.
struct GreensFunction {
    Field values;
    NodeIndex source_index = 0;
    double source_scale = 1.0;  // 1 / h^dim
    PcgReport solve_report;
};

/// Solves for the Green's function with pole at `source` (default: the grid center).
inline GreensFunction solve_green(const DiscreteOperator& op, NodeIndex source, const Multigrid* mg = nullptr,
                                  double relative_tolerance = 1e-10) {
    require(source < op.size(), "Green source outside the grid");
    require(!op.is_boundary(source), "Green source must be an interior node");
    GreensFunction g;
    g.source_index = source;
    g.source_scale = 1.0 / op.grid.cell_volume();
    Field b = Field::Zero(static_cast<Eigen::Index>(op.size()));
    b[static_cast<Eigen::Index>(source)] = g.source_scale;
    PcgOptions opts;
    opts.relative_tolerance = relative_tolerance;
    g.values = solve_spd(op, b, opts, &g.solve_report, mg);
    for (NodeIndex i = 0; i < op.size(); ++i)
        if (op.is_boundary(i)) g.values[static_cast<Eigen::Index>(i)] = 0.0;
    return g;
}

inline GreensFunction solve_green(const DiscreteOperator& op) { return solve_green(op, op.grid.center_index()); }

/// Nodes of the discrete sphere of radius r about the source: | |x - x0| - r | <= h/2.
inline std::vector<NodeIndex> sphere_shell(const Grid& grid, NodeIndex center, double r) {
    std::vector<NodeIndex> out;
    const Point c = grid.coords(center);
    const MultiIndex mc = grid.multi(center);
    const int reach = static_cast<int>(std::ceil(r / grid.spacing + 1.0));
    const int d = grid.dim;
    MultiIndex lo{0, 0, 0}, hi{0, 0, 0};
    for (int k = 0; k < d; ++k) {
        lo[k] = std::max(0, mc[k] - reach);
        hi[k] = std::min(grid.per_axis - 1, mc[k] + reach);
    }
    for (int z = d == 3 ? lo[2] : 0; z <= (d == 3 ? hi[2] : 0); ++z)
        for (int y = lo[1]; y <= hi[1]; ++y)
            for (int x = lo[0]; x <= hi[0]; ++x) {
                const NodeIndex i = grid.linear({x, y, z});
                const Point p = grid.coords(i);
                double s = 0.0;
                for (int k = 0; k < d; ++k) s += (p[k] - c[k]) * (p[k] - c[k]);
                if (std::abs(std::sqrt(s) - r) <= 0.5 * grid.spacing) out.push_back(i);
            }
    return out;
}

struct CapLevels {
    double small = 0.0;  // min of G over the shell
    double big = 0.0;    // max of G over the shell
};

inline CapLevels cap_levels(const DiscreteOperator& op, const GreensFunction& G, double r) {
    require(r >= 2.0 * op.grid.spacing - 1e-12, "cap radius must be at least 2h");
    const auto shell = sphere_shell(op.grid, G.source_index, r);
    require(!shell.empty(), "sphere shell of radius " + std::to_string(r) + " contains no grid nodes");
    CapLevels c{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (NodeIndex i : shell) {
        const double v = G.values[static_cast<Eigen::Index>(i)];
        c.small = std::min(c.small, v);
        c.big = std::max(c.big, v);
    }
    return c;
}

struct CappedGreen {
    Field values;
    double cap_level = 0.0;
    double radius = 0.0;
};

inline CappedGreen cap_green(const Field& G, double cap_level, double radius = 0.0) {
    CappedGreen c;
    c.values = G.cwiseMin(cap_level);
    c.cap_level = cap_level;
    c.radius = radius;
    return c;
}

/// Mean of G over the discrete sphere shell of radius r.
inline double spherical_mean(const DiscreteOperator& op, const GreensFunction& G, double r) {
    const auto shell = sphere_shell(op.grid, G.source_index, r);
    require(!shell.empty(), "empty sphere shell");
    double s = 0.0;
    for (NodeIndex i : shell) s += G.values[static_cast<Eigen::Index>(i)];
    return s / static_cast<double>(shell.size());
}

struct BoundReport {
    double c1 = 0.0;  // min G |x|^{n-2}
    double c2 = 0.0;  // max G |x|^{n-2}
    double ratio = 0.0;
    double max_ratio = 0.0;
    bool passed = false;
    std::size_t samples = 0;
};

/// Two-sided |x|^{2-n} envelope of G over an annulus (dimension 3 only).
inline BoundReport check_lsw_bounds(const DiscreteOperator& op, const GreensFunction& G, double r_in, double r_out,
                                    double max_ratio = 1.5) {
    const Grid& g = op.grid;
    if (g.dim != 3) throw PreconditionError("Green envelope check is only defined for dim = 3");
    require(r_in >= 4.0 * g.spacing - 1e-12, "annulus inner radius must be at least 4h");
    require(r_out > r_in && r_out <= 0.5 * g.half_width + 1e-12, "annulus outer radius must lie in (r_in, M/2]");
    BoundReport rep;
    rep.c1 = std::numeric_limits<double>::infinity();
    rep.c2 = 0.0;
    rep.max_ratio = max_ratio;
    const Point c = g.coords(G.source_index);
    for (NodeIndex i = 0; i < g.size(); ++i) {
        const Point p = g.coords(i);
        const double r = std::sqrt((p[0] - c[0]) * (p[0] - c[0]) + (p[1] - c[1]) * (p[1] - c[1]) +
                                   (p[2] - c[2]) * (p[2] - c[2]));
        if (r < r_in || r > r_out) continue;
        const double scaled = G.values[static_cast<Eigen::Index>(i)] * r;
        rep.c1 = std::min(rep.c1, scaled);
        rep.c2 = std::max(rep.c2, scaled);
        ++rep.samples;
    }
    require(rep.samples > 0, "annulus contains no nodes");
    rep.ratio = rep.c2 / rep.c1;
    rep.passed = rep.c1 > 0.0 && rep.ratio <= max_ratio;
    return rep;
}

}  // namespace mvs
