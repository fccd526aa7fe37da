#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvs/errors.hpp"
#include "mvs/obstacle.hpp"

namespace mvs {

/// Volume of the unit ball in dimension dim.
inline double unit_ball_volume(int dim) { return dim == 2 ? std::numbers::pi : 4.0 * std::numbers::pi / 3.0; }

/// Grid indicator of D_R(x0) = {v > threshold}.
///
/// Radii use the union of the indicator's cells (cubes of edge h centered at
/// the nodes): r_in is the distance from x0 to the nearest cell outside the
/// set, r_out the distance to the farthest corner of a cell inside it. Both
/// balls then sandwich the cell union exactly.
struct MeanValueSet {
    Grid grid;
    std::vector<std::uint8_t> indicator;
    double R = 0.0;
    NodeIndex x0 = 0;
    double threshold = 0.0;
    std::size_t count = 0;
    double measure = 0.0;
    double r_in = 0.0;
    double r_out = 0.0;
    bool connected = false;

    [[nodiscard]] bool contains(NodeIndex i) const { return indicator[i] != 0; }
    [[nodiscard]] double kappa() const { return measure * std::pow(R, -static_cast<double>(grid.dim)); }
};

namespace detail {

inline double distance(const Point& a, const Point& b, int dim) {
    double s = 0.0;
    for (int k = 0; k < dim; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(s);
}

/// Nearest and farthest point of the cube of edge h centered at c, seen from p.
inline double cell_near(const Point& p, const Point& c, double h, int dim) {
    double s = 0.0;
    for (int k = 0; k < dim; ++k) {
        const double d = std::max(0.0, std::abs(p[k] - c[k]) - 0.5 * h);
        s += d * d;
    }
    return std::sqrt(s);
}

inline double cell_far(const Point& p, const Point& c, double h, int dim) {
    double s = 0.0;
    for (int k = 0; k < dim; ++k) {
        const double d = std::abs(p[k] - c[k]) + 0.5 * h;
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace detail

/// Face-adjacency connectivity of an indicator, seeded at `start`.
inline bool face_connected(const Grid& g, const std::vector<std::uint8_t>& ind, NodeIndex start) {
    if (!ind[start]) return false;
    std::vector<std::uint8_t> seen(ind.size(), 0);
    std::deque<NodeIndex> queue{start};
    seen[start] = 1;
    std::size_t reached = 0;
    while (!queue.empty()) {
        const NodeIndex i = queue.front();
        queue.pop_front();
        ++reached;
        const MultiIndex m = g.multi(i);
        for (int k = 0; k < g.dim; ++k)
            for (int s : {-1, 1}) {
                const int c = m[k] + s;
                if (c < 0 || c >= g.per_axis) continue;
                const NodeIndex j = s > 0 ? i + g.stride(k) : i - g.stride(k);
                if (ind[j] && !seen[j]) {
                    seen[j] = 1;
                    queue.push_back(j);
                }
            }
    }
    return reached == static_cast<std::size_t>(std::count(ind.begin(), ind.end(), std::uint8_t{1}));
}

inline MeanValueSet make_set(const Grid& grid, std::vector<std::uint8_t> indicator, double R, NodeIndex x0,
                             double threshold = 0.0) {
    MeanValueSet s;
    s.grid = grid;
    s.indicator = std::move(indicator);
    s.R = R;
    s.x0 = x0;
    s.threshold = threshold;
    s.count = static_cast<std::size_t>(std::count(s.indicator.begin(), s.indicator.end(), std::uint8_t{1}));
    if (s.count == 0) throw PreconditionError("mean value set is empty");
    if (!s.indicator[x0]) throw PreconditionError("x0 is not in the mean value set");
    s.measure = static_cast<double>(s.count) * grid.cell_volume();
    const Point c = grid.coords(x0);
    const double h = grid.spacing;
    s.r_in = std::numeric_limits<double>::infinity();
    s.r_out = 0.0;
    for (NodeIndex i = 0; i < grid.size(); ++i) {
        const Point p = grid.coords(i);
        if (s.indicator[i])
            s.r_out = std::max(s.r_out, detail::cell_far(c, p, h, grid.dim));
        else
            s.r_in = std::min(s.r_in, detail::cell_near(c, p, h, grid.dim));
    }
    s.connected = face_connected(grid, s.indicator, x0);
    return s;
}

/// D_R from a converged obstacle solution.
inline MeanValueSet extract_set(const Grid& grid, const ObstacleSolution& sol) {
    require(sol.converged, "cannot extract a mean value set from a non-converged solve");
    require(sol.q > 0.0, "mean value sets need a positive density (finite R)");
    return make_set(grid, sol.active, sol.R, sol.x0, sol.threshold);
}

struct NestingReport {
    double R = 0.0;
    double S = 0.0;
    std::size_t band_violations = 0;    // in D_R \ D_S but within one cell of D_S
    std::size_t strict_violations = 0;  // farther away
    bool passed = false;
};

/// D_R subset of D_S for R <= S, up to a one-cell band around D_S.
inline NestingReport nesting_report(const MeanValueSet& DR, const MeanValueSet& DS) {
    if (!(DR.grid == DS.grid) || DR.x0 != DS.x0) throw PreconditionError("nesting check needs the same grid and x0");
    if (DR.R > DS.R) throw PreconditionError("nesting check needs R <= S");
    const Grid& g = DR.grid;
    NestingReport rep;
    rep.R = DR.R;
    rep.S = DS.R;
    for (NodeIndex i = 0; i < g.size(); ++i) {
        if (!DR.indicator[i] || DS.indicator[i]) continue;
        const MultiIndex m = g.multi(i);
        bool near = false;
        for (int dz = g.dim == 3 ? -1 : 0; dz <= (g.dim == 3 ? 1 : 0) && !near; ++dz)
            for (int dy = -1; dy <= 1 && !near; ++dy)
                for (int dx = -1; dx <= 1 && !near; ++dx) {
                    const MultiIndex o{m[0] + dx, m[1] + dy, m[2] + dz};
                    bool inside = true;
                    for (int k = 0; k < g.dim; ++k)
                        if (o[k] < 0 || o[k] >= g.per_axis) inside = false;
                    if (inside && DS.indicator[g.linear(o)]) near = true;
                }
        if (near)
            ++rep.band_violations;
        else
            ++rep.strict_violations;
    }
    rep.passed = rep.strict_violations == 0;
    return rep;
}

inline bool nesting_check(const MeanValueSet& DR, const MeanValueSet& DS) { return nesting_report(DR, DS).passed; }

struct VolumeReport {
    std::vector<double> radii;
    std::vector<double> measures;
    std::vector<double> kappa;
    double mean = 0.0;
    double spread = 0.0;  // (max - min) / mean
    double tolerance = 0.05;
    bool passed = false;
};

/// kappa_R = |D_R| R^{-dim} constant across the sweep.
inline VolumeReport volume_identity(const std::vector<MeanValueSet>& sets, double tolerance = 0.05) {
    require(!sets.empty(), "volume identity needs at least one set");
    VolumeReport rep;
    rep.tolerance = tolerance;
    for (const auto& s : sets) {
        if (!(s.grid == sets.front().grid) || s.x0 != sets.front().x0)
            throw PreconditionError("volume identity needs a common grid and x0");
        rep.radii.push_back(s.R);
        rep.measures.push_back(s.measure);
        rep.kappa.push_back(s.kappa());
    }
    const auto [lo, hi] = std::minmax_element(rep.kappa.begin(), rep.kappa.end());
    double sum = 0.0;
    for (double k : rep.kappa) sum += k;
    rep.mean = sum / static_cast<double>(rep.kappa.size());
    rep.spread = (*hi - *lo) / rep.mean;
    rep.passed = rep.spread <= tolerance;
    return rep;
}

struct InclusionReport {
    std::vector<double> radii;
    std::vector<double> c;  // r_in / R
    std::vector<double> C;  // r_out / R
    double c_spread = 0.0;
    double C_spread = 0.0;
    double tolerance = 0.15;
    double lambda = 0.0;
    double Lambda = 0.0;
    bool passed = false;
};

inline double relative_spread(const std::vector<double>& x) {
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    double sum = 0.0;
    for (double v : x) sum += v;
    return (*hi - *lo) / (sum / static_cast<double>(x.size()));
}

/// B_{c R} subset of D_R subset of B_{C R} with scale-invariant c, C.
inline InclusionReport ball_inclusions(const std::vector<MeanValueSet>& sets, double lambda, double Lambda,
                                       double tolerance = 0.15) {
    require(sets.size() >= 2, "ball inclusions need at least two values of R");
    InclusionReport rep;
    rep.tolerance = tolerance;
    rep.lambda = lambda;
    rep.Lambda = Lambda;
    double rmin = std::numeric_limits<double>::infinity(), rmax = 0.0;
    for (const auto& s : sets) {
        rep.radii.push_back(s.R);
        rep.c.push_back(s.r_in / s.R);
        rep.C.push_back(s.r_out / s.R);
        rmin = std::min(rmin, s.R);
        rmax = std::max(rmax, s.R);
    }
    require(rmax >= 2.0 * rmin * (1.0 - 1e-12), "ball inclusions need R values spanning a factor of at least 2");
    rep.c_spread = relative_spread(rep.c);
    rep.C_spread = relative_spread(rep.C);
    bool ordered = true;
    for (std::size_t i = 0; i < rep.c.size(); ++i)
        ordered = ordered && rep.c[i] > 0.0 && rep.c[i] < rep.C[i] && std::isfinite(rep.C[i]);
    rep.passed = ordered && rep.c_spread <= tolerance && rep.C_spread <= tolerance;
    return rep;
}

/// Whether the measure lies between the inscribed and circumscribed ball volumes
/// with a 3h/r boundary-layer slack.
inline bool measure_sandwiched(const MeanValueSet& s) {
    const double w = unit_ball_volume(s.grid.dim);
    const double h = s.grid.spacing;
    const int d = s.grid.dim;
    const double lo = s.r_in > 0.0 ? w * std::pow(s.r_in, d) * (1.0 - 3.0 * h / s.r_in) : 0.0;
    const double hi = w * std::pow(s.r_out, d) * (1.0 + 3.0 * h / s.r_out);
    return s.r_in <= s.r_out && s.measure >= lo && s.measure <= hi;
}

/// Cell-measure-weighted mean of v over the set.
inline double average_over(const Field& v, const MeanValueSet& D) {
    require(static_cast<std::size_t>(v.size()) == D.grid.size(), "field and set live on different grids");
    require(D.count > 0, "cannot average over an empty set");
    double s = 0.0;
    for (NodeIndex i = 0; i < D.grid.size(); ++i)
        if (D.indicator[i]) s += v[static_cast<Eigen::Index>(i)];
    return s / static_cast<double>(D.count);
}

enum class SolutionKind { sub, super };

struct AverageCurve {
    std::vector<double> radii;
    std::vector<double> measures;
    std::vector<double> averages;
    double center_value = 0.0;
};

struct MonotoneReport {
    AverageCurve curve;
    SolutionKind kind = SolutionKind::sub;
    double lipschitz = 0.0;
    double slack = 0.0;
    double worst_step = 0.0;  // largest step against the expected direction
    std::size_t violations = 0;
    bool passed = false;
};

/// Throws PreconditionError unless A v <= 0 (sub) or A v >= 0 (super) at every interior node.
inline void require_sub_super(const DiscreteOperator& op, const Field& v, SolutionKind kind) {
    const Field Av = op.apply_full(v);
    const double tol = 1e-9 * std::max(1.0, Av.lpNorm<Eigen::Infinity>());
    double worst = 0.0;
    NodeIndex at = 0;
    for (NodeIndex i = 0; i < op.size(); ++i) {
        if (op.is_boundary(i)) continue;
        const double x = kind == SolutionKind::sub ? Av[static_cast<Eigen::Index>(i)] : -Av[static_cast<Eigen::Index>(i)];
        if (x > worst) {
            worst = x;
            at = i;
        }
    }
    if (worst > tol) {
        const Point p = op.grid.coords(at);
        throw PreconditionError(std::string("field is not a discrete ") +
                                (kind == SolutionKind::sub ? "subsolution" : "supersolution") + ": residual " +
                                std::to_string(worst) + " at (" + std::to_string(p[0]) + ", " + std::to_string(p[1]) +
                                ", " + std::to_string(p[2]) + ")");
    }
}

/// Largest face difference / h over the cells of D dilated by one cell.
inline double lipschitz_estimate(const Field& v, const MeanValueSet& D) {
    const Grid& g = D.grid;
    double lip = 0.0;
    for (NodeIndex i = 0; i < g.size(); ++i) {
        const MultiIndex m = g.multi(i);
        bool near = D.indicator[i] != 0;
        for (int k = 0; k < g.dim && !near; ++k) {
            if (m[k] > 0 && D.indicator[i - g.stride(k)]) near = true;
            if (m[k] + 1 < g.per_axis && D.indicator[i + g.stride(k)]) near = true;
        }
        if (!near) continue;
        for (int k = 0; k < g.dim; ++k)
            if (m[k] + 1 < g.per_axis) {
                const double d = std::abs(v[static_cast<Eigen::Index>(i + g.stride(k))] - v[static_cast<Eigen::Index>(i)]);
                lip = std::max(lip, d / g.spacing);
            }
    }
    return lip;
}

/// Ordered chain v(x0) <= avg_{D_R1} <= ... for subsolutions (reversed for
/// supersolutions) over sets sorted by R, up to slack 3 h Lip(v).
inline MonotoneReport monotone_average_check(const DiscreteOperator& op, const Field& v, SolutionKind kind,
                                             std::vector<MeanValueSet> sets) {
    require(!sets.empty(), "monotone average check needs at least one set");
    require_sub_super(op, v, kind);
    std::sort(sets.begin(), sets.end(), [](const auto& a, const auto& b) { return a.R < b.R; });
    MonotoneReport rep;
    rep.kind = kind;
    rep.curve.center_value = v[static_cast<Eigen::Index>(sets.front().x0)];
    for (const auto& s : sets) {
        require(s.grid == op.grid, "set and operator live on different grids");
        rep.curve.radii.push_back(s.R);
        rep.curve.measures.push_back(s.measure);
        rep.curve.averages.push_back(average_over(v, s));
    }
    rep.lipschitz = lipschitz_estimate(v, sets.back());
    rep.slack = 3.0 * op.grid.spacing * rep.lipschitz;
    double prev = rep.curve.center_value;
    rep.worst_step = -std::numeric_limits<double>::infinity();
    for (double a : rep.curve.averages) {
        const double against = kind == SolutionKind::sub ? prev - a : a - prev;
        rep.worst_step = std::max(rep.worst_step, against);
        if (against > rep.slack) ++rep.violations;
        prev = a;
    }
    rep.passed = rep.violations == 0;
    return rep;
}

struct TruncationReport {
    double M1 = 0.0;
    double M2 = 0.0;
    double R = 0.0;
    bool inconclusive = false;
    std::size_t indicator_mismatches = 0;
    double max_difference = 0.0;
    double tolerance = 0.0;
    bool passed = false;
    std::string message;
};

/// Compares two obstacle solutions on boxes M1 < M2 (same h, same x0 at the
/// origin) over B_{M1/2}. Inconclusive when the smaller set reaches the guard shell.
inline TruncationReport truncation_check(const ObstacleSolution& s1, const Grid& g1, const ObstacleSolution& s2,
                                         const Grid& g2, double tol) {
    require(g1.dim == g2.dim && g1.spacing == g2.spacing, "truncation check needs identical dim and h");
    require(g2.half_width >= g1.half_width + 1.0 - 1e-12, "truncation check needs M2 >= M1 + 1");
    require(s1.x0 == g1.center_index() && s2.x0 == g2.center_index(), "truncation check needs x0 at the origin");
    TruncationReport rep;
    rep.M1 = g1.half_width;
    rep.M2 = g2.half_width;
    rep.R = s1.R;
    rep.tolerance = 10.0 * tol;
    const double guard = 0.5 * g1.half_width;
    const int shift = g2.center_offset() - g1.center_offset();
    for (NodeIndex i = 0; i < g1.size(); ++i) {
        const double r = g1.radius(i);
        if (s1.active[i] && r >= guard - g1.spacing) rep.inconclusive = true;
        if (r > guard) continue;
        MultiIndex m = g1.multi(i);
        for (int k = 0; k < g1.dim; ++k) m[k] += shift;
        const NodeIndex j = g2.linear(m);
        if (s1.active[i] != s2.active[j]) ++rep.indicator_mismatches;
        rep.max_difference =
            std::max(rep.max_difference, std::abs(s1.v[static_cast<Eigen::Index>(i)] - s2.v[static_cast<Eigen::Index>(j)]));
    }
    if (rep.inconclusive) {
        rep.message = "the set on the smaller box reaches the guard shell |x| = M1/2 - h; use a larger M1";
        rep.passed = false;
        return rep;
    }
    rep.passed = rep.indicator_mismatches == 0 && rep.max_difference <= rep.tolerance;
    return rep;
}

inline void to_json(nlohmann::json& j, const NestingReport& r) {
    j = {{"R", r.R}, {"S", r.S}, {"band_violations", r.band_violations},
         {"strict_violations", r.strict_violations}, {"passed", r.passed}};
}

inline void to_json(nlohmann::json& j, const VolumeReport& r) {
    j = {{"radii", r.radii}, {"measures", r.measures}, {"kappa", r.kappa}, {"mean", r.mean},
         {"spread", r.spread}, {"tolerance", r.tolerance}, {"passed", r.passed}};
}

inline void to_json(nlohmann::json& j, const InclusionReport& r) {
    j = {{"radii", r.radii}, {"c", r.c}, {"C", r.C}, {"c_spread", r.c_spread}, {"C_spread", r.C_spread},
         {"tolerance", r.tolerance}, {"lambda", r.lambda}, {"Lambda", r.Lambda}, {"passed", r.passed}};
}

inline void to_json(nlohmann::json& j, const MonotoneReport& r) {
    j = {{"kind", r.kind == SolutionKind::sub ? "sub" : "super"},
         {"radii", r.curve.radii},
         {"measures", r.curve.measures},
         {"averages", r.curve.averages},
         {"center_value", r.curve.center_value},
         {"lipschitz", r.lipschitz},
         {"slack", r.slack},
         {"worst_step", r.worst_step},
         {"violations", r.violations},
         {"passed", r.passed}};
}

inline void to_json(nlohmann::json& j, const TruncationReport& r) {
    j = {{"M1", r.M1}, {"M2", r.M2}, {"R", r.R}, {"inconclusive", r.inconclusive},
         {"indicator_mismatches", r.indicator_mismatches}, {"max_difference", r.max_difference},
         {"tolerance", r.tolerance}, {"passed", r.passed}, {"message", r.message}};
}

}  // namespace mvs
