#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvs/errors.hpp"
#include "mvs/instance.hpp"
#include "mvs/mvset.hpp"
#include "mvs/obstacle.hpp"
#include "mvs/random.hpp"

namespace mvs {

/// Active nodes with at least one inactive face neighbor.
inline std::vector<NodeIndex> free_boundary_nodes(const Grid& g, const std::vector<std::uint8_t>& active) {
    std::vector<NodeIndex> out;
    for (NodeIndex i = 0; i < g.size(); ++i) {
        if (!active[i]) continue;
        const MultiIndex m = g.multi(i);
        bool edge = false;
        for (int k = 0; k < g.dim && !edge; ++k) {
            if (m[k] > 0 && !active[i - g.stride(k)]) edge = true;
            if (m[k] + 1 < g.per_axis && !active[i + g.stride(k)]) edge = true;
        }
        if (edge) out.push_back(i);
    }
    return out;
}

/// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size() && x.size() >= 2, "slope fit needs at least two points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

/// Multilinear interpolation of a grid field; points outside the box read 0.
inline double interpolate(const Grid& g, const Field& v, const Point& x) {
    MultiIndex base{0, 0, 0};
    double frac[3] = {0.0, 0.0, 0.0};
    for (int k = 0; k < g.dim; ++k) {
        const double t = (x[k] + g.half_width) / g.spacing;
        if (t < 0.0 || t > g.per_axis - 1) return 0.0;
        base[k] = std::min(static_cast<int>(std::floor(t)), g.per_axis - 2);
        frac[k] = t - base[k];
    }
    double out = 0.0;
    for (int corner = 0; corner < (1 << g.dim); ++corner) {
        MultiIndex m = base;
        double w = 1.0;
        for (int k = 0; k < g.dim; ++k) {
            const int bit = (corner >> k) & 1;
            m[k] += bit;
            w *= bit ? frac[k] : 1.0 - frac[k];
        }
        if (w != 0.0) out += w * v[static_cast<Eigen::Index>(g.linear(m))];
    }
    return out;
}

/// Unit directions: 720 equal angles in 2D, a 2048-point Fibonacci lattice in 3D.
inline std::vector<Point> sphere_directions(int dim) {
    std::vector<Point> out;
    if (dim == 2) {
        for (int i = 0; i < 720; ++i) {
            const double t = 2.0 * std::numbers::pi * i / 720.0;
            out.push_back({std::cos(t), std::sin(t), 0.0});
        }
        return out;
    }
    const int n = 2048;
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
        const double z = 1.0 - (2.0 * i + 1.0) / n;
        const double rho = std::sqrt(1.0 - z * z);
        out.push_back({rho * std::cos(golden * i), rho * std::sin(golden * i), z});
    }
    return out;
}

/// Sub-cell free-boundary point next to the active node p: sqrt(v) is linear in the
/// normal distance for a quadratic profile, so p - sqrt(v_p) grad(sqrt v) / |grad(sqrt v)|^2
/// is its zero. The shift is capped at one cell; a degenerate gradient keeps the node.
inline Point locate_free_boundary(const Grid& g, const Field& v, const std::vector<std::uint8_t>& active, NodeIndex p) {
    const MultiIndex m = g.multi(p);
    const double h = g.spacing;
    auto root = [&](NodeIndex j) { return std::sqrt(std::max(0.0, v[static_cast<Eigen::Index>(j)])); };
    const double r0 = root(p);
    Point grad{0.0, 0.0, 0.0};
    double n2 = 0.0;
    for (int k = 0; k < g.dim; ++k) {
        const bool up = m[k] + 1 < g.per_axis && active[p + g.stride(k)];
        const bool down = m[k] > 0 && active[p - g.stride(k)];
        if (up && down)
            grad[k] = (root(p + g.stride(k)) - root(p - g.stride(k))) / (2.0 * h);
        else if (up)
            grad[k] = (root(p + g.stride(k)) - r0) / h;
        else if (down)
            grad[k] = (r0 - root(p - g.stride(k))) / h;
        n2 += grad[k] * grad[k];
    }
    Point x = g.coords(p);
    if (!(n2 > 0.0)) return x;
    const double t = std::min(r0 / n2, h / std::sqrt(n2));
    for (int k = 0; k < g.dim; ++k) x[k] -= t * grad[k];
    return x;
}

struct GrowthPoint {
    NodeIndex node = 0;
    Point point{0.0, 0.0, 0.0};
    std::vector<double> radii;
    std::vector<double> sup_values;
    double slope = 0.0;
    double ratio = 0.0;  // max S/r^2 over min S/r^2
    bool passed = false;
};

struct GrowthReport {
    std::vector<GrowthPoint> points;
    std::size_t requested = 0;
    std::size_t available = 0;
    bool low_sample = false;
    double slope_lo = 1.6;
    double slope_hi = 2.4;
    double max_ratio = 10.0;
    double slope_min = 0.0;
    double slope_max = 0.0;
    double ratio_max = 0.0;
    bool passed = false;
};

/// S(r) = max of v over B_r(p) at sampled free-boundary points p. v is a subsolution,
/// so the max sits on the sphere, where v is interpolated along a fixed direction set. The radii are
/// the four largest of r_max 2^{-k}, r_max = min(dist(p, box boundary) / 2, dist(p, x0) / 3),
/// that stay >= 2h; when fewer than four fit, the ratio between radii drops to sqrt(2).
inline GrowthReport quadratic_growth_check(const Grid& g, const ObstacleSolution& sol, std::size_t n_points,
                                           std::uint64_t seed, double slope_lo = 1.6, double slope_hi = 2.4,
                                           double max_ratio = 10.0) {
    require(sol.converged, "growth check needs a converged solution");
    std::vector<NodeIndex> fb = free_boundary_nodes(g, sol.active);
    require(!fb.empty(), "growth check needs a nonempty free boundary");
    GrowthReport rep;
    rep.requested = n_points;
    rep.available = fb.size();
    rep.slope_lo = slope_lo;
    rep.slope_hi = slope_hi;
    rep.max_ratio = max_ratio;
    rep.low_sample = fb.size() < n_points;
    // partial Fisher-Yates on the scan-ordered list
    SplitMix rng(seed);
    const std::size_t take = std::min(n_points, fb.size());
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.next() % (fb.size() - i));
        std::swap(fb[i], fb[j]);
    }
    fb.resize(take);

    const double h = g.spacing;
    const Point c = g.coords(sol.x0);
    const std::vector<Point> directions = sphere_directions(g.dim);
    rep.slope_min = std::numeric_limits<double>::infinity();
    rep.slope_max = -std::numeric_limits<double>::infinity();
    rep.passed = true;
    for (NodeIndex p : fb) {
        GrowthPoint gp;
        gp.node = p;
        gp.point = locate_free_boundary(g, sol.v, sol.active, p);
        double to_box = std::numeric_limits<double>::infinity();
        for (int k = 0; k < g.dim; ++k) to_box = std::min(to_box, g.half_width - std::abs(gp.point[k]));
        const double rmax = std::min(0.5 * to_box, detail::distance(gp.point, c, g.dim) / 3.0);
        const double factor = rmax / 8.0 >= 2.0 * h * (1.0 - 1e-12) ? 2.0 : std::sqrt(2.0);
        for (double r = rmax; r >= 2.0 * h * (1.0 - 1e-12) && gp.radii.size() < 4; r /= factor)
            gp.radii.insert(gp.radii.begin(), r);
        if (gp.radii.size() < 2) {
            gp.passed = false;
            rep.passed = false;
            rep.points.push_back(gp);
            continue;
        }
        for (double r : gp.radii) {
            double best = 0.0;
            for (const Point& d : directions) {
                Point y = gp.point;
                for (int k = 0; k < g.dim; ++k) y[k] += r * d[k];
                best = std::max(best, interpolate(g, sol.v, y));
            }
            gp.sup_values.push_back(best);
        }
        double lo_q = std::numeric_limits<double>::infinity(), hi_q = 0.0;
        bool positive = true;
        for (std::size_t i = 0; i < gp.radii.size(); ++i) {
            const double qv = gp.sup_values[i] / (gp.radii[i] * gp.radii[i]);
            positive = positive && gp.sup_values[i] > 0.0;
            lo_q = std::min(lo_q, qv);
            hi_q = std::max(hi_q, qv);
        }
        if (!positive) {
            gp.passed = false;
            rep.passed = false;
            rep.points.push_back(gp);
            continue;
        }
        gp.slope = loglog_slope(gp.radii, gp.sup_values);
        gp.ratio = hi_q / lo_q;
        gp.passed = gp.slope >= slope_lo && gp.slope <= slope_hi && gp.ratio <= max_ratio;
        rep.passed = rep.passed && gp.passed;
        rep.slope_min = std::min(rep.slope_min, gp.slope);
        rep.slope_max = std::max(rep.slope_max, gp.slope);
        rep.ratio_max = std::max(rep.ratio_max, gp.ratio);
        rep.points.push_back(gp);
    }
    return rep;
}

struct DecayReport {
    std::vector<double> spacings;
    std::vector<std::size_t> band_cells;
    std::vector<double> band_measure;
    double slope = 0.0;        // d log beta / d log h
    double dimension = 0.0;    // dim - slope
    bool strictly_decreasing = false;
    double min_codimension = 0.5;
    bool passed = false;
};

/// Band measure beta(h) = #free-boundary cells * h^dim over a refinement sequence.
inline DecayReport band_measure_decay(const std::vector<Grid>& grids, const std::vector<ObstacleSolution>& sols,
                                      double min_codimension = 0.5) {
    require(grids.size() == sols.size(), "one solution per grid expected");
    require(grids.size() >= 3, "free-boundary measure decay needs at least three resolutions");
    DecayReport rep;
    rep.min_codimension = min_codimension;
    for (std::size_t i = 0; i < grids.size(); ++i) {
        if (i > 0) require(grids[i].spacing < grids[i - 1].spacing, "resolutions must be strictly decreasing");
        const auto fb = free_boundary_nodes(grids[i], sols[i].active);
        rep.spacings.push_back(grids[i].spacing);
        rep.band_cells.push_back(fb.size());
        rep.band_measure.push_back(static_cast<double>(fb.size()) * grids[i].cell_volume());
    }
    rep.strictly_decreasing = true;
    for (std::size_t i = 1; i < rep.band_measure.size(); ++i)
        rep.strictly_decreasing = rep.strictly_decreasing && rep.band_measure[i] < rep.band_measure[i - 1];
    bool positive = true;
    for (double b : rep.band_measure) positive = positive && b > 0.0;
    if (positive) {
        rep.slope = loglog_slope(rep.spacings, rep.band_measure);
        rep.dimension = grids.front().dim - rep.slope;
    }
    rep.passed = positive && rep.strictly_decreasing && rep.slope >= min_codimension;
    return rep;
}

/// Solves the LCP at every spacing in h_list (same box, coefficients and R).
inline DecayReport fb_measure_decay(int dim, double M, const CoefficientField& coeff, double R,
                                    const std::vector<double>& h_list, const LcpOptions& opts = {}) {
    require(h_list.size() >= 3, "free-boundary measure decay needs at least three resolutions");
    std::vector<Grid> grids;
    std::vector<ObstacleSolution> sols;
    for (double h : h_list) {
        const Instance in = make_instance(dim, M, h, coeff, false);
        ObstacleSolution s = solve_lcp(in.problem(R), opts);
        if (!s.converged) throw ConvergenceError(s.message);
        grids.push_back(in.grid);
        sols.push_back(std::move(s));
    }
    return band_measure_decay(grids, sols);
}

struct RouteDifference {
    std::string a;
    std::string b;
    double difference = 0.0;
};

struct ConvergenceReport {
    std::vector<double> spacings;
    std::vector<double> successive;  // max |v_h - v_{h/2}| on the coarser grid
    double exclusion_radius = 0.0;
    std::vector<RouteDifference> routes;
    double route_bound = 0.0;
    double max_v = 0.0;
    bool successive_decreasing = false;
    bool routes_agree = false;
    bool passed = false;
};

/// Max |a - b| over nodes of the coarse grid, skipping |x - x0| < exclusion.
inline double restricted_difference(const Grid& coarse, const Field& a, const Grid& fine, const Field& b,
                                    double exclusion) {
    require(fine.half_width == coarse.half_width && fine.dim == coarse.dim, "grids must cover the same box");
    const double ratio = coarse.spacing / fine.spacing;
    const int step = static_cast<int>(std::lround(ratio));
    require(std::abs(ratio - step) < 1e-9, "fine spacing must divide the coarse spacing");
    double worst = 0.0;
    for (NodeIndex i = 0; i < coarse.size(); ++i) {
        if (coarse.radius(i) < exclusion) continue;
        MultiIndex m = coarse.multi(i);
        for (int k = 0; k < coarse.dim; ++k) m[k] *= step;
        worst = std::max(worst, std::abs(a[static_cast<Eigen::Index>(i)] - b[static_cast<Eigen::Index>(fine.linear(m))]));
    }
    return worst;
}

struct ConvergenceOptions {
    double s = 1e-3;
    double epsilon = 1e-3;
    double tolerance = 1e-8;
    bool cross_routes = true;
};

/// Refinement study of the LCP route plus a three-route comparison at the coarsest spacing.
/// Successive differences skip a ball of radius 4 h_max around the pole, where v inherits
/// the grid-dependent singular part of G.
inline ConvergenceReport convergence_study(int dim, double M, const CoefficientField& coeff, double R,
                                           const std::vector<double>& h_list, const ConvergenceOptions& opts = {}) {
    require(h_list.size() >= 2, "convergence study needs at least two spacings");
    ConvergenceReport rep;
    rep.exclusion_radius = 4.0 * h_list.front();
    LcpOptions lcp;
    lcp.tolerance = opts.tolerance;
    std::vector<Grid> grids;
    std::vector<Field> fields;
    for (std::size_t i = 0; i < h_list.size(); ++i) {
        const bool first = i == 0;
        const Instance in = make_instance(dim, M, h_list[i], coeff, false);
        const ObstacleProblem prob = in.problem(R);
        ObstacleSolution s = solve_lcp(prob, lcp);
        if (!s.converged) throw ConvergenceError(s.message);
        if (first && opts.cross_routes) {
            rep.max_v = s.v.maxCoeff();
            const ObstacleSolution semi = solve_penalized_semilinear(prob, PenaltyProfile{opts.s}, opts.tolerance);
            if (!semi.converged) throw ConvergenceError(semi.message);
            PenaltyOptions po;
            po.tolerance = opts.tolerance;
            const ObstacleSolution var = solve_variational_penalty(prob, opts.epsilon, po);
            if (!var.converged) throw ConvergenceError(var.message);
            rep.routes.push_back({"lcp", "semilinear", (s.v - semi.v).lpNorm<Eigen::Infinity>()});
            rep.routes.push_back({"lcp", "variational", (s.v - var.v).lpNorm<Eigen::Infinity>()});
            rep.routes.push_back({"semilinear", "variational", (semi.v - var.v).lpNorm<Eigen::Infinity>()});
        }
        rep.spacings.push_back(h_list[i]);
        grids.push_back(in.grid);
        fields.push_back(std::move(s.v));
    }
    for (std::size_t i = 1; i < grids.size(); ++i)
        rep.successive.push_back(
            restricted_difference(grids[i - 1], fields[i - 1], grids[i], fields[i], rep.exclusion_radius));
    rep.successive_decreasing = true;
    for (std::size_t i = 1; i < rep.successive.size(); ++i)
        rep.successive_decreasing = rep.successive_decreasing && rep.successive[i] < rep.successive[i - 1];
    rep.route_bound = 5.0 * (opts.s + opts.epsilon + opts.tolerance);
    rep.routes_agree = true;
    for (const auto& r : rep.routes) rep.routes_agree = rep.routes_agree && r.difference <= rep.route_bound;
    rep.passed = rep.successive_decreasing && rep.routes_agree;
    return rep;
}

inline void to_json(nlohmann::json& j, const GrowthPoint& p) {
    j = {{"node", p.node}, {"point", p.point}, {"radii", p.radii}, {"sup_values", p.sup_values},
         {"slope", p.slope}, {"ratio", p.ratio}, {"passed", p.passed}};
}

inline void to_json(nlohmann::json& j, const GrowthReport& r) {
    j = {{"points", r.points},       {"requested", r.requested}, {"available", r.available},
         {"low_sample", r.low_sample}, {"slope_lo", r.slope_lo},   {"slope_hi", r.slope_hi},
         {"max_ratio", r.max_ratio},   {"slope_min", r.slope_min}, {"slope_max", r.slope_max},
         {"ratio_max", r.ratio_max},   {"passed", r.passed}};
}

inline void to_json(nlohmann::json& j, const DecayReport& r) {
    j = {{"spacings", r.spacings},
         {"band_cells", r.band_cells},
         {"band_measure", r.band_measure},
         {"slope", r.slope},
         {"dimension", r.dimension},
         {"strictly_decreasing", r.strictly_decreasing},
         {"min_codimension", r.min_codimension},
         {"passed", r.passed}};
}

inline void to_json(nlohmann::json& j, const ConvergenceReport& r) {
    nlohmann::json routes = nlohmann::json::array();
    for (const auto& d : r.routes) routes.push_back({{"a", d.a}, {"b", d.b}, {"difference", d.difference}});
    j = {{"spacings", r.spacings},
         {"successive", r.successive},
         {"exclusion_radius", r.exclusion_radius},
         {"routes", routes},
         {"route_bound", r.route_bound},
         {"max_v", r.max_v},
         {"successive_decreasing", r.successive_decreasing},
         {"routes_agree", r.routes_agree},
         {"passed", r.passed}};
}

}  // namespace mvs
