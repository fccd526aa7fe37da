#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/SparseCholesky>

#include "mvs/errors.hpp"
#include "mvs/greens.hpp"
#include "mvs/linear_solve.hpp"
#include "mvs/operator.hpp"

namespace mvs {

/// Obstacle problem in normal form for v = G - w:
///   v >= 0,  A v - b + q >= 0,  v (A v - b + q) = 0,
/// with b = e_{x0} / h^dim and q = R^{-dim}.
struct ObstacleProblem {
    std::shared_ptr<const DiscreteOperator> op;
    std::shared_ptr<const GreensFunction> green;  // optional; needed to map v back to w
    std::shared_ptr<const Multigrid> multigrid;    // optional; built on demand by the penalized routes
    double R = 1.0;
    double q = 1.0;
    NodeIndex x0 = 0;
    double source_weight = 1.0;  // b = source_weight * e_{x0} / h^dim

    /// Source vector b.
    [[nodiscard]] Field rhs() const {
        Field b = Field::Zero(static_cast<Eigen::Index>(op->size()));
        b[static_cast<Eigen::Index>(x0)] = source_weight / op->grid.cell_volume();
        return b;
    }
};

/// Builds a problem with q = R^{-dim}; R = +infinity gives q = 0.
inline ObstacleProblem make_obstacle_problem(std::shared_ptr<const DiscreteOperator> op, double R,
                                             std::shared_ptr<const GreensFunction> green = nullptr,
                                             std::shared_ptr<const Multigrid> multigrid = nullptr) {
    require(op != nullptr, "obstacle problem needs an operator");
    require(R > 0.0, "R must be positive");
    ObstacleProblem p;
    p.op = std::move(op);
    p.green = std::move(green);
    p.multigrid = std::move(multigrid);
    p.R = R;
    p.q = std::pow(R, -static_cast<double>(p.op->grid.dim));
    p.x0 = p.green ? p.green->source_index : p.op->grid.center_index();
    require(!p.op->is_boundary(p.x0), "x0 must be an interior node");
    return p;
}

struct ObstacleSolution {
    Field v;
    std::vector<std::uint8_t> active;  // v > threshold
    double threshold = 0.0;
    double comp_residual = 0.0;        // max |min(v_i, (A v - b + q)_i)|
    double comp_product = 0.0;         // max v_i (A v - b + q)_i over v_i > 0
    double min_value = 0.0;
    std::string solver;
    int iterations = 0;
    double tolerance = 0.0;
    bool converged = false;
    std::string message;
    double R = 0.0;
    double q = 0.0;
    NodeIndex x0 = 0;

    [[nodiscard]] std::size_t active_count() const {
        return static_cast<std::size_t>(std::count(active.begin(), active.end(), std::uint8_t{1}));
    }

    /// w = G - v.
    [[nodiscard]] Field w(const GreensFunction& G) const { return G.values - v; }
};

/// Residual A v - b + q on interior nodes, zero on the boundary.
inline Field lcp_residual(const ObstacleProblem& prob, const Field& v) {
    const DiscreteOperator& op = *prob.op;
    Field r = op.matrix * v - prob.rhs();
    for (NodeIndex i = 0; i < op.size(); ++i)
        r[static_cast<Eigen::Index>(i)] = op.is_boundary(i) ? 0.0 : r[static_cast<Eigen::Index>(i)] + prob.q;
    return r;
}

/// Fills the complementarity diagnostics and the active set of sol.v.
inline void finalize_solution(const ObstacleProblem& prob, ObstacleSolution& sol, double threshold) {
    const DiscreteOperator& op = *prob.op;
    const Field r = lcp_residual(prob, sol.v);
    sol.threshold = threshold;
    sol.comp_residual = 0.0;
    sol.comp_product = 0.0;
    sol.min_value = sol.v.size() ? sol.v.minCoeff() : 0.0;
    sol.active.assign(op.size(), 0);
    for (NodeIndex i = 0; i < op.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        if (sol.v[k] > threshold) sol.active[i] = 1;
        if (op.is_boundary(i)) continue;
        sol.comp_residual = std::max(sol.comp_residual, std::abs(std::min(sol.v[k], r[k])));
        if (sol.v[k] > 0.0) sol.comp_product = std::max(sol.comp_product, sol.v[k] * r[k]);
    }
    sol.R = prob.R;
    sol.q = prob.q;
    sol.x0 = prob.x0;
}

// ---------------------------------------------------------------------------
// Projected SOR

struct LcpOptions {
    double tolerance = 1e-8;
    double omega = 1.7;
    long max_sweeps = -1;  // <= 0: 200 * nodes^{1/dim}
    int check_every = 10;
};

namespace detail {

struct Box {
    MultiIndex lo{0, 0, 0};
    MultiIndex hi{-1, -1, -1};
    [[nodiscard]] bool empty(int dim) const {
        for (int k = 0; k < dim; ++k)
            if (hi[k] < lo[k]) return true;
        return false;
    }
    void include(const MultiIndex& m, int dim) {
        if (empty(dim)) {
            lo = m;
            hi = m;
            return;
        }
        for (int k = 0; k < dim; ++k) {
            lo[k] = std::min(lo[k], m[k]);
            hi[k] = std::max(hi[k], m[k]);
        }
    }
    void merge(const Box& o, int dim) {
        if (o.empty(dim)) return;
        include(o.lo, dim);
        include(o.hi, dim);
    }
    /// Grows by one node and clamps to the interior index range [1, n-2].
    [[nodiscard]] Box dilated(int dim, int n) const {
        Box b = *this;
        for (int k = 0; k < dim; ++k) {
            b.lo[k] = std::max(1, lo[k] - 1);
            b.hi[k] = std::min(n - 2, hi[k] + 1);
        }
        return b;
    }
};

template <class F>
void for_each_in_box(const Grid& g, const Box& box, F&& f) {
    if (box.empty(g.dim)) return;
    const bool three = g.dim == 3;
    for (int z = three ? box.lo[2] : 0; z <= (three ? box.hi[2] : 0); ++z)
        for (int y = box.lo[1]; y <= box.hi[1]; ++y) {
            NodeIndex i = g.linear({box.lo[0], y, z});
            for (int x = box.lo[0]; x <= box.hi[0]; ++x, ++i) f(i, MultiIndex{x, y, z});
        }
}

}  // namespace detail

/// Projected successive over-relaxation, lexicographic sweep order. Sweeps are
/// restricted to the bounding box of the current support plus a one-node halo:
/// outside it v = 0 and the residual q - b_i >= 0 already holds.
inline ObstacleSolution solve_lcp(const ObstacleProblem& prob, const LcpOptions& opts = {}) {
    require(opts.tolerance >= 1e-10, "LCP tolerance must be at least 1e-10");
    require(opts.omega > 0.0 && opts.omega < 2.0, "relaxation parameter must lie in (0, 2)");
    const DiscreteOperator& op = *prob.op;
    const Grid& g = op.grid;
    const Field b = prob.rhs();
    const double q = prob.q;
    const long cap = opts.max_sweeps > 0 ? opts.max_sweeps : 200L * g.per_axis;

    ObstacleSolution sol;
    sol.solver = "lcp";
    sol.tolerance = opts.tolerance;
    sol.v = Field::Zero(static_cast<Eigen::Index>(op.size()));

    detail::Box seeds;
    for (NodeIndex i = 0; i < op.size(); ++i)
        if (!op.is_boundary(i) && b[static_cast<Eigen::Index>(i)] - q > 0.0) seeds.include(g.multi(i), g.dim);

    const int* outer = op.matrix.outerIndexPtr();
    const int* inner = op.matrix.innerIndexPtr();
    const double* val = op.matrix.valuePtr();
    std::vector<double> inv_diag(op.size(), 0.0);
    for (NodeIndex i = 0; i < op.size(); ++i) inv_diag[i] = 1.0 / op.diagonal(i);

    double* v = sol.v.data();
    const double* bp = b.data();
    const double omega = opts.omega;

    auto residual_in = [&](const detail::Box& box) {
        double worst = 0.0;
        detail::for_each_in_box(g, box, [&](NodeIndex i, const MultiIndex&) {
            double Av = 0.0;
            for (int k = outer[i]; k < outer[i + 1]; ++k) Av += val[k] * v[inner[k]];
            const double r = Av - bp[i] + q;
            worst = std::max(worst, std::abs(std::min(v[i], r)));
        });
        return worst;
    };

    detail::Box region = seeds.dilated(g.dim, g.per_axis);
    if (seeds.empty(g.dim)) {
        sol.converged = true;
        finalize_solution(prob, sol, 10.0 * opts.tolerance);
        sol.message = "no source above the density; v = 0";
        return sol;
    }

    long sweep = 0;
    double res = std::numeric_limits<double>::infinity();
    while (sweep < cap) {
        ++sweep;
        detail::Box support;
        detail::for_each_in_box(g, region, [&](NodeIndex i, const MultiIndex& m) {
            double sigma = 0.0;
            for (int k = outer[i]; k < outer[i + 1]; ++k) {
                const int j = inner[k];
                if (static_cast<NodeIndex>(j) != i) sigma += val[k] * v[j];
            }
            const double gs = (bp[i] - q - sigma) * inv_diag[i];
            const double next = std::max(0.0, v[i] + omega * (gs - v[i]));
            v[i] = next;
            if (next > 0.0) support.include(m, g.dim);
        });
        support.merge(seeds, g.dim);
        detail::Box next_region = support.dilated(g.dim, g.per_axis);
        const bool grew = [&] {
            for (int k = 0; k < g.dim; ++k)
                if (next_region.lo[k] < region.lo[k] || next_region.hi[k] > region.hi[k]) return true;
            return false;
        }();
        // never shrink: nodes that left the support stay zero inside the old box anyway
        region.merge(next_region, g.dim);
        if (!grew && sweep % opts.check_every == 0) {
            res = residual_in(region);
            if (res <= opts.tolerance) break;
        }
    }
    sol.iterations = static_cast<int>(sweep);
    finalize_solution(prob, sol, 10.0 * opts.tolerance);
    sol.converged = sol.comp_residual <= opts.tolerance;
    if (!sol.converged)
        sol.message = "projected SOR reached the sweep cap (" + std::to_string(cap) +
                      ") with complementarity residual " + std::to_string(sol.comp_residual);
    return sol;
}

// ---------------------------------------------------------------------------
// Penalized semilinear route

/// Phi_s(x) = Phi_1(x / s) for s > 0 and Phi_s(x) = Phi_{|s|}(x + |s|) for s < 0, with the
/// cubic smoothstep Phi_1(t) = 3t^2 - 2t^3 on [0, 1], 0 below and 1 above.
struct PenaltyProfile {
    double s = 1.0;

    [[nodiscard]] double width() const { return std::abs(s); }
    [[nodiscard]] double shift() const { return s < 0.0 ? -s : 0.0; }
    [[nodiscard]] double arg(double x) const { return (x + shift()) / width(); }

    [[nodiscard]] double value(double x) const {
        const double t = arg(x);
        if (t <= 0.0) return 0.0;
        if (t >= 1.0) return 1.0;
        return t * t * (3.0 - 2.0 * t);
    }
    [[nodiscard]] double derivative(double x) const {
        const double t = arg(x);
        if (t <= 0.0 || t >= 1.0) return 0.0;
        return 6.0 * t * (1.0 - t) / width();
    }
    /// Antiderivative vanishing at -infinity.
    [[nodiscard]] double primitive(double x) const {
        const double t = arg(x);
        if (t <= 0.0) return 0.0;
        if (t >= 1.0) return width() * (t - 0.5);
        return width() * t * t * t * (1.0 - 0.5 * t);
    }
};

inline void validate_profile(const PenaltyProfile& p) {
    require(p.s != 0.0 && std::abs(p.s) <= 1.0, "penalty width |s| must lie in (0, 1]");
}

struct SemilinearOptions {
    double tolerance = 1e-10;  // on max|F| relative to max(1, max|rhs|)
    int continuation_steps = 10;
    int max_newton = 60;
    int max_bisections = 8;
    double linear_tolerance = 1e-11;
};

struct SemilinearReport {
    int newton_iterations = 0;
    int linear_iterations = 0;
    int continuation_steps = 0;
    int bisections = 0;
    double residual = 0.0;
    bool converged = false;
    std::string message;
};

/// Solves A y + t c Phi(y) = rhs on interior nodes for t: 0 -> 1 (y = 0 on the
/// boundary) by damped Newton on the convex energy
///   E(y) = y.A y / 2 - rhs.y + t sum c_i Psi(y_i),
/// with continuation in t and bisection of a failed step.
inline Field solve_semilinear_system(const DiscreteOperator& op, const Field& rhs_in, const Field& weight,
                                     const PenaltyProfile& profile, const SemilinearOptions& opts = {},
                                     SemilinearReport* report = nullptr, const Multigrid* mg = nullptr) {
    validate_profile(profile);
    const auto n = static_cast<Eigen::Index>(op.size());
    require(rhs_in.size() == n && weight.size() == n, "semilinear system size mismatch");
    std::unique_ptr<Multigrid> own;
    if (mg == nullptr) {
        own = std::make_unique<Multigrid>(op.matrix, op.grid.dim, op.grid.per_axis);
        mg = own.get();
    }
    Field rhs = rhs_in;
    Field c = weight;
    for (NodeIndex i = 0; i < op.size(); ++i)
        if (op.is_boundary(i)) {
            rhs[static_cast<Eigen::Index>(i)] = 0.0;
            c[static_cast<Eigen::Index>(i)] = 0.0;
        }
    const double ftol = opts.tolerance * std::max(1.0, rhs.lpNorm<Eigen::Infinity>());

    SemilinearReport rep;
    PcgOptions lin;
    lin.relative_tolerance = opts.linear_tolerance;

    Field y = Field::Zero(n);
    {
        PcgReport pr = pcg(op.matrix, rhs, y, mg->as_preconditioner(), lin);
        if (pr.stagnated) throw ConvergenceError("linear solve at t = 0 stagnated");
    }

    auto residual = [&](const Field& x, double t) {
        Field F = op.matrix * x - rhs;
        for (Eigen::Index i = 0; i < n; ++i)
            if (c[i] != 0.0) F[i] += t * c[i] * profile.value(x[i]);
        return F;
    };

    // Newton at fixed t from x; returns false on failure (x left unchanged then)
    auto newton = [&](Field& x, double t) {
        Field z = x;
        Field F = residual(z, t);
        double fnorm = F.lpNorm<Eigen::Infinity>();
        for (int it = 0; it < opts.max_newton; ++it) {
            if (fnorm <= ftol) {
                x = z;
                rep.residual = fnorm;
                return true;
            }
            ++rep.newton_iterations;
            Field d = Field::Zero(n);
            for (Eigen::Index i = 0; i < n; ++i) d[i] = c[i] != 0.0 ? t * c[i] * profile.derivative(z[i]) : 0.0;
            const Multigrid::Shift shift = mg->make_shift(d);
            auto jacobian = [&](const Field& u, Field& out) {
                out.noalias() = op.matrix * u;
                out += d.cwiseProduct(u);
            };
            Field delta = Field::Zero(n);
            Field negF = -F;
            lin.relative_tolerance =
                fnorm > 1e3 * ftol ? 1e-2 : std::clamp(1e-3 * ftol / fnorm, opts.linear_tolerance, 1e-2);
            PcgReport pr = pcg(jacobian, negF, delta, mg->as_preconditioner(&shift), lin);
            rep.linear_iterations += pr.iterations;
            if (pr.stagnated) return false;
            const double slope = F.dot(delta);
            if (!(slope < 0.0)) return false;
            const Field Ad = op.matrix * delta;
            const double dAd = delta.dot(Ad);
            const Field g = op.matrix * z - rhs;
            const double gd = g.dot(delta);
            double alpha = 1.0;
            bool accepted = false;
            for (int ls = 0; ls < 40; ++ls) {
                double dE = alpha * gd + 0.5 * alpha * alpha * dAd;
                for (Eigen::Index i = 0; i < n; ++i)
                    if (c[i] != 0.0)
                        dE += t * c[i] * (profile.primitive(z[i] + alpha * delta[i]) - profile.primitive(z[i]));
                if (dE <= 1e-4 * alpha * slope) {
                    accepted = true;
                    break;
                }
                // the energy difference is at rounding level; fall back to residual decrease
                const Field trial = z + alpha * delta;
                const double tn = residual(trial, t).lpNorm<Eigen::Infinity>();
                if (tn < fnorm && std::abs(dE) <= 1e-13 * std::max(1.0, std::abs(alpha * slope))) {
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if (!accepted) {
                const Field trial = z + alpha * delta;
                if (residual(trial, t).lpNorm<Eigen::Infinity>() >= fnorm) return false;
            }
            z.noalias() += alpha * delta;
            F = residual(z, t);
            fnorm = F.lpNorm<Eigen::Infinity>();
        }
        if (fnorm <= ftol) {
            x = z;
            rep.residual = fnorm;
            return true;
        }
        rep.residual = fnorm;
        return false;
    };

    const int steps = std::max(1, opts.continuation_steps);
    double t_done = 0.0;
    double t_prev = -1.0;
    Field y_prev;
    for (int k = 1; k <= steps; ++k) {
        const double target = static_cast<double>(k) / steps;
        int depth = 0;
        while (t_done < target) {
            const double dt = (target - t_done) / std::pow(2.0, depth);
            const double t = std::min(target, t_done + dt);
            Field trial = y;
            if (t_prev >= 0.0) {
                // secant predictor, kept only when it lowers the residual
                Field guess = y + ((t - t_done) / (t_done - t_prev)) * (y - y_prev);
                if (residual(guess, t).norm() < residual(y, t).norm())
                    trial = std::move(guess);
            }
            if (newton(trial, t)) {
                y_prev = y;
                t_prev = t_done;
                y = std::move(trial);
                t_done = t;
                ++rep.continuation_steps;
                depth = 0;
            } else {
                ++depth;
                ++rep.bisections;
                if (depth > opts.max_bisections) {
                    rep.message = "Newton failed at t = " + std::to_string(t) + " after " +
                                  std::to_string(opts.max_bisections) + " step bisections (residual " +
                                  std::to_string(rep.residual) + ")";
                    rep.converged = false;
                    if (report) *report = rep;
                    return y;
                }
            }
        }
    }
    rep.converged = true;
    if (report) *report = rep;
    return y;
}

/// Penalized route in the v-variable: A v + q Phi_s(v) = b.
inline ObstacleSolution solve_penalized_semilinear(const ObstacleProblem& prob, const PenaltyProfile& profile,
                                                   double tol = 1e-8, SemilinearOptions opts = {}) {
    validate_profile(profile);
    const DiscreteOperator& op = *prob.op;
    std::shared_ptr<const Multigrid> mg = prob.multigrid;
    if (!mg) mg = std::make_shared<Multigrid>(op.matrix, op.grid.dim, op.grid.per_axis);
    const Field weight = Field::Constant(static_cast<Eigen::Index>(op.size()), prob.q);
    SemilinearReport rep;
    ObstacleSolution sol;
    sol.v = solve_semilinear_system(op, prob.rhs(), weight, profile, opts, &rep, mg.get());
    sol.solver = "semilinear";
    sol.iterations = rep.newton_iterations;
    sol.message = std::to_string(rep.linear_iterations) + " linear, " + std::to_string(rep.bisections) + " bisections";
    sol.tolerance = tol;
    sol.converged = rep.converged;
    if (!rep.message.empty()) sol.message = rep.message;
    finalize_solution(prob, sol, 10.0 * tol);
    return sol;
}

// ---------------------------------------------------------------------------
// Variational penalty route

struct PenaltyOptions {
    double tolerance = 1e-8;
    int max_iterations = 200;
    std::size_t direct_limit = 400000;  // free-node count up to which a sparse Cholesky is used
    std::optional<Field> initial;        // starting iterate; zero when absent
};

/// Minimizes the discrete J_eps in the v-variable,
///   v.A v / 2 - b.v + q sum v + (1/eps) sum (-v)_+,
/// by a primal-dual active set (semismooth Newton) iteration on the three node
/// states v > 0, v = 0 and v < 0. Returns v_eps; w_eps = G - v_eps.
inline ObstacleSolution solve_variational_penalty(const ObstacleProblem& prob, double epsilon,
                                                  const PenaltyOptions& opts = {}) {
    require(epsilon > 0.0, "epsilon must be positive");
    const DiscreteOperator& op = *prob.op;
    const auto n = static_cast<Eigen::Index>(op.size());
    const Field b = prob.rhs();
    const double q = prob.q;
    const double kappa = 1.0 / epsilon;

    enum State : std::uint8_t { Zero = 0, Pos = 1, Neg = 2 };
    std::vector<std::uint8_t> state(op.size(), Zero), previous;
    Field v = Field::Zero(n);
    if (opts.initial) {
        require(opts.initial->size() == n, "initial iterate must be a grid field");
        for (NodeIndex i = 0; i < op.size(); ++i)
            if (!op.is_boundary(i)) v[static_cast<Eigen::Index>(i)] = (*opts.initial)[static_cast<Eigen::Index>(i)];
    }
    Field mu(n);  // mu = -(A v - b + q)
    auto gradient = [&](const Field& x) {
        Field gr = op.matrix * x - b;
        for (NodeIndex i = 0; i < op.size(); ++i)
            gr[static_cast<Eigen::Index>(i)] = op.is_boundary(i) ? 0.0 : gr[static_cast<Eigen::Index>(i)] + q;
        return gr;
    };

    std::shared_ptr<const Multigrid> mg = prob.multigrid;
    ObstacleSolution sol;
    sol.solver = "variational";
    sol.tolerance = opts.tolerance;
    int it = 0;
    for (; it < opts.max_iterations; ++it) {
        mu = -gradient(v);
        previous = state;
        for (NodeIndex i = 0; i < op.size(); ++i) {
            if (op.is_boundary(i)) {
                state[i] = Zero;
                continue;
            }
            const auto k = static_cast<Eigen::Index>(i);
            const double cinv = 1.0 / op.diagonal(i);
            const double z = v[k] + cinv * mu[k];
            state[i] = z > 0.0 ? Pos : (z < -cinv * kappa ? Neg : Zero);
        }
        if (it > 0 && state == previous) break;

        std::vector<int> free_index(op.size(), -1);
        std::vector<NodeIndex> free_nodes;
        for (NodeIndex i = 0; i < op.size(); ++i)
            if (state[i] != Zero) {
                free_index[i] = static_cast<int>(free_nodes.size());
                free_nodes.push_back(i);
            }
        v.setZero();
        if (free_nodes.empty()) continue;
        Field rhs(static_cast<Eigen::Index>(free_nodes.size()));
        for (std::size_t f = 0; f < free_nodes.size(); ++f) {
            const NodeIndex i = free_nodes[f];
            rhs[static_cast<Eigen::Index>(f)] = b[static_cast<Eigen::Index>(i)] - q + (state[i] == Neg ? kappa : 0.0);
        }
        if (free_nodes.size() <= opts.direct_limit) {
            std::vector<Eigen::Triplet<double>> trip;
            trip.reserve(free_nodes.size() * 8);
            for (std::size_t f = 0; f < free_nodes.size(); ++f) {
                const int row = static_cast<int>(free_nodes[f]);
                for (SparseMatrix::InnerIterator e(op.matrix, row); e; ++e) {
                    const int col = free_index[static_cast<std::size_t>(e.col())];
                    if (col >= 0) trip.emplace_back(static_cast<int>(f), col, e.value());
                }
            }
            Eigen::SparseMatrix<double> Aff(static_cast<Eigen::Index>(free_nodes.size()),
                                            static_cast<Eigen::Index>(free_nodes.size()));
            Aff.setFromTriplets(trip.begin(), trip.end());
            Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(Aff);
            if (ldlt.info() != Eigen::Success) throw ConvergenceError("free-node factorization failed");
            const Field x = ldlt.solve(rhs);
            for (std::size_t f = 0; f < free_nodes.size(); ++f)
                v[static_cast<Eigen::Index>(free_nodes[f])] = x[static_cast<Eigen::Index>(f)];
        } else {
            // masked full-size system: fixed rows become diagonal with zero right-hand side
            if (!mg) mg = std::make_shared<Multigrid>(op.matrix, op.grid.dim, op.grid.per_axis);
            std::vector<Eigen::Triplet<double>> trip;
            Field full_rhs = Field::Zero(n);
            for (NodeIndex i = 0; i < op.size(); ++i) {
                const int row = static_cast<int>(i);
                if (free_index[i] < 0) {
                    trip.emplace_back(row, row, op.diagonal(i));
                    continue;
                }
                full_rhs[row] = rhs[free_index[i]];
                for (SparseMatrix::InnerIterator e(op.matrix, row); e; ++e)
                    if (free_index[static_cast<std::size_t>(e.col())] >= 0) trip.emplace_back(row, e.col(), e.value());
            }
            SparseMatrix masked(n, n);
            masked.setFromTriplets(trip.begin(), trip.end());
            PcgOptions lin;
            lin.relative_tolerance = 1e-12;
            PcgReport pr = pcg(masked, full_rhs, v, jacobi_preconditioner(masked), lin);
            if (pr.stagnated) throw ConvergenceError("masked penalty solve stagnated");
        }
    }
    sol.iterations = it;
    sol.v = v;
    // first-order residual: distance of the gradient to the subdifferential
    const Field gr = gradient(v);
    double res = 0.0;
    for (NodeIndex i = 0; i < op.size(); ++i) {
        if (op.is_boundary(i)) continue;
        const auto k = static_cast<Eigen::Index>(i);
        double r;
        if (state[i] == Pos)
            r = std::abs(gr[k]) + std::max(0.0, -v[k]);
        else if (state[i] == Neg)
            r = std::abs(gr[k] - kappa) + std::max(0.0, v[k]);
        else
            r = std::max({0.0, -gr[k], gr[k] - kappa});
        res = std::max(res, r);
    }
    const double scale = std::max(1.0, b.lpNorm<Eigen::Infinity>());
    sol.converged = it < opts.max_iterations && res <= opts.tolerance * scale;
    if (!sol.converged)
        sol.message = "active-set iteration stopped after " + std::to_string(it) + " iterations, first-order residual " +
                      std::to_string(res);
    finalize_solution(prob, sol, 10.0 * opts.tolerance);
    return sol;
}

/// Discrete J(w) = h^dim (w.A w - 2 q sum w) for w vanishing on the boundary.
inline double obstacle_energy(const DiscreteOperator& op, const Field& w, double q) {
    double s = 0.0;
    for (NodeIndex i = 0; i < op.size(); ++i)
        if (!op.is_boundary(i)) s += w[static_cast<Eigen::Index>(i)];
    return op.grid.cell_volume() * (w.dot(op.matrix * w) - 2.0 * q * s);
}

/// Discrete J_eps(w) = J(w) + 2 h^dim sum Phi_eps(G - w), Phi_eps(t) = -t/eps for t <= 0.
inline double penalized_energy(const DiscreteOperator& op, const Field& w, const Field& G, double q, double eps) {
    double pen = 0.0;
    for (NodeIndex i = 0; i < op.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        if (!op.is_boundary(i)) pen += std::max(0.0, w[k] - G[k]) / eps;
    }
    return obstacle_energy(op, w, q) + 2.0 * op.grid.cell_volume() * pen;
}

}  // namespace mvs
