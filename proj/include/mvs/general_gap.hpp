#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvs/errors.hpp"
#include "mvs/obstacle.hpp"

namespace mvs {

/// L w = Phi_s(w) f in the box, w = g on the boundary (w-variable, A = -L):
///   A w + Phi_s(w) f = -B g  on interior nodes.
struct GeneralObstacleProblem {
    std::shared_ptr<const DiscreteOperator> op;
    std::shared_ptr<const Multigrid> multigrid;  // optional
    Field f;                                     // density, interior nodes
    Field g;                                     // boundary data, boundary nodes
    double lambda_bar = 1.0;
    double Lambda_bar = 1.0;
};

inline GeneralObstacleProblem make_general_problem(std::shared_ptr<const DiscreteOperator> op, Field f, Field g,
                                                   std::shared_ptr<const Multigrid> multigrid = nullptr) {
    require(op != nullptr, "general problem needs an operator");
    const auto n = static_cast<Eigen::Index>(op->size());
    require(f.size() == n && g.size() == n, "density and boundary data must be grid fields");
    GeneralObstacleProblem p;
    p.lambda_bar = std::numeric_limits<double>::infinity();
    p.Lambda_bar = 0.0;
    bool nonzero = false;
    for (NodeIndex i = 0; i < op->size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        if (op->is_boundary(i)) {
            if (g[k] < 0.0) throw PreconditionError("boundary data must be nonnegative");
            if (g[k] > 0.0) nonzero = true;
            f[k] = 0.0;
        } else {
            if (!(f[k] > 0.0)) throw PreconditionError("density must be positive at interior nodes");
            p.lambda_bar = std::min(p.lambda_bar, f[k]);
            p.Lambda_bar = std::max(p.Lambda_bar, f[k]);
            g[k] = 0.0;
        }
    }
    require(nonzero, "boundary data must not vanish identically");
    p.op = std::move(op);
    p.multigrid = std::move(multigrid);
    p.f = std::move(f);
    p.g = std::move(g);
    return p;
}

/// f = density everywhere inside, g = boundary_value on the boundary layer.
inline GeneralObstacleProblem make_general_problem(std::shared_ptr<const DiscreteOperator> op, double density,
                                                   double boundary_value,
                                                   std::shared_ptr<const Multigrid> multigrid = nullptr) {
    const auto n = static_cast<Eigen::Index>(op->size());
    Field f = Field::Constant(n, density);
    Field g = Field::Constant(n, boundary_value);
    return make_general_problem(std::move(op), std::move(f), std::move(g), std::move(multigrid));
}

struct GeneralGapSolution {
    Field w;       // includes the boundary values g
    Field h_diag;  // Phi_s(w) f on interior nodes
    PenaltyProfile profile;
    SemilinearReport report;
    double min_w = 0.0;
    std::size_t full_density_nodes = 0;  // h_diag == f
    std::size_t zero_density_nodes = 0;  // h_diag == 0
    std::size_t intermediate_nodes = 0;  // free-boundary transition layer
    std::size_t gap_violations = 0;      // h_diag != f where Phi_s = 1 is forced, or != 0 where Phi_s = 0
};

inline GeneralGapSolution solve_general_gap(const GeneralObstacleProblem& prob, const PenaltyProfile& profile,
                                            double tol = 1e-10) {
    validate_profile(profile);
    const DiscreteOperator& op = *prob.op;
    std::shared_ptr<const Multigrid> mg = prob.multigrid;
    if (!mg) mg = std::make_shared<Multigrid>(op.matrix, op.grid.dim, op.grid.per_axis);
    SemilinearOptions opts;
    opts.tolerance = tol;
    GeneralGapSolution sol;
    sol.profile = profile;
    sol.w = solve_semilinear_system(op, op.boundary_lift(prob.g), prob.f, profile, opts, &sol.report, mg.get());
    if (!sol.report.converged) throw ConvergenceError(sol.report.message);
    const auto n = static_cast<Eigen::Index>(op.size());
    sol.h_diag = Field::Zero(n);
    // Phi_s(w) = 1 for w >= s (s > 0) or w >= 0 (s < 0); Phi_s(w) = 0 for w <= 0 (s > 0) or w <= s (s < 0)
    const double upper = profile.s > 0.0 ? profile.s : 0.0;
    const double lower = profile.s > 0.0 ? 0.0 : profile.s;
    for (NodeIndex i = 0; i < op.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        if (op.is_boundary(i)) {
            sol.w[k] = prob.g[k];
            continue;
        }
        const double hv = profile.value(sol.w[k]) * prob.f[k];
        sol.h_diag[k] = hv;
        if (hv == prob.f[k])
            ++sol.full_density_nodes;
        else if (hv == 0.0)
            ++sol.zero_density_nodes;
        else
            ++sol.intermediate_nodes;
        if ((sol.w[k] >= upper && hv != prob.f[k]) || (sol.w[k] <= lower && hv != 0.0)) ++sol.gap_violations;
    }
    sol.min_w = sol.w.minCoeff();
    return sol;
}

struct ComparisonItem {
    std::string name;
    std::string statement;
    bool passed = false;
    double violation = 0.0;  // largest amount by which the ordering fails (<= 0 when it holds strictly)
    NodeIndex worst_node = 0;
    Point worst_point{0.0, 0.0, 0.0};
};

struct ComparisonReport {
    double s0 = 1.0;
    double s1 = 0.5;
    double tolerance = 1e-8;
    std::vector<ComparisonItem> items;
    ComparisonItem reversed_item3;  // w_{s1} >= w_{s0}, reported only
    bool passed = false;
};

/// Nodewise orderings between the penalized solutions for s in {-s0, s0, s1}, 0 < s1 < s0 <= 1:
///   (1) w_{s0} >= 0, (2) w_{-s0} >= -s0, (3) w_{s1} <= w_{s0}, (4) w_{s0} <= w_{-s0} + 2 s0.
/// Ordering (3) follows from Phi_{s1} >= Phi_{s0}: the sharper ramp absorbs more density.
inline ComparisonReport comparison_suite(const GeneralObstacleProblem& prob, double s0, double s1,
                                         double tol = 1e-8) {
    require(s1 > 0.0 && s1 < s0 && s0 <= 1.0, "comparison suite needs 0 < s1 < s0 <= 1");
    const GeneralGapSolution a = solve_general_gap(prob, PenaltyProfile{s0});
    const GeneralGapSolution b = solve_general_gap(prob, PenaltyProfile{-s0});
    const GeneralGapSolution c = solve_general_gap(prob, PenaltyProfile{s1});
    const Grid& grid = prob.op->grid;

    auto item = [&](std::string name, std::string statement, const Field& excess) {
        ComparisonItem it;
        it.name = std::move(name);
        it.statement = std::move(statement);
        Eigen::Index at = 0;
        it.violation = excess.maxCoeff(&at);
        it.worst_node = static_cast<NodeIndex>(at);
        it.worst_point = grid.coords(it.worst_node);
        it.passed = it.violation <= tol;
        return it;
    };
    const auto n = a.w.size();
    ComparisonReport rep;
    rep.s0 = s0;
    rep.s1 = s1;
    rep.tolerance = tol;
    rep.items.push_back(item("positivity", "w_s0 >= 0", -a.w));
    rep.items.push_back(item("lower_bound", "w_-s0 >= -s0", Field::Constant(n, -s0) - b.w));
    rep.items.push_back(item("width_ordering", "w_s1 <= w_s0", c.w - a.w));
    rep.items.push_back(item("sign_gap", "w_s0 <= w_-s0 + 2 s0", a.w - b.w - Field::Constant(n, 2.0 * s0)));
    rep.reversed_item3 = item("width_ordering_reversed", "w_s1 >= w_s0", a.w - c.w);
    rep.passed = true;
    for (const auto& it : rep.items) rep.passed = rep.passed && it.passed;
    return rep;
}

inline void to_json(nlohmann::json& j, const ComparisonItem& it) {
    j = {{"name", it.name},
         {"statement", it.statement},
         {"passed", it.passed},
         {"violation", it.violation},
         {"worst_node", it.worst_node},
         {"worst_point", it.worst_point}};
}

inline void to_json(nlohmann::json& j, const ComparisonReport& r) {
    nlohmann::json reversed = r.reversed_item3;
    reversed.erase("passed");
    j = {{"s0", r.s0},
         {"s1", r.s1},
         {"tolerance", r.tolerance},
         {"items", r.items},
         {"reversed_width_ordering", reversed},
         {"passed", r.passed}};
}

}  // namespace mvs
