#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mvs/greens.hpp"

using namespace mvs;

namespace {

DiscreteOperator laplacian(int dim, double M, double h) {
    return assemble(build_grid(dim, M, h), make_coefficients(CoefficientKind::constant, {}, 0));
}

CoefficientField checkerboard() {
    CoefficientParams p;
    p.alpha = 1.0;
    p.beta = 10.0;
    p.block = 0.5;
    return make_coefficients(CoefficientKind::checkerboard, p, 0);
}

/// Discrete harmonic function with boundary values g: interior solve of A u = -B g.
Field harmonic_extension(const DiscreteOperator& op, const Field& g) {
    PcgOptions opts;
    opts.relative_tolerance = 1e-12;
    Field u = solve_spd(op, op.boundary_lift(g), opts);
    for (NodeIndex i = 0; i < op.size(); ++i)
        if (op.is_boundary(i)) u[static_cast<Eigen::Index>(i)] = g[static_cast<Eigen::Index>(i)];
    return u;
}

}  // namespace

TEST(Greens, ThreeDimensionalMatchesFundamentalSolution) {
    const auto op = laplacian(3, 2.0, 1.0 / 16);
    const Grid& g = op.grid;
    const GreensFunction G = solve_green(op);
    const auto n = static_cast<Eigen::Index>(g.size());
    Field phi_boundary = Field::Zero(n);
    for (NodeIndex i = 0; i < g.size(); ++i)
        if (op.is_boundary(i)) phi_boundary[static_cast<Eigen::Index>(i)] = 1.0 / (4.0 * std::numbers::pi * g.radius(i));
    const Field H = harmonic_extension(op, phi_boundary);
    double worst = 0.0;
    for (NodeIndex i = 0; i < g.size(); ++i) {
        const double r = g.radius(i);
        if (r < 4.0 * g.spacing || r > 0.5 * g.half_width) continue;
        const double phi = 1.0 / (4.0 * std::numbers::pi * r);
        worst = std::max(worst, std::abs(G.values[static_cast<Eigen::Index>(i)] + H[static_cast<Eigen::Index>(i)] - phi) / phi);
    }
    EXPECT_LE(worst, 0.10);
}

TEST(Greens, TwoDimensionalRemainderObeysMaximumPrinciple) {
    const auto op = laplacian(2, 1.0, 1.0 / 64);
    const Grid& g = op.grid;
    const GreensFunction G = solve_green(op);
    const double r0 = 4.0 * g.spacing;
    // remainder D = G + log|x| / (2 pi) on the annulus r >= r0
    auto remainder = [&](NodeIndex i) {
        return G.values[static_cast<Eigen::Index>(i)] + std::log(g.radius(i)) / (2.0 * std::numbers::pi);
    };
    double edge_max = -1e300, edge_min = 1e300, inner_max = -1e300, inner_min = 1e300;
    for (NodeIndex i = 0; i < g.size(); ++i) {
        const double r = g.radius(i);
        if (r < r0) continue;
        const double d = remainder(i);
        const bool edge = op.is_boundary(i) || r < r0 + g.spacing;
        if (edge) {
            edge_max = std::max(edge_max, d);
            edge_min = std::min(edge_min, d);
        } else {
            inner_max = std::max(inner_max, d);
            inner_min = std::min(inner_min, d);
        }
    }
    const double slack = 1e-3 * (edge_max - edge_min);
    EXPECT_LE(inner_max, edge_max + slack);
    EXPECT_GE(inner_min, edge_min - slack);
}

TEST(Greens, NonnegativeWithMaximumAtPole) {
    const auto op = assemble(build_grid(2, 1.0, 1.0 / 32), checkerboard());
    const GreensFunction G = solve_green(op);
    EXPECT_GE(G.values.minCoeff(), 0.0);
    Eigen::Index at = 0;
    G.values.maxCoeff(&at);
    EXPECT_EQ(static_cast<NodeIndex>(at), op.grid.center_index());
    EXPECT_TRUE(G.solve_report.converged);
}

TEST(Greens, CapLevelsOfRadialFunction) {
    const auto op = laplacian(3, 1.0, 1.0 / 32);
    const GreensFunction G = solve_green(op);
    const CapLevels a = cap_levels(op, G, 0.25);
    const CapLevels b = cap_levels(op, G, 0.4);
    EXPECT_LT(a.small, a.big);
    EXPECT_GT(b.small, 0.0);
    EXPECT_GE(a.small, b.big);
    const double phi = 1.0 / (4.0 * std::numbers::pi * 0.25);
    EXPECT_LT(a.small, phi);
    EXPECT_GT(a.big, 0.5 * phi);
    EXPECT_THROW(cap_levels(op, G, op.grid.spacing), PreconditionError);
}

TEST(Greens, RecappingAtHigherLevelIsIdempotent) {
    const auto op = laplacian(2, 1.0, 1.0 / 32);
    const GreensFunction G = solve_green(op);
    const CapLevels c = cap_levels(op, G, 0.25);
    const CappedGreen once = cap_green(G.values, c.small, 0.25);
    const CappedGreen twice = cap_green(once.values, c.big, 0.25);
    EXPECT_EQ((once.values - twice.values).lpNorm<Eigen::Infinity>(), 0.0);
}

TEST(Greens, EnvelopeForLaplacian) {
    const auto op = laplacian(3, 2.0, 1.0 / 16);
    const GreensFunction G = solve_green(op);
    const BoundReport rep = check_lsw_bounds(op, G, 4.0 * op.grid.spacing, 0.5);
    EXPECT_TRUE(rep.passed) << "c2/c1 = " << rep.ratio;
    EXPECT_GT(rep.c1, 0.0);
}

TEST(Greens, EnvelopeForCheckerboardStableUnderRefinement) {
    std::vector<double> ratios;
    for (double h : {0.125, 0.0625}) {
        const auto op = assemble(build_grid(3, 2.0, h), checkerboard());
        const GreensFunction G = solve_green(op);
        const BoundReport rep = check_lsw_bounds(op, G, 0.5, 1.0, 1e9);
        EXPECT_TRUE(std::isfinite(rep.c1) && rep.c1 > 0.0);
        ratios.push_back(rep.ratio);
    }
    EXPECT_LE(std::abs(ratios[1] - ratios[0]) / ratios[0], 0.25) << ratios[0] << " vs " << ratios[1];
}

TEST(Greens, ScalingCoefficientsHalvesGreen) {
    const Grid g = build_grid(3, 2.0, 0.125);
    const CoefficientField a = checkerboard();
    const auto op1 = assemble(g, a);
    const auto op2 = assemble(g, a.scaled(2.0));
    const GreensFunction G1 = solve_green(op1, g.center_index(), nullptr, 1e-12);
    const GreensFunction G2 = solve_green(op2, g.center_index(), nullptr, 1e-12);
    EXPECT_LE((G1.values - 2.0 * G2.values).lpNorm<Eigen::Infinity>(), 1e-9 * G1.values.maxCoeff());
    const BoundReport r1 = check_lsw_bounds(op1, G1, 0.5, 1.0, 1e9);
    const BoundReport r2 = check_lsw_bounds(op2, G2, 0.5, 1.0, 1e9);
    EXPECT_NEAR(r1.ratio, r2.ratio, 1e-8 * r1.ratio);
}

TEST(Greens, EnvelopeRejectsDimensionTwo) {
    const auto op = laplacian(2, 1.0, 1.0 / 16);
    const GreensFunction G = solve_green(op);
    EXPECT_THROW(check_lsw_bounds(op, G, 0.25, 0.5), PreconditionError);
}
