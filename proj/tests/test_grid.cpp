#include <gtest/gtest.h>

#include <Eigen/SparseCholesky>

#include "mvs/coefficients.hpp"
#include "mvs/grid.hpp"
#include "mvs/linear_solve.hpp"
#include "mvs/operator.hpp"

using namespace mvs;

TEST(Grid, CountsNodesAndCenter) {
    const Grid g = build_grid(2, 1.0, 0.25);
    EXPECT_EQ(g.per_axis, 9);
    EXPECT_EQ(g.size(), 81u);
    const MultiIndex c = g.multi(g.center_index());
    EXPECT_EQ(c[0], 4);
    EXPECT_EQ(c[1], 4);
    const Point p = g.coords(g.center_index());
    EXPECT_EQ(p[0], 0.0);
    EXPECT_EQ(p[1], 0.0);

    const Grid g3 = build_grid(3, 2.0, 0.5);
    EXPECT_EQ(g3.per_axis, 9);
    EXPECT_EQ(g3.size(), 729u);
}

TEST(Grid, RejectsOddCellCount) {
    EXPECT_THROW(build_grid(2, 1.0, 0.3), SizingError);
    EXPECT_THROW(build_grid(2, 1.0, 2.0 / 3.0), SizingError);
    EXPECT_THROW(build_grid(4, 1.0, 0.25), SizingError);
}

TEST(Grid, IndexRoundTripFirstAxisFastest) {
    const Grid g = build_grid(3, 1.0, 0.25);
    EXPECT_EQ(g.linear({1, 0, 0}), 1u);
    EXPECT_EQ(g.linear({0, 1, 0}), 9u);
    EXPECT_EQ(g.linear({0, 0, 1}), 81u);
    for (NodeIndex i = 0; i < g.size(); ++i) EXPECT_EQ(g.linear(g.multi(i)), i);
    EXPECT_EQ(g.node_at({0.5, -1.0, 0.0}), static_cast<long long>(g.linear({6, 0, 4})));
    EXPECT_EQ(g.node_at({0.125, 0.0, 0.0}), -1);
}

TEST(Coefficients, ConstantIsIdentity) {
    const auto c = make_coefficients(CoefficientKind::constant, {}, 0);
    EXPECT_EQ(c.lambda(), 1.0);
    EXPECT_EQ(c.Lambda(), 1.0);
    const CoefficientMatrix a = c.at({0.3, -0.7, 0.1}, 3);
    EXPECT_TRUE(a.isApprox(CoefficientMatrix::Identity()));
}

TEST(Coefficients, CheckerboardBounds) {
    CoefficientParams p;
    p.alpha = 1.0;
    p.beta = 10.0;
    p.block = 0.5;
    const auto c = make_coefficients(CoefficientKind::checkerboard, p, 0);
    EXPECT_EQ(c.lambda(), 1.0);
    EXPECT_EQ(c.Lambda(), 10.0);
    EXPECT_EQ(c.at({0.1, 0.1, 0}, 2)(0, 0), 1.0);
    EXPECT_EQ(c.at({0.6, 0.1, 0}, 2)(0, 0), 10.0);
    EXPECT_EQ(c.at({-0.1, 0.1, 0}, 2)(1, 1), 10.0);
    EXPECT_EQ(c.at({-0.1, -0.1, 0}, 2)(1, 1), 1.0);
}

TEST(Coefficients, RandomPiecewiseIsDeterministicAndElliptic) {
    CoefficientParams p;
    p.lambda = 1.0;
    p.Lambda = 5.0;
    p.block = 0.25;
    const auto a = make_coefficients(CoefficientKind::random_piecewise, p, 7);
    const auto b = make_coefficients(CoefficientKind::random_piecewise, p, 7);
    const auto other = make_coefficients(CoefficientKind::random_piecewise, p, 8);
    bool differs = false;
    for (double x = -1.0; x <= 1.0; x += 0.0625)
        for (double y = -1.0; y <= 1.0; y += 0.0625) {
            const CoefficientMatrix ma = a.at({x, y, 0}, 2);
            const CoefficientMatrix mb = b.at({x, y, 0}, 2);
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) EXPECT_EQ(ma(i, j), mb(i, j));
            EXPECT_NO_THROW(check_ellipticity(ma, 2, 1.0, 5.0, {x, y, 0}));
            differs = differs || !ma.isApprox(other.at({x, y, 0}, 2));
        }
    EXPECT_TRUE(differs);
}

TEST(Coefficients, RejectsNonElliptic) {
    CoefficientParams p;
    p.alpha = 0.0;
    EXPECT_THROW(make_coefficients(CoefficientKind::checkerboard, p, 0), EllipticityError);
    CoefficientMatrix bad = CoefficientMatrix::Identity();
    bad(0, 0) = 20.0;
    EXPECT_THROW(check_ellipticity(bad, 2, 1.0, 10.0, {0, 0, 0}), EllipticityError);
}

TEST(Operator, FivePointLaplacian) {
    const Grid g = build_grid(2, 1.0, 0.125);
    const auto op = assemble(g, make_coefficients(CoefficientKind::constant, {}, 0));
    const double h2 = g.spacing * g.spacing;
    const NodeIndex c = g.center_index();
    EXPECT_NEAR(op.matrix.coeff(c, c) * h2, 4.0, 1e-12);
    EXPECT_NEAR(op.matrix.coeff(c, c + 1) * h2, -1.0, 1e-12);
    EXPECT_NEAR(op.matrix.coeff(c, c - 1) * h2, -1.0, 1e-12);
    EXPECT_NEAR(op.matrix.coeff(c, c + g.stride(1)) * h2, -1.0, 1e-12);
    EXPECT_NEAR(op.matrix.coeff(c, c - g.stride(1)) * h2, -1.0, 1e-12);
    int nonzeros = 0;
    for (SparseMatrix::InnerIterator it(op.matrix, static_cast<int>(c)); it; ++it) nonzeros += it.value() != 0.0;
    EXPECT_EQ(nonzeros, 5);
    EXPECT_TRUE(op.mmatrix_violations.empty());
}

TEST(Operator, SevenPointLaplacian) {
    const Grid g = build_grid(3, 1.0, 0.25);
    const auto op = assemble(g, make_coefficients(CoefficientKind::constant, {}, 0));
    const double h2 = g.spacing * g.spacing;
    const NodeIndex c = g.center_index();
    EXPECT_NEAR(op.matrix.coeff(c, c) * h2, 6.0, 1e-12);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(op.matrix.coeff(c, c + g.stride(k)) * h2, -1.0, 1e-12);
}

TEST(Operator, CheckerboardSymmetricWithZeroRowSums) {
    CoefficientParams p;
    p.alpha = 1.0;
    p.beta = 10.0;
    p.block = 0.5;
    const Grid g = build_grid(2, 1.0, 0.0625);
    const auto op = assemble(g, make_coefficients(CoefficientKind::checkerboard, p, 0));
    const SparseMatrix diff = SparseMatrix(op.matrix.transpose()) - op.matrix;
    EXPECT_LE(diff.norm(), 1e-12 * op.matrix.norm());
    const double h2 = g.spacing * g.spacing;
    for (NodeIndex i = 0; i < g.size(); ++i) {
        if (op.is_boundary(i)) continue;
        double sum = 0.0;  // direct summation over both blocks of the unreduced row
        for (SparseMatrix::InnerIterator it(op.matrix, static_cast<int>(i)); it; ++it) sum += it.value();
        for (SparseMatrix::InnerIterator it(op.boundary_coupling, static_cast<int>(i)); it; ++it) sum += it.value();
        EXPECT_LT(std::abs(sum), 1e-12 / h2);
    }
}

TEST(Operator, ReproducesLinearFunctionsWithCrossTerms) {
    CoefficientParams p;
    p.lambda = 1.0;
    p.Lambda = 3.0;
    p.block = 0.5;
    const Grid g = build_grid(2, 1.0, 0.0625);
    const auto coeff = make_coefficients(CoefficientKind::random_piecewise, p, 3);
    const auto op = assemble(g, coeff);
    // -div(a grad u) for a linear u vanishes wherever a is locally constant
    Field u(static_cast<Eigen::Index>(g.size()));
    for (NodeIndex i = 0; i < g.size(); ++i) {
        const Point x = g.coords(i);
        u[static_cast<Eigen::Index>(i)] = 0.7 * x[0] - 1.3 * x[1] + 0.2;
    }
    const Field Au = op.apply_full(u);
    for (NodeIndex i = 0; i < g.size(); ++i) {
        if (op.is_boundary(i)) continue;
        const Point x = g.coords(i);
        bool interior_of_block = true;
        for (int k = 0; k < 2; ++k) {
            const double t = (x[k] + 1.0) / p.block;
            const double f = t - std::floor(t);
            interior_of_block = interior_of_block && f * p.block > 1.5 * g.spacing &&
                                (1.0 - f) * p.block > 1.5 * g.spacing;
        }
        if (interior_of_block) {
            EXPECT_NEAR(Au[static_cast<Eigen::Index>(i)], 0.0, 1e-9);
        }
    }
}

TEST(Operator, BoundaryLiftMatchesFullApplication) {
    const Grid g = build_grid(2, 1.0, 0.125);
    const auto op = assemble(g, make_coefficients(CoefficientKind::constant, {}, 0));
    const auto n = static_cast<Eigen::Index>(g.size());
    Field data = Field::Zero(n);
    for (NodeIndex i = 0; i < g.size(); ++i)
        if (op.is_boundary(i)) data[static_cast<Eigen::Index>(i)] = 1.0 + g.coords(i)[0];
    // interior values zero: (A_full u)_i = (B g)_i
    const Field Au = op.apply_full(data);
    const Field lift = op.boundary_lift(data);
    for (NodeIndex i = 0; i < g.size(); ++i)
        if (!op.is_boundary(i)) {
            EXPECT_NEAR(Au[static_cast<Eigen::Index>(i)], -lift[static_cast<Eigen::Index>(i)], 1e-12);
        }
}

TEST(LinearSolve, MultigridPcgMatchesDirectSolve) {
    CoefficientParams p;
    p.alpha = 1.0;
    p.beta = 10.0;
    p.block = 0.5;
    for (int dim : {2, 3}) {
        const Grid g = build_grid(dim, 1.0, dim == 2 ? 1.0 / 32 : 0.125);
        const auto op = assemble(g, make_coefficients(CoefficientKind::checkerboard, p, 0));
        const auto n = static_cast<Eigen::Index>(g.size());
        Field b = Field::Zero(n);
        for (NodeIndex i = 0; i < g.size(); ++i)
            if (!op.is_boundary(i)) b[static_cast<Eigen::Index>(i)] = std::sin(3.0 * g.coords(i)[0]) + 0.5;
        Eigen::SimplicialLDLT<SparseMatrix> direct(op.matrix);
        const Field ref = direct.solve(b);
        PcgReport rep;
        PcgOptions opts;
        opts.relative_tolerance = 1e-12;
        const Field x = solve_spd(op, b, opts, &rep);
        EXPECT_TRUE(rep.converged);
        EXPECT_LT(rep.iterations, 40);
        EXPECT_LE((x - ref).lpNorm<Eigen::Infinity>(), 1e-9 * ref.lpNorm<Eigen::Infinity>());
    }
}

TEST(LinearSolve, ShiftedPreconditionerSolvesShiftedSystem) {
    const Grid g = build_grid(2, 1.0, 1.0 / 32);
    const auto op = assemble(g, make_coefficients(CoefficientKind::constant, {}, 0));
    const auto n = static_cast<Eigen::Index>(g.size());
    Field d = Field::Zero(n);
    for (NodeIndex i = 0; i < g.size(); ++i)
        if (!op.is_boundary(i) && g.radius(i) < 0.5) d[static_cast<Eigen::Index>(i)] = 500.0;
    SparseMatrix J = op.matrix;
    for (Eigen::Index i = 0; i < n; ++i) J.coeffRef(i, i) += d[i];
    const Multigrid mg(op.matrix, 2, g.per_axis);
    const auto shift = mg.make_shift(d);
    Field b = Field::Ones(n);
    for (NodeIndex i = 0; i < g.size(); ++i)
        if (op.is_boundary(i)) b[static_cast<Eigen::Index>(i)] = 0.0;
    Field x = Field::Zero(n);
    PcgOptions opts;
    opts.relative_tolerance = 1e-11;
    const PcgReport rep = pcg(J, b, x, mg.as_preconditioner(&shift), opts);
    EXPECT_TRUE(rep.converged);
    Eigen::SimplicialLDLT<SparseMatrix> direct(J);
    EXPECT_LE((x - direct.solve(b)).lpNorm<Eigen::Infinity>(), 1e-8);
    EXPECT_LT(rep.iterations, 30);
}
