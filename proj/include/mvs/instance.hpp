#pragma once

#include <memory>

#include "mvs/coefficients.hpp"
#include "mvs/greens.hpp"
#include "mvs/grid.hpp"
#include "mvs/linear_solve.hpp"
#include "mvs/obstacle.hpp"
#include "mvs/operator.hpp"

namespace mvs {

/// Grid, assembled operator, multigrid hierarchy and (optionally) the Green's
/// function with pole at the grid center, shared by every solve on one box.
struct Instance {
    Grid grid;
    std::shared_ptr<const DiscreteOperator> op;
    std::shared_ptr<const Multigrid> multigrid;
    std::shared_ptr<const GreensFunction> green;

    [[nodiscard]] ObstacleProblem problem(double R) const { return make_obstacle_problem(op, R, green, multigrid); }
};

inline Instance make_instance(int dim, double M, double h, const CoefficientField& coeff, bool with_green = true) {
    Instance in;
    in.grid = build_grid(dim, M, h);
    in.op = std::make_shared<const DiscreteOperator>(assemble(in.grid, coeff));
    in.multigrid = std::make_shared<const Multigrid>(in.op->matrix, dim, in.grid.per_axis);
    if (with_green)
        in.green = std::make_shared<const GreensFunction>(solve_green(*in.op, in.grid.center_index(), in.multigrid.get()));
    return in;
}

}  // namespace mvs
