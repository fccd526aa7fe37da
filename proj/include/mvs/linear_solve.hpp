#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "mvs/errors.hpp"
#include "mvs/grid.hpp"
#include "mvs/operator.hpp"

namespace mvs {

struct PcgOptions {
    double relative_tolerance = 1e-10;
    double absolute_tolerance = 0.0;  // stop also when ||r||_2 <= this
    int max_iterations = 20000;
    int stagnation_window = 500;  // iterations without a 1% improvement of the best residual
};

struct PcgReport {
    int iterations = 0;
    double relative_residual = 0.0;
    bool converged = false;
    bool stagnated = false;
    std::vector<double> residual_history;  // relative residual per iteration
};

using Preconditioner = std::function<void(const Field& r, Field& z)>;

using LinearMap = std::function<void(const Field& x, Field& y)>;

/// Preconditioned conjugate gradients for a symmetric positive definite operator.
inline PcgReport pcg(const LinearMap& A, const Field& b, Field& x, const Preconditioner& precond,
                     const PcgOptions& opts = {}) {
    PcgReport rep;
    const double bnorm = b.norm();
    if (x.size() != b.size()) x = Field::Zero(b.size());
    if (bnorm == 0.0) {
        x.setZero();
        rep.converged = true;
        return rep;
    }
    Field Ap(b.size());
    A(x, Ap);
    Field r = b - Ap;
    Field z(b.size());
    precond(r, z);
    Field p = z;
    double rz = r.dot(z);
    double best = r.norm() / bnorm;
    int best_at = 0;
    rep.relative_residual = best;
    auto done = [&](double rel) {
        return rel <= opts.relative_tolerance || rel * bnorm <= opts.absolute_tolerance;
    };
    if (done(best)) {
        rep.converged = true;
        return rep;
    }
    for (int it = 1; it <= opts.max_iterations; ++it) {
        A(p, Ap);
        const double pAp = p.dot(Ap);
        if (!(pAp > 0.0)) break;
        const double alpha = rz / pAp;
        x.noalias() += alpha * p;
        r.noalias() -= alpha * Ap;
        const double rel = r.norm() / bnorm;
        rep.iterations = it;
        rep.relative_residual = rel;
        rep.residual_history.push_back(rel);
        if (done(rel)) {
            rep.converged = true;
            return rep;
        }
        if (rel < 0.99 * best) {
            best = rel;
            best_at = it;
        } else if (it - best_at >= opts.stagnation_window) {
            rep.stagnated = true;
            return rep;
        }
        precond(r, z);
        const double rz_new = r.dot(z);
        p = z + (rz_new / rz) * p;
        rz = rz_new;
    }
    return rep;
}

inline PcgReport pcg(const SparseMatrix& A, const Field& b, Field& x, const Preconditioner& precond,
                     const PcgOptions& opts = {}) {
    return pcg([&A](const Field& u, Field& y) { y.noalias() = A * u; }, b, x, precond, opts);
}

/// Geometric multigrid on the structured node lattice with Galerkin coarse
/// operators (A_c = P^T A P). Prolongation is tensor-product linear
/// interpolation from the even-index sublattice and never reads coarse
/// boundary nodes, so Dirichlet rows stay decoupled on every level.
/// One V-cycle with forward Gauss-Seidel pre-smoothing and backward post-smoothing
/// is a symmetric positive definite preconditioner.
class Multigrid {
public:
    Multigrid() = default;

    Multigrid(const SparseMatrix& A, int dim, int per_axis, int smoothing_steps = 2) : smoothing_(smoothing_steps) {
        build(A, dim, per_axis);
    }

    /// Nonnegative diagonal added to every level for A + diag(d): the fine level
    /// gets d, coarser levels the lumped Galerkin restriction P^T d.
    struct Shift {
        std::vector<Field> diagonal;
        std::shared_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> coarse;
    };

    [[nodiscard]] int levels() const { return static_cast<int>(levels_.size()); }

    [[nodiscard]] Shift make_shift(const Field& d) const {
        Shift s;
        s.diagonal.push_back(d);
        for (std::size_t l = 0; l + 1 < levels_.size(); ++l)
            s.diagonal.push_back(levels_[l].P.transpose() * s.diagonal.back());
        Eigen::SparseMatrix<double> Ac(levels_.back().A);
        Ac.diagonal() += s.diagonal.back();
        s.coarse = std::make_shared<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
        s.coarse->compute(Ac);
        return s;
    }

    /// One V-cycle on r, optionally for the shifted operator A + diag(d).
    void apply(const Field& r, Field& z, const Shift* shift = nullptr) const {
        z.setZero(r.size());
        vcycle(0, r, z, shift);
    }

    [[nodiscard]] Preconditioner as_preconditioner(const Shift* shift = nullptr) const {
        return [this, shift](const Field& r, Field& z) { apply(r, z, shift); };
    }

private:
    struct Level {
        SparseMatrix A;
        SparseMatrix P;  // maps the next coarser level into this one
        int per_axis = 0;
    };

    void build(const SparseMatrix& A, int dim, int per_axis) {
        levels_.clear();
        levels_.push_back({A, {}, per_axis});
        int n = per_axis;
        while ((n - 1) % 2 == 0 && n > 5) {
            const int nc = (n - 1) / 2 + 1;
            SparseMatrix P = prolongation(dim, n, nc);
            const SparseMatrix& Af = levels_.back().A;
            SparseMatrix AP = Af * P;
            SparseMatrix Ac = SparseMatrix(P.transpose()) * AP;
            Ac.prune(0.0);
            // coarse boundary nodes get no contribution; keep them as identity rows
            std::vector<Eigen::Triplet<double>> fix;
            for (int i = 0; i < Ac.rows(); ++i)
                if (Ac.coeff(i, i) == 0.0) fix.emplace_back(i, i, 1.0);
            if (!fix.empty()) {
                SparseMatrix I(Ac.rows(), Ac.cols());
                I.setFromTriplets(fix.begin(), fix.end());
                Ac += I;
            }
            levels_.back().P = std::move(P);
            levels_.push_back({std::move(Ac), {}, nc});
            n = nc;
        }
        coarse_solver_ = std::make_shared<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
        coarse_solver_->compute(Eigen::SparseMatrix<double>(levels_.back().A));
    }

    static SparseMatrix prolongation(int dim, int nf, int nc) {
        std::size_t fine_size = 1, coarse_size = 1;
        for (int k = 0; k < dim; ++k) {
            fine_size *= static_cast<std::size_t>(nf);
            coarse_size *= static_cast<std::size_t>(nc);
        }
        std::vector<Eigen::Triplet<double>> t;
        t.reserve(fine_size * (1u << dim));
        for (std::size_t f = 0; f < fine_size; ++f) {
            std::array<int, 3> m{0, 0, 0};
            std::size_t rem = f;
            bool boundary = false;
            for (int k = 0; k < dim; ++k) {
                m[k] = static_cast<int>(rem % static_cast<std::size_t>(nf));
                rem /= static_cast<std::size_t>(nf);
                if (m[k] == 0 || m[k] == nf - 1) boundary = true;
            }
            if (boundary) continue;
            // per axis: one coarse parent (even) or two with weight 1/2 (odd)
            std::array<std::array<int, 2>, 3> parents{};
            std::array<int, 3> count{1, 1, 1};
            for (int k = 0; k < dim; ++k) {
                if (m[k] % 2 == 0) {
                    parents[k][0] = m[k] / 2;
                    count[k] = 1;
                } else {
                    parents[k][0] = (m[k] - 1) / 2;
                    parents[k][1] = (m[k] + 1) / 2;
                    count[k] = 2;
                }
            }
            const int c2 = dim == 3 ? count[2] : 1;
            for (int a = 0; a < count[0]; ++a)
                for (int b = 0; b < count[1]; ++b)
                    for (int c = 0; c < c2; ++c) {
                        std::array<int, 3> cm{parents[0][a], parents[1][b], dim == 3 ? parents[2][c] : 0};
                        bool coarse_boundary = false;
                        for (int k = 0; k < dim; ++k)
                            if (cm[k] == 0 || cm[k] == nc - 1) coarse_boundary = true;
                        if (coarse_boundary) continue;
                        double w = 1.0;
                        for (int k = 0; k < dim; ++k) w *= (count[k] == 2 ? 0.5 : 1.0);
                        std::size_t ci = 0;
                        for (int k = dim - 1; k >= 0; --k) ci = ci * static_cast<std::size_t>(nc) + cm[k];
                        t.emplace_back(static_cast<int>(f), static_cast<int>(ci), w);
                    }
        }
        SparseMatrix P(static_cast<int>(fine_size), static_cast<int>(coarse_size));
        P.setFromTriplets(t.begin(), t.end());
        return P;
    }

    static void gauss_seidel(const SparseMatrix& A, const Field* shift, const Field& b, Field& x, bool forward) {
        const int n = static_cast<int>(A.rows());
        const int* outer = A.outerIndexPtr();
        const int* inner = A.innerIndexPtr();
        const double* val = A.valuePtr();
        auto relax = [&](int i) {
            double diag = shift ? (*shift)[i] : 0.0;
            double sum = b[i];
            for (int k = outer[i]; k < outer[i + 1]; ++k) {
                const int j = inner[k];
                if (j == i)
                    diag += val[k];
                else
                    sum -= val[k] * x[j];
            }
            if (diag != 0.0) x[i] = sum / diag;
        };
        if (forward)
            for (int i = 0; i < n; ++i) relax(i);
        else
            for (int i = n - 1; i >= 0; --i) relax(i);
    }

    void vcycle(std::size_t l, const Field& b, Field& x, const Shift* shift) const {
        const Level& lev = levels_[l];
        const Field* d = shift ? &shift->diagonal[l] : nullptr;
        if (l + 1 == levels_.size()) {
            x = shift ? shift->coarse->solve(b) : coarse_solver_->solve(b);
            return;
        }
        for (int s = 0; s < smoothing_; ++s) gauss_seidel(lev.A, d, b, x, true);
        Field r = b - lev.A * x;
        if (d) r -= d->cwiseProduct(x);
        Field bc = lev.P.transpose() * r;
        Field xc = Field::Zero(bc.size());
        vcycle(l + 1, bc, xc, shift);
        x.noalias() += lev.P * xc;
        for (int s = 0; s < smoothing_; ++s) gauss_seidel(lev.A, d, b, x, false);
    }

    std::vector<Level> levels_;
    std::shared_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> coarse_solver_;
    int smoothing_ = 2;
};

/// Jacobi preconditioner for small or masked systems.
inline Preconditioner jacobi_preconditioner(const SparseMatrix& A) {
    Field inv = A.diagonal();
    for (Eigen::Index i = 0; i < inv.size(); ++i) inv[i] = inv[i] != 0.0 ? 1.0 / inv[i] : 1.0;
    return [inv](const Field& r, Field& z) { z = inv.cwiseProduct(r); };
}

/// Solves op.matrix x = b with multigrid-preconditioned CG, throwing on stagnation.
inline Field solve_spd(const DiscreteOperator& op, const Field& b, const PcgOptions& opts = {},
                       PcgReport* report = nullptr, const Multigrid* mg = nullptr) {
    std::unique_ptr<Multigrid> own;
    if (mg == nullptr) {
        own = std::make_unique<Multigrid>(op.matrix, op.grid.dim, op.grid.per_axis);
        mg = own.get();
    }
    Field x = Field::Zero(b.size());
    PcgReport rep = pcg(op.matrix, b, x, mg->as_preconditioner(), opts);
    if (report) *report = rep;
    if (rep.stagnated) {
        std::string hist;
        const auto& h = rep.residual_history;
        for (std::size_t i = h.size() > 10 ? h.size() - 10 : 0; i < h.size(); ++i) hist += " " + std::to_string(h[i]);
        throw ConvergenceError("conjugate gradients stagnated at relative residual " +
                               std::to_string(rep.relative_residual) + "; last residuals:" + hist);
    }
    return x;
}

}  // namespace mvs
