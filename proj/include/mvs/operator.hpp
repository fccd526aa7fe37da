#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/SparseCore>

#include "mvs/coefficients.hpp"
#include "mvs/grid.hpp"

namespace mvs {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor, int>;

/// Stiffness form of -L on a box grid with Dirichlet boundary nodes.
///
/// `matrix` is the reduced operator over all nodes: boundary rows and columns
/// are replaced by the identity, interior rows hold the finite-volume stencil
/// restricted to interior columns. `boundary_coupling` keeps the eliminated
/// interior-to-boundary entries so that nonzero boundary data can be lifted.
struct DiscreteOperator {
    Grid grid;
    CoefficientField coefficients;
    SparseMatrix matrix;
    SparseMatrix boundary_coupling;
    std::vector<std::uint8_t> boundary_mask;
    std::vector<NodeIndex> mmatrix_violations;  // rows with a positive off-diagonal entry

    [[nodiscard]] std::size_t size() const { return grid.size(); }
    [[nodiscard]] bool is_boundary(NodeIndex i) const { return boundary_mask[i] != 0; }

    /// (-L u) at interior nodes using the boundary values stored in u; zero on boundary rows.
    [[nodiscard]] Field apply_full(const Field& u) const {
        Field interior = u;
        for (NodeIndex i = 0; i < size(); ++i)
            if (is_boundary(i)) interior[i] = 0.0;
        Field out = matrix * interior + boundary_coupling * u;
        for (NodeIndex i = 0; i < size(); ++i)
            if (is_boundary(i)) out[i] = 0.0;
        return out;
    }

    /// Right-hand side contribution -B g of boundary data g for interior rows.
    [[nodiscard]] Field boundary_lift(const Field& g) const { return -(boundary_coupling * g); }

    /// Row sum of the unreduced stencil at an interior node.
    [[nodiscard]] double full_row_sum(NodeIndex i) const {
        double s = 0.0;
        for (SparseMatrix::InnerIterator it(matrix, static_cast<int>(i)); it; ++it) s += it.value();
        for (SparseMatrix::InnerIterator it(boundary_coupling, static_cast<int>(i)); it; ++it) s += it.value();
        return s;
    }

    [[nodiscard]] double diagonal(NodeIndex i) const { return matrix.coeff(static_cast<int>(i), static_cast<int>(i)); }
};

namespace detail {

inline double harmonic_mean(double a, double b) { return 2.0 * a * b / (a + b); }

/// Stencil offsets of the 5/7-point axis stencil plus in-plane diagonals.
struct StencilOffset {
    MultiIndex delta;
    long long linear;
};

inline std::vector<StencilOffset> stencil_offsets(const Grid& g) {
    std::vector<StencilOffset> out;
    const int d = g.dim;
    auto add = [&](MultiIndex m) {
        long long lin = 0;
        for (int k = 0; k < d; ++k) lin += static_cast<long long>(m[k]) * static_cast<long long>(g.stride(k));
        out.push_back({m, lin});
    };
    for (int k = 0; k < d; ++k) {
        MultiIndex m{0, 0, 0};
        m[k] = 1;
        add(m);
        m[k] = -1;
        add(m);
    }
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j)
            for (int si : {-1, 1})
                for (int sj : {-1, 1}) {
                    MultiIndex m{0, 0, 0};
                    m[i] = si;
                    m[j] = sj;
                    add(m);
                }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.linear < b.linear; });
    return out;
}

}  // namespace detail

/// Finite-volume assembly on the cell-centered grid.
///
/// The discrete energy is a weighted graph Laplacian: an axis edge carries the
/// harmonic mean of the adjacent a^{kk}; every 2x2 node square in plane (i,j)
/// carries the corner average c of a^{ij} on the diagonal aligned with sign(c),
/// and |c|/2 is removed from each of the square's four axis edges so the
/// energy of linear functions is reproduced exactly. Negative edge weights
/// (possible for strong anisotropy) are kept and reported as M-matrix violations.
inline DiscreteOperator assemble(const Grid& grid, const CoefficientField& coeff) {
    const int d = grid.dim;
    const std::size_t n = grid.size();
    const int N = grid.per_axis;
    const double inv_h2 = 1.0 / (grid.spacing * grid.spacing);

    std::vector<CoefficientMatrix> a(n);
    bool has_cross = false;
    for (NodeIndex p = 0; p < n; ++p) {
        const Point x = grid.coords(p);
        a[p] = coeff.at(x, d);
        check_ellipticity(a[p], d, coeff.lambda(), coeff.Lambda(), x);
        for (int i = 0; i < d; ++i)
            for (int j = i + 1; j < d; ++j)
                if (a[p](i, j) != 0.0) has_cross = true;
    }

    // forward edge weights: axis[k][p] is the edge p -- p+e_k
    std::array<std::vector<double>, 3> axis;
    for (int k = 0; k < d; ++k) axis[k].assign(n, 0.0);
    for (NodeIndex p = 0; p < n; ++p) {
        const MultiIndex m = grid.multi(p);
        for (int k = 0; k < d; ++k) {
            if (m[k] + 1 >= N) continue;
            const NodeIndex q = p + grid.stride(k);
            axis[k][p] = detail::harmonic_mean(a[p](k, k), a[q](k, k));
        }
    }

    // plane index for (i,j), i<j: 2D -> 0; 3D -> (0,1)=0, (0,2)=1, (1,2)=2
    auto plane_of = [](int i, int j) { return i + j - 1; };
    const int planes = d == 2 ? 1 : 3;
    std::array<std::vector<double>, 3> diag_pp;  // edge c -- c+e_i+e_j of square with lower corner c
    std::array<std::vector<double>, 3> diag_pm;  // edge c+e_i -- c+e_j
    if (has_cross) {
        for (int pl = 0; pl < planes; ++pl) {
            diag_pp[pl].assign(n, 0.0);
            diag_pm[pl].assign(n, 0.0);
        }
        for (NodeIndex c = 0; c < n; ++c) {
            const MultiIndex m = grid.multi(c);
            for (int i = 0; i < d; ++i)
                for (int j = i + 1; j < d; ++j) {
                    if (m[i] + 1 >= N || m[j] + 1 >= N) continue;
                    const NodeIndex ci = c + grid.stride(i);
                    const NodeIndex cj = c + grid.stride(j);
                    const NodeIndex cij = ci + grid.stride(j);
                    const double corner = 0.25 * (a[c](i, j) + a[ci](i, j) + a[cj](i, j) + a[cij](i, j));
                    if (corner == 0.0) continue;
                    const int pl = plane_of(i, j);
                    if (corner > 0.0)
                        diag_pp[pl][c] = corner;
                    else
                        diag_pm[pl][c] = -corner;
                    const double half = 0.5 * std::abs(corner);
                    axis[i][c] -= half;
                    axis[i][cj] -= half;
                    axis[j][c] -= half;
                    axis[j][ci] -= half;
                }
        }
    }

    // weight of the edge p -- p+delta, or 0 when absent
    auto edge_weight = [&](NodeIndex p, const MultiIndex& m, const MultiIndex& delta) -> double {
        int nz = 0;
        std::array<int, 2> ax{0, 0};
        for (int k = 0; k < d; ++k)
            if (delta[k] != 0) ax[nz++] = k;
        for (int k = 0; k < d; ++k)
            if (m[k] + delta[k] < 0 || m[k] + delta[k] >= N) return 0.0;
        if (nz == 1) {
            const int k = ax[0];
            return delta[k] > 0 ? axis[k][p] : axis[k][p - grid.stride(k)];
        }
        if (!has_cross) return 0.0;
        const int i = ax[0];
        const int j = ax[1];
        const int pl = plane_of(i, j);
        const int si = delta[i];
        const int sj = delta[j];
        if (si == sj) {
            return si > 0 ? diag_pp[pl][p] : diag_pp[pl][p - grid.stride(i) - grid.stride(j)];
        }
        // anti-diagonal of the square whose lower corner is below p along the negative axis
        return si > 0 ? diag_pm[pl][p - grid.stride(j)] : diag_pm[pl][p - grid.stride(i)];
    };

    const auto offsets = detail::stencil_offsets(grid);
    DiscreteOperator op;
    op.grid = grid;
    op.coefficients = coeff;
    op.boundary_mask = grid.boundary_mask();

    std::vector<int> outer(n + 1, 0), outer_b(n + 1, 0);
    std::vector<int> cols, cols_b;
    std::vector<double> vals, vals_b;
    cols.reserve(n * (offsets.size() / 2 + 2));
    vals.reserve(cols.capacity());

    for (NodeIndex p = 0; p < n; ++p) {
        outer[p] = static_cast<int>(cols.size());
        outer_b[p] = static_cast<int>(cols_b.size());
        if (op.boundary_mask[p]) {
            cols.push_back(static_cast<int>(p));
            vals.push_back(1.0);
            continue;
        }
        const MultiIndex m = grid.multi(p);
        double diagonal = 0.0;
        bool violated = false;
        bool diagonal_written = false;
        std::size_t diag_pos = 0;
        for (const auto& off : offsets) {
            if (!diagonal_written && off.linear > 0) {
                diag_pos = cols.size();
                cols.push_back(static_cast<int>(p));
                vals.push_back(0.0);
                diagonal_written = true;
            }
            const double w = edge_weight(p, m, off.delta);
            if (w == 0.0) continue;
            if (w < 0.0) violated = true;
            diagonal += w;
            const NodeIndex q = static_cast<NodeIndex>(static_cast<long long>(p) + off.linear);
            if (op.boundary_mask[q]) {
                cols_b.push_back(static_cast<int>(q));
                vals_b.push_back(-w * inv_h2);
            } else {
                cols.push_back(static_cast<int>(q));
                vals.push_back(-w * inv_h2);
            }
        }
        if (!diagonal_written) {
            diag_pos = cols.size();
            cols.push_back(static_cast<int>(p));
            vals.push_back(0.0);
        }
        vals[diag_pos] = diagonal * inv_h2;
        if (violated || !(diagonal > 0.0)) op.mmatrix_violations.push_back(p);
    }
    outer[n] = static_cast<int>(cols.size());
    outer_b[n] = static_cast<int>(cols_b.size());

    const int nn = static_cast<int>(n);
    op.matrix = Eigen::Map<const SparseMatrix>(nn, nn, static_cast<int>(cols.size()), outer.data(), cols.data(),
                                               vals.data());
    op.boundary_coupling = Eigen::Map<const SparseMatrix>(nn, nn, static_cast<int>(cols_b.size()), outer_b.data(),
                                                          cols_b.data(), vals_b.data());
    return op;
}

}  // namespace mvs
