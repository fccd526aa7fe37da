#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mvs/errors.hpp"

namespace mvs {

using Field = Eigen::VectorXd;
using NodeIndex = std::size_t;
using Point = std::array<double, 3>;
using MultiIndex = std::array<int, 3>;

/// Uniform lattice of cell centers on [-M, M]^dim with the origin on a node.
/// Nodes are numbered lexicographically with the first axis fastest.
struct Grid {
    int dim = 2;
    double half_width = 1.0;
    double spacing = 0.25;
    int per_axis = 9;  // 2M/h + 1

    [[nodiscard]] std::size_t size() const {
        std::size_t total = 1;
        for (int k = 0; k < dim; ++k) total *= static_cast<std::size_t>(per_axis);
        return total;
    }

    [[nodiscard]] int center_offset() const { return (per_axis - 1) / 2; }

    [[nodiscard]] std::size_t stride(int axis) const {
        std::size_t s = 1;
        for (int k = 0; k < axis; ++k) s *= static_cast<std::size_t>(per_axis);
        return s;
    }

    [[nodiscard]] NodeIndex linear(const MultiIndex& m) const {
        NodeIndex idx = 0;
        for (int k = dim - 1; k >= 0; --k) idx = idx * static_cast<NodeIndex>(per_axis) + static_cast<NodeIndex>(m[k]);
        return idx;
    }

    [[nodiscard]] MultiIndex multi(NodeIndex idx) const {
        MultiIndex m{0, 0, 0};
        for (int k = 0; k < dim; ++k) {
            m[k] = static_cast<int>(idx % static_cast<NodeIndex>(per_axis));
            idx /= static_cast<NodeIndex>(per_axis);
        }
        return m;
    }

    [[nodiscard]] NodeIndex center_index() const {
        const int c = center_offset();
        return linear({c, c, c});
    }

    [[nodiscard]] double coordinate(int index) const {
        return static_cast<double>(index - center_offset()) * spacing;
    }

    [[nodiscard]] Point coords(NodeIndex idx) const {
        const MultiIndex m = multi(idx);
        Point p{0.0, 0.0, 0.0};
        for (int k = 0; k < dim; ++k) p[k] = coordinate(m[k]);
        return p;
    }

    [[nodiscard]] double radius(NodeIndex idx) const {
        const Point p = coords(idx);
        return std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    }

    [[nodiscard]] bool on_boundary(const MultiIndex& m) const {
        for (int k = 0; k < dim; ++k)
            if (m[k] == 0 || m[k] == per_axis - 1) return true;
        return false;
    }
    [[nodiscard]] bool on_boundary(NodeIndex idx) const { return on_boundary(multi(idx)); }

    [[nodiscard]] double cell_volume() const { return std::pow(spacing, dim); }

    [[nodiscard]] std::vector<std::uint8_t> boundary_mask() const {
        std::vector<std::uint8_t> mask(size(), 0);
        for (NodeIndex i = 0; i < size(); ++i) mask[i] = on_boundary(i) ? 1 : 0;
        return mask;
    }

    /// Index of the node at physical position p, or -1 when p is not a node.
    [[nodiscard]] long long node_at(const Point& p) const {
        MultiIndex m{0, 0, 0};
        for (int k = 0; k < dim; ++k) {
            const double t = p[k] / spacing + center_offset();
            const double r = std::round(t);
            if (std::abs(t - r) > 1e-9 || r < 0 || r > per_axis - 1) return -1;
            m[k] = static_cast<int>(r);
        }
        return static_cast<long long>(linear(m));
    }

    friend bool operator==(const Grid& a, const Grid& b) {
        return a.dim == b.dim && a.per_axis == b.per_axis && a.half_width == b.half_width && a.spacing == b.spacing;
    }
};

/// Builds the lattice for [-M, M]^dim; 2M/h must be an even integer of at least 8.
inline Grid build_grid(int dim, double half_width, double spacing) {
    if (dim != 2 && dim != 3) throw SizingError("grid dimension must be 2 or 3, got " + std::to_string(dim));
    if (!(half_width > 0.0) || !(spacing > 0.0)) throw SizingError("grid half width and spacing must be positive");
    const double cells = 2.0 * half_width / spacing;
    const double rounded = std::round(cells);
    if (std::abs(cells - rounded) > 1e-9 * std::max(1.0, cells))
        throw SizingError("2M/h = " + std::to_string(cells) + " is not an integer");
    const long long n = static_cast<long long>(rounded);
    if (n % 2 != 0) throw SizingError("2M/h = " + std::to_string(n) + " is odd; the origin would fall between nodes");
    if (n < 8) throw SizingError("2M/h = " + std::to_string(n) + " is below the minimum of 8");
    if (n > 4096) throw SizingError("2M/h = " + std::to_string(n) + " exceeds the supported resolution");
    Grid g;
    g.dim = dim;
    g.half_width = half_width;
    g.spacing = spacing;
    g.per_axis = static_cast<int>(n) + 1;
    return g;
}

}  // namespace mvs
