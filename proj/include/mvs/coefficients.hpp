#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include <Eigen/Core>
#include <json.hpp>

#include "mvs/errors.hpp"
#include "mvs/grid.hpp"
#include "mvs/random.hpp"

namespace mvs {

using CoefficientMatrix = Eigen::Matrix3d;

enum class CoefficientKind { constant, checkerboard, random_piecewise };

inline std::string to_string(CoefficientKind kind) {
    switch (kind) {
        case CoefficientKind::constant: return "constant";
        case CoefficientKind::checkerboard: return "checkerboard";
        case CoefficientKind::random_piecewise: return "random_piecewise";
    }
    return "unknown";
}

inline CoefficientKind coefficient_kind_from_string(const std::string& name) {
    if (name == "constant") return CoefficientKind::constant;
    if (name == "checkerboard") return CoefficientKind::checkerboard;
    if (name == "random_piecewise") return CoefficientKind::random_piecewise;
    throw PreconditionError("unknown coefficient kind '" + name + "'");
}

/// Constructor tag plus parameters; enough to rebuild a field bit for bit.
struct CoefficientParams {
    double scale = 1.0;          // constant
    double alpha = 1.0;          // checkerboard, even blocks
    double beta = 10.0;          // checkerboard, odd blocks
    double block = 0.5;          // checkerboard and random_piecewise block edge
    double lambda = 1.0;         // random_piecewise spectrum lower bound
    double Lambda = 5.0;         // random_piecewise spectrum upper bound
    double max_angle = std::numbers::pi / 12.0;  // random_piecewise eigenframe tilt bound
};

struct CoefficientDescriptor {
    CoefficientKind kind = CoefficientKind::constant;
    CoefficientParams params;
    std::uint64_t seed = 0;
    Point offset{0.0, 0.0, 0.0};  // field is sampled at x + offset (moves x0 off the origin)
};

/// Symmetric uniformly elliptic matrix field a^{ij}(x), defined in physical
/// coordinates so that grids of different extent see the same field.
class CoefficientField {
public:
    CoefficientField() = default;
    CoefficientField(CoefficientDescriptor d, double lambda, double Lambda)
        : descriptor_(d), lambda_(lambda), Lambda_(Lambda) {}

    [[nodiscard]] const CoefficientDescriptor& descriptor() const { return descriptor_; }
    [[nodiscard]] double lambda() const { return lambda_ * factor_; }
    [[nodiscard]] double Lambda() const { return Lambda_ * factor_; }
    [[nodiscard]] double factor() const { return factor_; }

    /// Same field multiplied by a positive constant.
    [[nodiscard]] CoefficientField scaled(double factor) const {
        require(factor > 0.0, "coefficient scale factor must be positive");
        CoefficientField out = *this;
        out.factor_ *= factor;
        return out;
    }

    /// Same field translated so that the grid origin samples the point `shift`.
    [[nodiscard]] CoefficientField translated(const Point& shift) const {
        CoefficientField out = *this;
        for (int k = 0; k < 3; ++k) out.descriptor_.offset[k] += shift[k];
        return out;
    }

    /// Coefficient matrix at x; only the leading dim x dim block is meaningful.
    [[nodiscard]] CoefficientMatrix at(const Point& x, int dim) const {
        Point y{x[0] + descriptor_.offset[0], x[1] + descriptor_.offset[1], x[2] + descriptor_.offset[2]};
        CoefficientMatrix a = CoefficientMatrix::Zero();
        const auto& p = descriptor_.params;
        switch (descriptor_.kind) {
            case CoefficientKind::constant:
                for (int k = 0; k < dim; ++k) a(k, k) = p.scale;
                break;
            case CoefficientKind::checkerboard: {
                long long parity = 0;
                for (int k = 0; k < dim; ++k) parity += block_of(y[k], p.block);
                const double value = (parity % 2 == 0) ? p.alpha : p.beta;
                for (int k = 0; k < dim; ++k) a(k, k) = value;
                break;
            }
            case CoefficientKind::random_piecewise:
                a = random_block_matrix(y, dim);
                break;
        }
        for (int k = dim; k < 3; ++k) a(k, k) = 1.0;
        return a * factor_;
    }

private:
    static long long block_of(double coordinate, double block) {
        return static_cast<long long>(std::floor(coordinate / block + 1e-12));
    }

    [[nodiscard]] CoefficientMatrix random_block_matrix(const Point& y, int dim) const {
        const auto& p = descriptor_.params;
        std::uint64_t key = mix64(descriptor_.seed);
        for (int k = 0; k < dim; ++k)
            key = mix64(key ^ static_cast<std::uint64_t>(block_of(y[k], p.block) + (1LL << 40)));
        SplitMix rng(key);
        Eigen::Vector3d eig(1.0, 1.0, 1.0);
        for (int k = 0; k < dim; ++k) eig[k] = rng.uniform(p.lambda, p.Lambda);
        Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();
        if (dim == 2) {
            const double t = rng.uniform(-p.max_angle, p.max_angle);
            rot(0, 0) = std::cos(t);
            rot(0, 1) = -std::sin(t);
            rot(1, 0) = std::sin(t);
            rot(1, 1) = std::cos(t);
        } else {
            for (int plane = 0; plane < 3; ++plane) {
                const double t = rng.uniform(-p.max_angle, p.max_angle);
                const int i = plane == 2 ? 1 : 0;
                const int j = plane == 0 ? 1 : 2;
                Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
                r(i, i) = std::cos(t);
                r(i, j) = -std::sin(t);
                r(j, i) = std::sin(t);
                r(j, j) = std::cos(t);
                rot = rot * r;
            }
        }
        CoefficientMatrix a = rot * eig.asDiagonal() * rot.transpose();
        // exact symmetry
        for (int i = 0; i < 3; ++i)
            for (int j = i + 1; j < 3; ++j) a(j, i) = a(i, j);
        return a;
    }

    CoefficientDescriptor descriptor_;
    double lambda_ = 1.0;
    double Lambda_ = 1.0;
    double factor_ = 1.0;
};

/// Builds a field from a descriptor. The reported bounds are the constructor's
/// guaranteed spectrum limits.
inline CoefficientField make_coefficients(const CoefficientDescriptor& d) {
    const auto& p = d.params;
    switch (d.kind) {
        case CoefficientKind::constant:
            if (!(p.scale > 0.0)) throw EllipticityError("constant coefficient scale must be positive");
            return CoefficientField(d, p.scale, p.scale);
        case CoefficientKind::checkerboard:
            if (!(p.alpha > 0.0) || !(p.beta > 0.0)) throw EllipticityError("checkerboard values must be positive");
            if (!(p.block > 0.0)) throw PreconditionError("checkerboard block must be positive");
            return CoefficientField(d, std::min(p.alpha, p.beta), std::max(p.alpha, p.beta));
        case CoefficientKind::random_piecewise:
            if (!(p.lambda > 0.0)) throw EllipticityError("lambda must be positive");
            if (p.Lambda < p.lambda) throw EllipticityError("Lambda must not be below lambda");
            if (!(p.block > 0.0)) throw PreconditionError("random_piecewise block must be positive");
            return CoefficientField(d, p.lambda, p.Lambda);
    }
    throw PreconditionError("unknown coefficient kind");
}

inline CoefficientField make_coefficients(CoefficientKind kind, const CoefficientParams& params, std::uint64_t seed) {
    CoefficientDescriptor d;
    d.kind = kind;
    d.params = params;
    d.seed = seed;
    return make_coefficients(d);
}

/// Throws EllipticityError unless a is symmetric with lambda|xi|^2 <= xi.a.xi <= Lambda|xi|^2
/// on a fixed sample of directions.
inline void check_ellipticity(const CoefficientMatrix& a, int dim, double lambda, double Lambda, const Point& where) {
    const double slack = 1e-12 * std::max(1.0, Lambda);
    for (int i = 0; i < dim; ++i)
        for (int j = i + 1; j < dim; ++j)
            if (a(i, j) != a(j, i))
                throw EllipticityError("coefficient matrix not symmetric at (" + std::to_string(where[0]) + ", " +
                                       std::to_string(where[1]) + ", " + std::to_string(where[2]) + ")");
    static constexpr std::array<std::array<double, 3>, 13> directions{{
        {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}, {1, -1, 0}, {1, 0, 1}, {1, 0, -1},
        {0, 1, 1}, {0, 1, -1}, {1, 1, 1}, {1, -1, 1}, {1, 2, 3}, {3, -1, 2},
    }};
    for (const auto& dir : directions) {
        Eigen::Vector3d xi(dir[0], dir[1], dim == 3 ? dir[2] : 0.0);
        const double n2 = xi.squaredNorm();
        if (n2 == 0.0) continue;
        const double form = xi.dot(a * xi);
        if (form < lambda * n2 - slack || form > Lambda * n2 + slack)
            throw EllipticityError("ellipticity bounds violated at (" + std::to_string(where[0]) + ", " +
                                   std::to_string(where[1]) + ", " + std::to_string(where[2]) + ")");
    }
}

inline void to_json(nlohmann::json& j, const CoefficientDescriptor& d) {
    const auto& p = d.params;
    nlohmann::json params;
    switch (d.kind) {
        case CoefficientKind::constant: params = {{"scale", p.scale}}; break;
        case CoefficientKind::checkerboard: params = {{"alpha", p.alpha}, {"beta", p.beta}, {"block", p.block}}; break;
        case CoefficientKind::random_piecewise:
            params = {{"lambda", p.lambda}, {"Lambda", p.Lambda}, {"block", p.block}, {"max_angle", p.max_angle}};
            break;
    }
    j = {{"kind", to_string(d.kind)}, {"params", params}, {"seed", d.seed}};
}

inline void from_json(const nlohmann::json& j, CoefficientDescriptor& d) {
    d.kind = coefficient_kind_from_string(j.at("kind").get<std::string>());
    const nlohmann::json params = j.value("params", nlohmann::json::object());
    CoefficientParams p;
    p.scale = params.value("scale", p.scale);
    p.alpha = params.value("alpha", p.alpha);
    p.beta = params.value("beta", p.beta);
    p.block = params.value("block", p.block);
    p.lambda = params.value("lambda", p.lambda);
    p.Lambda = params.value("Lambda", p.Lambda);
    p.max_angle = params.value("max_angle", p.max_angle);
    d.params = p;
    d.seed = j.value("seed", std::uint64_t{0});
}

}  // namespace mvs
