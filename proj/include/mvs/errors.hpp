#pragma once

#include <stdexcept>
#include <string>

namespace mvs {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Grid dimensions that cannot host the origin on a node.
class SizingError : public Error {
public:
    using Error::Error;
};

/// Coefficient field that is not symmetric or not uniformly elliptic.
class EllipticityError : public Error {
public:
    using Error::Error;
};

/// Operation called outside its documented domain.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Iterative method that stopped making progress.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw PreconditionError(message);
}

}  // namespace mvs
