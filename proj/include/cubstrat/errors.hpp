#pragma once

#include <stdexcept>
#include <string>

namespace cubstrat {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Point or argument outside the admissible domain.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Duplicate nodes or otherwise singular difference stencil.
class StencilError : public Error {
public:
    using Error::Error;
};

/// Derivative order incompatible with the node count or smoothness order.
class OrderError : public Error {
public:
    using Error::Error;
};

/// Grid too coarse for the requested stencil window (k < window).
class ResolutionError : public Error {
public:
    using Error::Error;
};

/// A stencil node has no function value available.
class IncompleteEvaluationError : public Error {
public:
    using Error::Error;
};

/// Generic violated precondition (bad margin, even dilation, ...).
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Replicate reports cannot be combined (different configs, missing terms).
class AlignmentError : public Error {
public:
    using Error::Error;
};

/// User integrand returned a non-finite value.
class EvaluationError : public Error {
public:
    using Error::Error;
};

/// Mode search failed to converge.
class OptimizationError : public Error {
public:
    using Error::Error;
};

}  // namespace cubstrat
