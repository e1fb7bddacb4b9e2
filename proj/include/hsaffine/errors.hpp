#ifndef HSAFFINE_ERRORS_HPP
#define HSAFFINE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace hsaffine {

struct DimensionMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct LevelOutOfRange : std::out_of_range {
    using std::out_of_range::out_of_range;
};

// Raised when a state leaves the PSD cone by more than the clamp tolerance.
struct ClampBeyondTolerance : std::runtime_error {
    ClampBeyondTolerance(double min_eig, double tol)
        : std::runtime_error("minimum eigenvalue " + std::to_string(min_eig) +
                             " below -" + std::to_string(tol)),
          min_eigenvalue(min_eig), tolerance(tol) {}
    double min_eigenvalue;
    double tolerance;
};

struct NonFiniteState : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct WindowUnderflow : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SupportViolation : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

}  // namespace hsaffine

#endif  // HSAFFINE_ERRORS_HPP
