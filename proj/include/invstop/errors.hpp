#pragma once

#include <stdexcept>
#include <string>

namespace invstop {

/// Non-finite coefficient or payoff evaluation.
class EvaluationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A documented precondition of an operation does not hold.
class PreconditionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed barrier knots (unsorted, duplicate, non-finite).
class BarrierError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Path simulation left the finite reals.
class SimulationError : public std::runtime_error {
public:
    SimulationError(const std::string& what, long step)
        : std::runtime_error(what), step_(step) {}
    long step() const noexcept { return step_; }

private:
    long step_;
};

/// Root finding could not bracket or converge.
class NoRootError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Residual violated the monotonicity implied by comparison + single crossing.
class NonMonotoneResidualError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Lattice fails the explicit-scheme stability or probability constraints.
class StabilityError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Stopping region is not an up-set in x.
class StructureError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad or missing configuration value.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace invstop
