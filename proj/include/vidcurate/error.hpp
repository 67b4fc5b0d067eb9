#pragma once

#include <stdexcept>
#include <string>

namespace vidcurate {

/// Input data violates a documented contract (bad file, dangling id, degenerate labels).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller misuse: invalid arguments, bad configuration, unknown option.
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A state transition that is not allowed in the current state.
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Numerical routine failed to converge within its iteration budget.
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace vidcurate
