#pragma once

#include <stdexcept>

namespace sflab {

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Input for which the operation is mathematically undefined (zero-norm vector,
// constant series in a rank correlation, single cluster, ...).
struct DegenerateInputError : std::domain_error {
    using std::domain_error::domain_error;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Call made in a state that forbids it (stepping a finished episode, ...).
struct ProtocolError : std::logic_error {
    using std::logic_error::logic_error;
};

} // namespace sflab
