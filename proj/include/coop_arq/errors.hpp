#pragma once

#include <stdexcept>
#include <string>

namespace coop_arq {

/// Argument outside the mathematical domain of an operation.
struct domain_error : std::domain_error {
    using std::domain_error::domain_error;
};

/// Malformed scenario, threshold vector or CLI input. Maps to exit code 2.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Quadrature or search failure. Maps to exit code 3.
struct numerical_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Enumeration would exceed the supported state count.
struct complexity_error : numerical_error {
    using numerical_error::numerical_error;
};

} // namespace coop_arq
