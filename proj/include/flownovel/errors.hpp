#pragma once

#include <stdexcept>
#include <string>

namespace flownovel {

// Base class for all library errors.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Precondition violations: shape mismatches, bad arguments, domain errors,
// calls on objects in the wrong state. Maps to CLI exit code 1.
struct contract_error : error {
    using error::error;
};

// File/parse problems: missing files, ragged CSV rows, non-numeric cells.
// Maps to CLI exit code 2.
struct data_error : error {
    using error::error;
};

// Numerical failures: ODE divergence, non-finite losses, Cholesky breakdown.
// Maps to CLI exit code 3.
struct numeric_error : error {
    using error::error;
};

} // namespace flownovel
