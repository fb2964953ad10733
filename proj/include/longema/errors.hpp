#pragma once

#include <stdexcept>
#include <string>

namespace longema {

/// Rank-deficient or otherwise unsolvable fit.
struct DegenerateFitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Non-finite value encountered where finite arithmetic is required.
struct NumericFaultError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Zero-norm vector, collapsed embedding parameters, and similar.
struct DegenerateInputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Caller violated an interface precondition (masked input fed to an
/// embedding, stale trace, mismatched shapes).
struct ContractViolationError : std::logic_error {
    using std::logic_error::logic_error;
};

/// Timestamps out of order, negative delays.
struct OrderingViolationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Too few valid observations for the requested computation.
struct InsufficientDataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Sample cannot be scored (e.g., every step masked).
struct UnusableSampleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
struct DivergedTrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed input file or incompatible checkpoint.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace longema
