#pragma once

#include <stdexcept>
#include <string>

namespace tsync {

// Numerical failures (CLI exit code 3).
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NoValidTau : NumericalError {
    using NumericalError::NumericalError;
};

struct RegionStructureUnknown : NumericalError {
    using NumericalError::NumericalError;
};

struct QuadratureNonconvergence : NumericalError {
    using NumericalError::NumericalError;
};

struct RootNotBracketed : NumericalError {
    using NumericalError::NumericalError;
};

struct NoSignChange : NumericalError {
    using NumericalError::NumericalError;
};

struct StepSizeUnderflow : NumericalError {
    using NumericalError::NumericalError;
};

struct NotStationary : NumericalError {
    using NumericalError::NumericalError;
};

// Contract violations on inputs (CLI exit code 2 when user-facing).
struct InvalidWeights : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct UnsupportedKernel : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct InvalidKernelSpec : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct FileNotFound : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace tsync
