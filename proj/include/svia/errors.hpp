#pragma once

#include <stdexcept>
#include <string>

namespace svia {

/// Input violates a documented precondition (shape, range, one-hot, ...).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A value went non-finite or a formula hit a singularity.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Noise schedule cannot be built or used as requested.
class ScheduleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Filesystem, PNG, weight-file or dataset-layout failure.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace svia
