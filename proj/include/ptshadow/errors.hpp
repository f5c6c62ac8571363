#pragma once

#include <stdexcept>
#include <string>

namespace ptshadow {

// Error taxonomy shared by the library and the CLI. The CLI maps these onto
// process exit codes: InvalidArgumentError -> 2, DataError (and subclasses)
// -> 3, ResourceLimitError -> 4.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Caller passed a value outside the documented domain (bad partition, p < 1
// Schatten order, negative coupling, ...). Also used for config-file problems.
class InvalidArgumentError : public Error {
public:
    using Error::Error;
};

// Input data is malformed or unusable: parse failures (message carries the
// line number), failed validation of stored unitaries, truncated files.
class DataError : public Error {
public:
    using Error::Error;
};

// A statistic was requested from fewer records than its U-statistic order.
class InsufficientDataError : public DataError {
public:
    using DataError::DataError;
};

// A moment order outside the implemented range {2, 3, 4}.
class UnsupportedOrderError : public InvalidArgumentError {
public:
    using InvalidArgumentError::InvalidArgumentError;
};

// r3_ratio with p3 <= 0 or s3 <= 0: the ratio -log2(p3/s3) does not exist.
class UndefinedRatioError : public Error {
public:
    using Error::Error;
};

// Request exceeds a hard size cap (qubit count, dense oracle dimension, ...).
class ResourceLimitError : public Error {
public:
    using Error::Error;
};

} // namespace ptshadow
