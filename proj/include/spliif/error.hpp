#pragma once

#include <stdexcept>
#include <string>

namespace spliif {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor extents do not line up.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Caller passed data that violates a precondition (empty station list, non-finite query, ...).
class InputError : public Error {
public:
    using Error::Error;
};

/// API misuse (non-scalar loss, unknown variable tag, invalid hyperparameters).
class ContractError : public Error {
public:
    using Error::Error;
};

/// A file could not be parsed or does not match the expected layout.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Model/run configuration is inconsistent.
class ConfigError : public Error {
public:
    using Error::Error;
};

class SamplingError : public Error {
public:
    using Error::Error;
};

/// Masked loss with nothing left to average over.
class DegenerateBatchError : public Error {
public:
    using Error::Error;
};

/// NaN or Inf showed up where finiteness is required.
class NonFiniteError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace spliif
