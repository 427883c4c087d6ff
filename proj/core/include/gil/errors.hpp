#pragma once

#include <stdexcept>
#include <string>

namespace gil {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor dimension mismatch.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Non-finite value produced by a completed operation.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Gene index outside the vocabulary.
class VocabularyError : public Error {
public:
    using Error::Error;
};

/// API or command-line misuse.
class UsageError : public Error {
public:
    using Error::Error;
};

/// Malformed or invariant-violating data content.
class DataError : public Error {
public:
    using Error::Error;
};

/// Malformed file syntax (carries the offending location in the message).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration values or unknown configuration keys.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Stage-plan invariant violation.
class PlanError : public Error {
public:
    using Error::Error;
};

/// Checkpoint version/integrity failure.
class CheckpointError : public Error {
public:
    using Error::Error;
};

/// Evaluation could not produce a defined result.
class EvalError : public Error {
public:
    using Error::Error;
};

/// Report assembly failure (missing or inconsistent rows).
class ReportError : public Error {
public:
    using Error::Error;
};

}  // namespace gil
