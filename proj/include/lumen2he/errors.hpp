// Copyright (c) 2026 lumen2he contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace lumen2he {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A referenced file, slice or resource does not exist.
class NotFoundError : public Error {
public:
    using Error::Error;
};

/// An input file exists but is not in a format this library accepts.
/// The message names the offending property (compression, depth, channels...).
class UnsupportedFormatError : public Error {
public:
    using Error::Error;
};

/// Reading or writing a file failed at the OS/codec level.
class IoError : public Error {
public:
    using Error::Error;
};

/// An operation received arguments violating its preconditions.
class InvalidInputError : public Error {
public:
    using Error::Error;
};

/// A network/model configuration violates its invariants.
class InvalidConfigError : public Error {
public:
    using Error::Error;
};

/// A config file or flag value could not be applied; names the key.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A checkpoint file is missing, truncated or otherwise unreadable.
class CheckpointError : public Error {
public:
    using Error::Error;
};

/// A checkpoint carries a format tag this build does not understand.
class VersionError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

/// A loss term became non-finite during training; carries the term name.
class DivergenceError : public Error {
public:
    explicit DivergenceError(std::string term_name)
        : Error("non-finite loss term: " + term_name), term(std::move(term_name)) {}
    std::string term;
};

} // namespace lumen2he
