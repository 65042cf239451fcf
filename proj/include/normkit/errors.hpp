#pragma once

#include <stdexcept>
#include <string>

namespace normkit {

// Every library failure derives from Error so callers can catch one type.
// The CLI maps the three families below onto distinct exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad input data or arguments (exit code 3 in the CLI).
class DataError : public Error {
public:
    using Error::Error;
};

class ArgumentError : public DataError {
public:
    using DataError::DataError;
};

class DimensionError : public ArgumentError {
public:
    using ArgumentError::ArgumentError;
};

class InsufficientDataError : public DataError {
public:
    using DataError::DataError;
};

class DegenerateError : public DataError {
public:
    using DataError::DataError;
};

class ParseError : public DataError {
public:
    ParseError(const std::string& what, std::size_t line)
        : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

// Non-finite values, failed factorizations, diverging training (exit code 4).
class NumericError : public Error {
public:
    using Error::Error;
};

class TrainingError : public NumericError {
public:
    TrainingError(const std::string& what, std::size_t epoch)
        : NumericError("epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
    std::size_t epoch() const { return epoch_; }

private:
    std::size_t epoch_;
};

class ContractError : public Error {
public:
    using Error::Error;
};

// Invalid configuration key or value (exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace normkit
