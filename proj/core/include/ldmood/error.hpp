#pragma once

#include <stdexcept>
#include <string>

namespace ldmood {

/// Process exit codes used by the command line tool.
enum class ExitCode : int {
    Success = 0,
    Usage = 1,
    Data = 2,
    Numerical = 3,
};

/// Root of the library's exception hierarchy; every error knows its exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual ExitCode exit_code() const noexcept { return ExitCode::Data; }
};

/// Invalid configuration, arguments, or out-of-order pipeline invocation.
class ConfigError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::Usage; }
};

/// A value violates a documented precondition (bad shape, illegal parameter).
class ValidationError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::Usage; }
};

/// Missing, unreadable, or inconsistent data artifacts.
class DataError : public Error {
public:
    using Error::Error;
};

/// Malformed binary file contents.
class FormatError : public DataError {
public:
    enum class Kind { BadMagic, BadVersion, Truncated, DimensionOverflow, Corrupt };

    FormatError(Kind kind, const std::string& message);
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// NaN/Inf encountered, training diverged, or a statistic is undefined.
class NumericalError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::Numerical; }
};

const char* to_string(FormatError::Kind kind) noexcept;

}  // namespace ldmood
