#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace quorum {

enum class Errc {
    EmptyInput,
    MalformedRow,
    NonMonotonicDates,
    NonPositivePrice,
    InvalidBar,
    MissingField,
    UnparseableDate,
    UnknownPeriod,
    DuplicateIndicator,
    TickerMismatch,
    InvalidArgument,
    InvalidRule,
    CassetteMiss,
    ProviderError,
    UnparseableAfterRepair,
    SearchClientError,
    TooShort,
    NonFiniteInput,
    OptimizerDiverged,
    StatementChainFailed,
    EmptyPreference,
    InvalidProfile,
    NoDecision,
    DecisionOutsideCalendar,
    DegenerateSeries,
    ConfigError,
    IoError,
};

std::string_view to_string(Errc code) noexcept;

/// Base exception for every failure the library reports. `code()` is the
/// machine-readable kind surfaced by the CLI and the HTTP service.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

class MalformedRow : public Error {
public:
    MalformedRow(std::size_t line, const std::string& why)
        : Error(Errc::MalformedRow, "line " + std::to_string(line) + ": " + why), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class MissingField : public Error {
public:
    explicit MissingField(std::string field, std::size_t record = 0)
        : Error(Errc::MissingField,
                "record " + std::to_string(record) + ": missing field '" + field + "'"),
          field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class CassetteMiss : public Error {
public:
    explicit CassetteMiss(std::string fingerprint)
        : Error(Errc::CassetteMiss, "no cassette entry for request " + fingerprint),
          fingerprint_(std::move(fingerprint)) {}

    const std::string& fingerprint() const noexcept { return fingerprint_; }

private:
    std::string fingerprint_;
};

class ProviderError : public Error {
public:
    ProviderError(int status, const std::string& message, bool transient)
        : Error(Errc::ProviderError, "provider status " + std::to_string(status) + ": " + message),
          status_(status), transient_(transient) {}

    int status() const noexcept { return status_; }
    bool transient() const noexcept { return transient_; }

private:
    int status_;
    bool transient_;
};

class StatementChainFailed : public Error {
public:
    StatementChainFailed(int step, const std::string& why)
        : Error(Errc::StatementChainFailed,
                "statement chain failed at step " + std::to_string(step) + ": " + why),
          step_(step) {}

    int step() const noexcept { return step_; }

private:
    int step_;
};

}  // namespace quorum
