#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ddap {

/// Error classes surfaced to API and CLI clients. Every exception thrown by
/// the library carries exactly one of these.
enum class ErrorCode {
    not_found,
    bad_stage,
    validation_failed,
    backend_failure,
    guardrail_exhausted,
    sandbox_error,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& detail)
        : std::runtime_error(detail), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

class NotFoundError : public Error {
public:
    explicit NotFoundError(const std::string& detail) : Error(ErrorCode::not_found, detail) {}
};

/// Operation invoked in a stage that does not permit it, or the session is busy.
class StageError : public Error {
public:
    explicit StageError(const std::string& detail) : Error(ErrorCode::bad_stage, detail) {}
};

class InputError : public Error {
public:
    explicit InputError(const std::string& detail) : Error(ErrorCode::validation_failed, detail) {}
};

class RangeError : public InputError {
public:
    using InputError::InputError;
};

/// Stored bytes no longer match the recorded content hash.
class CorruptionError : public InputError {
public:
    using InputError::InputError;
};

class BackendError : public Error {
public:
    explicit BackendError(const std::string& detail) : Error(ErrorCode::backend_failure, detail) {}
};

class RetryExhaustedError : public BackendError {
public:
    RetryExhaustedError(const std::string& detail, int attempts)
        : BackendError(detail), attempts_(attempts) {}
    int attempts() const noexcept { return attempts_; }

private:
    int attempts_;
};

class TranscriptExhaustedError : public BackendError {
public:
    using BackendError::BackendError;
};

/// A scripted transcript entry was recorded for a different stage.
class FixtureError : public BackendError {
public:
    using BackendError::BackendError;
};

class StorageError : public BackendError {
public:
    using BackendError::BackendError;
};

class GuardrailError : public Error {
public:
    explicit GuardrailError(const std::string& detail)
        : Error(ErrorCode::guardrail_exhausted, detail) {}
};

class RepairBudgetError : public GuardrailError {
public:
    using GuardrailError::GuardrailError;
};

/// The execution environment itself failed (interpreter missing, fork failure),
/// as opposed to the generated code failing.
class SandboxError : public Error {
public:
    explicit SandboxError(const std::string& detail) : Error(ErrorCode::sandbox_error, detail) {}
};

}  // namespace ddap
