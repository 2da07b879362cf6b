#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace carelink {

enum class ErrorCode {
    not_found,
    conflict,
    lifecycle,
    precondition,
    invalid_argument,
    configuration,
    gateway,
    storage,
    unauthorized,
    forbidden,
};

std::string_view to_string(ErrorCode code) noexcept;

// Base error for everything the library throws on purpose.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

class NotFoundError : public Error {
public:
    explicit NotFoundError(const std::string& what) : Error(ErrorCode::not_found, what) {}
};

class ConflictError : public Error {
public:
    explicit ConflictError(const std::string& what) : Error(ErrorCode::conflict, what) {}
};

class LifecycleError : public Error {
public:
    explicit LifecycleError(const std::string& what) : Error(ErrorCode::lifecycle, what) {}
};

class PreconditionError : public Error {
public:
    explicit PreconditionError(const std::string& what) : Error(ErrorCode::precondition, what) {}
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(ErrorCode::invalid_argument, what) {}
};

class ConfigurationError : public Error {
public:
    explicit ConfigurationError(const std::string& what) : Error(ErrorCode::configuration, what) {}
};

class StorageError : public Error {
public:
    explicit StorageError(const std::string& what) : Error(ErrorCode::storage, what) {}
};

}  // namespace carelink
