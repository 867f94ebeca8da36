#pragma once

#include <stdexcept>
#include <string>

namespace umt {

/// Base class for every error raised by the library. `kind()` is a stable
/// lowercase token used by the CLI in its machine-parsable error line.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& message) : Error("shape", message) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& message) : Error("numeric", message) {}
};

class StateError : public Error {
public:
    explicit StateError(const std::string& message) : Error("state", message) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error("config", message) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& message) : Error("data", message) {}
};

class ModalityError : public Error {
public:
    explicit ModalityError(const std::string& message) : Error("modality", message) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error("io", message) {}
};

}  // namespace umt
