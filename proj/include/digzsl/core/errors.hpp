#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace digzsl {

// Root of every error the library throws. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shapes, dimensions, or ids that do not line up.
class StructuralError : public Error {
public:
    using Error::Error;
};

// Unseen-class data reached a stage that must only see seen classes (or the reverse).
class ProtocolViolation : public Error {
public:
    using Error::Error;
};

// Zero-norm vectors and similar inputs that would otherwise produce NaN.
class DegenerateInput : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Artifact written by a different format version or under a different config hash.
class VersionError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    ConfigError(const std::string& what, std::size_t line = 0, std::string key = {})
        : Error(what), line_(line), key_(std::move(key)) {}

    std::size_t line() const noexcept { return line_; }
    const std::string& key() const noexcept { return key_; }

private:
    std::size_t line_;
    std::string key_;
};

// A stage was asked to run before the artifacts it consumes exist.
class DependencyError : public Error {
public:
    DependencyError(const std::string& what, std::string missing_stage)
        : Error(what), missing_stage_(std::move(missing_stage)) {}

    const std::string& missing_stage() const noexcept { return missing_stage_; }

private:
    std::string missing_stage_;
};

class NumericalFailure : public Error {
public:
    NumericalFailure(const std::string& what, long step = -1) : Error(what), step_(step) {}

    // Reverse-diffusion or optimizer step at which the failure was detected, -1 if unknown.
    long step() const noexcept { return step_; }

private:
    long step_;
};

}  // namespace digzsl
