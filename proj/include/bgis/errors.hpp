#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bgis {

// Base class for every error thrown by the library. CLI maps these to
// exit codes: ConfigError -> 3, everything else numeric/runtime -> 4.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};

class DomainError : public Error {
public:
    explicit DomainError(const std::string& msg) : Error("domain error: " + msg) {}
};

// Gradient requested through an unsupported construction.
class CapabilityError : public Error {
public:
    explicit CapabilityError(const std::string& msg) : Error("capability error: " + msg) {}
};

class TrainingError : public Error {
public:
    TrainingError(const std::string& msg, std::size_t step)
        : Error("training error at step " + std::to_string(step) + ": " + msg), step_(step) {}
    std::size_t step() const { return step_; }

private:
    std::size_t step_;
};

// Time-grid construction produced a non-positive kernel variance or a
// violated ordering constraint; `index` names the offending step n.
class GridError : public Error {
public:
    GridError(const std::string& msg, std::size_t index)
        : Error("grid error at n=" + std::to_string(index) + ": " + msg), index_(index) {}
    std::size_t index() const { return index_; }

private:
    std::size_t index_;
};

class ContractError : public Error {
public:
    explicit ContractError(const std::string& msg) : Error("contract error: " + msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

// A proposal without full support (eta = 0) or an all-degenerate ensemble.
class DegenerateError : public Error {
public:
    explicit DegenerateError(const std::string& msg) : Error("degenerate: " + msg) {}
};

}  // namespace bgis
