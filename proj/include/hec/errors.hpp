#pragma once

#include <stdexcept>
#include <string>

namespace hec {

// Invalid configuration or arguments. The CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Anything that goes wrong numerically. The CLI maps it to exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The calibration data never selected some codes the model needs.
class CoverageError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class SingularMatrixError : public NumericalError {
public:
    SingularMatrixError(const std::string& what, double condition)
        : NumericalError(what), condition_(condition) {}
    double condition() const { return condition_; }

private:
    double condition_;
};

class DivergenceError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

} // namespace hec
