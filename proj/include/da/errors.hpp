#pragma once

#include <stdexcept>
#include <string>

namespace da {

// Bad input: out-of-domain arguments, malformed configs, unnormalized schedules.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DomainError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class UnsupportedError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Transfer constraints cannot be met; carries the violated inequality.
class InfeasibleError : public std::runtime_error {
public:
    InfeasibleError(const std::string& msg, int index = -1)
        : std::runtime_error(msg), index_(index) {}
    int index() const { return index_; }

private:
    int index_;
};

class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& msg, double residual)
        : std::runtime_error(msg), residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

// Raised in reject mode when a balance goes negative.
class AxiomViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace da
