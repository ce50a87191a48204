#pragma once

#include <stdexcept>
#include <string>

namespace canonsys {

// Validation failures (bad input). The CLI maps these to exit status 2.
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class StructuralError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class ClassificationError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class DataError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Numerical failures. The CLI maps these to exit status 3.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConvergenceError : public NumericError {
public:
    ConvergenceError(const std::string& what, double previous, double latest)
        : NumericError(what), previous_(previous), latest_(latest) {}

    double previous() const { return previous_; }
    double latest() const { return latest_; }

private:
    double previous_;
    double latest_;
};

class IntegrityError : public NumericError {
public:
    using NumericError::NumericError;
};

class DegeneracyError : public NumericError {
public:
    using NumericError::NumericError;
};

}  // namespace canonsys
