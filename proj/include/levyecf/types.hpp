#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace levyecf {

using Index = Eigen::Index;
using Complex = std::complex<double>;

using VectorXd = Eigen::VectorXd;
using MatrixXd = Eigen::MatrixXd;
using VectorXcd = Eigen::VectorXcd;
using MatrixXcd = Eigen::MatrixXcd;

// Parameter outside the admissible region of a model family or system.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// The score Jacobian does not have full column rank on the frequency grid.
class IdentifiabilityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Matrix factorization or regularization failed.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Inconsistent or invalid experiment/estimator configuration.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed input file; carries the 1-based line number.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, long line)
        : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    long line() const noexcept { return line_; }

private:
    long line_;
};

inline constexpr Complex I_unit{0.0, 1.0};

}  // namespace levyecf
