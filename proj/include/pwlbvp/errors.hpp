#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace pwlbvp {

/// Argument outside the domain of an operation (time outside [0,1], non-finite
/// matrix entries, degenerate boxes, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// The discretized constraint sets admit no parameter sequence. `constraint()`
/// names the failing set: "Omega_1" (initial boundary), "Omega_N" (terminal
/// boundary) or "Omega_k" for an interior stage that became unreachable.
class InfeasibleDiscretization : public std::runtime_error {
public:
    InfeasibleDiscretization(std::string constraint, const std::string& what)
        : std::runtime_error(what), constraint_(std::move(constraint)) {}
    const std::string& constraint() const noexcept { return constraint_; }

private:
    std::string constraint_;
};

/// Brute-force enumeration refused because the instance is too large.
class GuardExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Pointwise Newton correction impossible: the Jacobian field is (nearly)
/// singular at `time()`.
class PointwiseUnavailable : public std::runtime_error {
public:
    PointwiseUnavailable(double t, const std::string& what)
        : std::runtime_error(what), time_(t) {}
    double time() const noexcept { return time_; }

private:
    double time_;
};

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t position, std::vector<std::string> expected, const std::string& what)
        : std::runtime_error(what), position_(position), expected_(std::move(expected)) {}
    std::size_t position() const noexcept { return position_; }
    const std::vector<std::string>& expected() const noexcept { return expected_; }

private:
    std::size_t position_;
    std::vector<std::string> expected_;
};

/// Checked failure while evaluating an expression (division by zero, log of a
/// negative number, unbound variable, non-finite result).
class EvalError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class ConfigError : public std::runtime_error {
public:
    ConfigError(int line, const std::string& what)
        : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

}  // namespace pwlbvp
