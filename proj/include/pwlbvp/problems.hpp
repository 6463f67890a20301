#pragma once

#include "pwlbvp/model.hpp"
#include "pwlbvp/problem.hpp"
#include "pwlbvp/quadrature.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pwlbvp {

/// A problem described either by a builtin name with parameters or by field
/// and boundary expressions.
struct ProblemSpec {
    std::string builtin;
    std::map<std::string, double> params;

    int dim = 0;
    std::vector<std::string> field;  ///< one expression per component, in t and x1..xn
    std::string beta0;               ///< separable: expression in x1..xn at t = 0; empty means free
    std::string beta1;               ///< separable: expression in x1..xn at t = 1; empty means free
    std::string beta;                ///< general: expression in a1..an (x(0)) and c1..cn (x(1))
    std::optional<Box> box;

    bool is_builtin() const { return !builtin.empty(); }
};

std::vector<std::string> builtin_names();

/// Registry lookup. Every builtin accepts box_lo / box_hi (all dimensions)
/// and box_lo<i> / box_hi<i> overrides; unknown names or parameters are a
/// DomainError.
Problem builtin(const std::string& name, const std::map<std::string, double>& params = {});

/// Builds the Problem; expression fields get finite-difference Jacobians.
Problem make_problem(const ProblemSpec& spec);

/// u(t) = y'(t) - f(y(t), t) along the model.
VectorFn make_control(const PwlModel& model, const Problem& problem);

/// ∫ ‖u‖² dt with the rule applied on every piece.
double control_energy(const PwlModel& model, const Problem& problem, const QuadratureRule& quad = QuadratureRule{5, 1});

}  // namespace pwlbvp
