#pragma once

#include "pwlbvp/types.hpp"

#include <memory>
#include <string>
#include <string_view>

namespace pwlbvp {

/// Immutable expression tree over literals, the variables t, x1..xn (and a1..an,
/// c1..cn inside coupled boundary expressions), + - * / ^, unary minus and the
/// functions sin cos exp log tanh sqrt abs.
class Expression {
public:
    struct Node;

    Expression() = default;
    explicit Expression(std::shared_ptr<const Node> root) : root_(std::move(root)) {}

    const Node* root() const { return root_.get(); }
    explicit operator bool() const { return root_ != nullptr; }

    /// Largest index used by a variable with the given prefix ('x', 'a' or 'c'); 0 if none.
    int max_index(char prefix) const;
    bool uses_time() const;

private:
    std::shared_ptr<const Node> root_;
};

/// Values the variables are bound to. Unset vectors leave the corresponding
/// variables unbound.
struct Bindings {
    double t = 0.0;
    const Vec* x = nullptr;
    const Vec* a = nullptr;
    const Vec* c = nullptr;
};

/// Recursive-descent parse; ParseError carries the offset and expected tokens.
Expression parse_expression(std::string_view text);

/// EvalError on unbound variables, division by zero, log or sqrt outside
/// their domain, negative base with non-integer exponent, non-finite results.
double eval_expression(const Expression& expr, const Bindings& bindings);
double eval_expression(const Expression& expr, double t, const Vec& x);

/// Minimal-parenthesis rendering with 17 significant digits for literals.
std::string to_string(const Expression& expr);

}  // namespace pwlbvp
