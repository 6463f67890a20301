#include "pwlbvp/expression.hpp"

#include "pwlbvp/errors.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <variant>
#include <vector>

namespace pwlbvp {

enum class Func { Sin, Cos, Exp, Log, Tanh, Sqrt, Abs };

namespace {

constexpr std::array<std::pair<std::string_view, Func>, 7> kFunctions{{
    {"sin", Func::Sin},
    {"cos", Func::Cos},
    {"exp", Func::Exp},
    {"log", Func::Log},
    {"tanh", Func::Tanh},
    {"sqrt", Func::Sqrt},
    {"abs", Func::Abs},
}};

std::string_view func_name(Func f) {
    for (const auto& [name, fn] : kFunctions)
        if (fn == f) return name;
    return "?";
}

}  // namespace

struct Expression::Node {
    struct Number {
        double value;
    };
    struct Variable {
        char prefix;  // 't', 'x', 'a', 'c'
        int index;    // 1-based, 0 for t
    };
    struct Negate {
        std::shared_ptr<const Node> operand;
    };
    struct Binary {
        char op;
        std::shared_ptr<const Node> lhs;
        std::shared_ptr<const Node> rhs;
    };
    struct Call {
        Func fn;
        std::shared_ptr<const Node> arg;
    };
    std::variant<Number, Variable, Negate, Binary, Call> value;
};

namespace {

using Node = Expression::Node;
using NodePtr = std::shared_ptr<const Node>;

template <class T>
NodePtr make(T v) {
    return std::make_shared<const Node>(Node{std::move(v)});
}

class Parser {
public:
    explicit Parser(std::string_view text) : text_(text) {}

    NodePtr parse() {
        NodePtr e = expr();
        skip();
        if (pos_ != text_.size()) fail({"operator", "end of input"});
        return e;
    }

private:
    std::string_view text_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(std::vector<std::string> expected) const {
        std::string msg = "syntax error at position " + std::to_string(pos_) + ": expected ";
        for (std::size_t i = 0; i < expected.size(); ++i) msg += (i ? ", " : "") + expected[i];
        if (pos_ < text_.size()) msg += std::string(" near '") + text_[pos_] + "'";
        throw ParseError(pos_, std::move(expected), msg);
    }

    void skip() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    NodePtr expr() {
        NodePtr lhs = term();
        for (;;) {
            if (accept('+')) {
                lhs = make(Node::Binary{'+', lhs, term()});
            } else if (accept('-')) {
                lhs = make(Node::Binary{'-', lhs, term()});
            } else {
                return lhs;
            }
        }
    }

    NodePtr term() {
        NodePtr lhs = factor();
        for (;;) {
            if (accept('*')) {
                lhs = make(Node::Binary{'*', lhs, factor()});
            } else if (accept('/')) {
                lhs = make(Node::Binary{'/', lhs, factor()});
            } else {
                return lhs;
            }
        }
    }

    NodePtr factor() {
        NodePtr base = unary();
        if (accept('^')) return make(Node::Binary{'^', base, factor()});
        return base;
    }

    NodePtr unary() {
        if (accept('-')) return make(Node::Negate{unary()});
        return atom();
    }

    NodePtr atom() {
        skip();
        if (pos_ >= text_.size()) fail({"number", "identifier", "'('", "'-'"});
        const char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            NodePtr e = expr();
            if (!accept(')')) fail({"')'"});
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
        fail({"number", "identifier", "'('", "'-'"});
    }

    NodePtr number() {
        const std::size_t start = pos_;
        auto digits = [&] {
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        };
        digits();
        if (pos_ < text_.size() && text_[pos_] == '.') {
            ++pos_;
            digits();
        }
        if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
            std::size_t save = pos_++;
            if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
            if (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
                digits();
            } else {
                pos_ = save;
            }
        }
        double value = 0.0;
        const auto res = std::from_chars(text_.data() + start, text_.data() + pos_, value);
        if (res.ec != std::errc() || res.ptr != text_.data() + pos_) {
            pos_ = start;
            fail({"number"});
        }
        return make(Node::Number{value});
    }

    NodePtr identifier() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
            ++pos_;
        const std::string_view name = text_.substr(start, pos_ - start);
        for (const auto& [fname, fn] : kFunctions) {
            if (name != fname) continue;
            if (!accept('(')) fail({"'('"});
            NodePtr arg = expr();
            if (!accept(')')) fail({"')'"});
            return make(Node::Call{fn, arg});
        }
        if (name == "t") return make(Node::Variable{'t', 0});
        if (name.size() >= 2 && (name[0] == 'x' || name[0] == 'a' || name[0] == 'c') && name[1] != '0') {
            int index = 0;
            const auto res = std::from_chars(name.data() + 1, name.data() + name.size(), index);
            if (res.ec == std::errc() && res.ptr == name.data() + name.size() && index >= 1)
                return make(Node::Variable{name[0], index});
        }
        pos_ = start;
        fail({"function", "variable t", "variable x1..xn"});
    }
};

double checked(double v, const char* what) {
    if (!std::isfinite(v)) throw EvalError(std::string("non-finite result in ") + what);
    return v;
}

double lookup(const Vec* v, char prefix, int index) {
    if (!v) throw EvalError(std::string("unbound variable ") + prefix + std::to_string(index));
    if (index > v->size())
        throw EvalError(std::string("unbound variable ") + prefix + std::to_string(index) + " (dimension " +
                        std::to_string(v->size()) + ")");
    return (*v)(index - 1);
}

double eval(const Node& node, const Bindings& b) {
    return std::visit(
        [&](const auto& n) -> double {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, Node::Number>) {
                return n.value;
            } else if constexpr (std::is_same_v<T, Node::Variable>) {
                switch (n.prefix) {
                case 't':
                    return b.t;
                case 'x':
                    return lookup(b.x, 'x', n.index);
                case 'a':
                    return lookup(b.a, 'a', n.index);
                default:
                    return lookup(b.c, 'c', n.index);
                }
            } else if constexpr (std::is_same_v<T, Node::Negate>) {
                return -eval(*n.operand, b);
            } else if constexpr (std::is_same_v<T, Node::Binary>) {
                const double l = eval(*n.lhs, b);
                const double r = eval(*n.rhs, b);
                switch (n.op) {
                case '+':
                    return checked(l + r, "addition");
                case '-':
                    return checked(l - r, "subtraction");
                case '*':
                    return checked(l * r, "multiplication");
                case '/':
                    if (r == 0.0) throw EvalError("division by zero");
                    return checked(l / r, "division");
                default:
                    if (l < 0.0 && std::trunc(r) != r)
                        throw EvalError("negative base with non-integer exponent");
                    if (l == 0.0 && r < 0.0) throw EvalError("division by zero in power");
                    return checked(std::pow(l, r), "power");
                }
            } else {
                const double x = eval(*n.arg, b);
                switch (n.fn) {
                case Func::Sin:
                    return std::sin(x);
                case Func::Cos:
                    return std::cos(x);
                case Func::Exp:
                    return checked(std::exp(x), "exp");
                case Func::Log:
                    if (x <= 0.0) throw EvalError("log of a non-positive number");
                    return std::log(x);
                case Func::Tanh:
                    return std::tanh(x);
                case Func::Sqrt:
                    if (x < 0.0) throw EvalError("sqrt of a negative number");
                    return std::sqrt(x);
                case Func::Abs:
                    return std::abs(x);
                }
                return x;
            }
        },
        node.value);
}

// Binding strength used by the printer.
int precedence(const Node& node) {
    if (const auto* b = std::get_if<Node::Binary>(&node.value)) {
        if (b->op == '+' || b->op == '-') return 1;
        if (b->op == '*' || b->op == '/') return 2;
        return 3;
    }
    if (std::holds_alternative<Node::Negate>(node.value)) return 4;
    if (const auto* n = std::get_if<Node::Number>(&node.value)) return n->value < 0.0 ? 0 : 5;
    return 5;
}

std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void print(const Node& node, std::string& out);

void print_wrapped(const Node& node, bool wrap, std::string& out) {
    if (wrap) out += '(';
    print(node, out);
    if (wrap) out += ')';
}

void print(const Node& node, std::string& out) {
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, Node::Number>) {
                out += n.value < 0.0 ? "(" + format_number(n.value) + ")" : format_number(n.value);
            } else if constexpr (std::is_same_v<T, Node::Variable>) {
                out += n.prefix;
                if (n.prefix != 't') out += std::to_string(n.index);
            } else if constexpr (std::is_same_v<T, Node::Negate>) {
                out += '-';
                print_wrapped(*n.operand, precedence(*n.operand) < 4, out);
            } else if constexpr (std::is_same_v<T, Node::Binary>) {
                const int p = precedence(node);
                if (n.op == '^') {
                    // base must be a unary; exponent a factor
                    print_wrapped(*n.lhs, precedence(*n.lhs) < 4, out);
                    out += '^';
                    print_wrapped(*n.rhs, precedence(*n.rhs) < 3, out);
                } else {
                    print_wrapped(*n.lhs, precedence(*n.lhs) < p, out);
                    out += n.op;
                    print_wrapped(*n.rhs, precedence(*n.rhs) <= p, out);
                }
            } else {
                out += func_name(n.fn);
                out += '(';
                print(*n.arg, out);
                out += ')';
            }
        },
        node.value);
}

void scan(const Node& node, char prefix, int& best, bool& time) {
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, Node::Variable>) {
                if (n.prefix == 't') time = true;
                if (n.prefix == prefix) best = std::max(best, n.index);
            } else if constexpr (std::is_same_v<T, Node::Negate>) {
                scan(*n.operand, prefix, best, time);
            } else if constexpr (std::is_same_v<T, Node::Binary>) {
                scan(*n.lhs, prefix, best, time);
                scan(*n.rhs, prefix, best, time);
            } else if constexpr (std::is_same_v<T, Node::Call>) {
                scan(*n.arg, prefix, best, time);
            }
        },
        node.value);
}

}  // namespace

int Expression::max_index(char prefix) const {
    int best = 0;
    bool time = false;
    if (root_) scan(*root_, prefix, best, time);
    return best;
}

bool Expression::uses_time() const {
    int best = 0;
    bool time = false;
    if (root_) scan(*root_, 't', best, time);
    return time;
}

Expression parse_expression(std::string_view text) { return Expression(Parser(text).parse()); }

double eval_expression(const Expression& expr, const Bindings& bindings) {
    if (!expr) throw EvalError("empty expression");
    return checked(eval(*expr.root(), bindings), "expression");
}

double eval_expression(const Expression& expr, double t, const Vec& x) {
    return eval_expression(expr, Bindings{t, &x, nullptr, nullptr});
}

std::string to_string(const Expression& expr) {
    std::string out;
    if (expr) print(*expr.root(), out);
    return out;
}

}  // namespace pwlbvp
