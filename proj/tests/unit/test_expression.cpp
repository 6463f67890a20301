#include "doctest.h"

#include "pwlbvp/errors.hpp"
#include "pwlbvp/expression.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

using namespace pwlbvp;

namespace {

double ev(const std::string& text, double t = 0.0, std::vector<double> x = {}) {
    Vec xv = Eigen::Map<Vec>(x.data(), static_cast<Eigen::Index>(x.size()));
    return eval_expression(parse_expression(text), t, xv);
}

struct Case {
    const char* text;
    std::function<double(double, double, double)> exact;  // (t, x1, x2)
};

const std::vector<Case>& corpus() {
    static const std::vector<Case> c{
        {"1", [](double, double, double) { return 1.0; }},
        {"-3.5", [](double, double, double) { return -3.5; }},
        {"t", [](double t, double, double) { return t; }},
        {"x1", [](double, double x, double) { return x; }},
        {"x1 + x2", [](double, double x, double y) { return x + y; }},
        {"x1 - x2 - t", [](double t, double x, double y) { return x - y - t; }},
        {"x1 - (x2 - t)", [](double t, double x, double y) { return x - (y - t); }},
        {"x1*(1-x1)", [](double, double x, double) { return x * (1 - x); }},
        {"x1 / x2 / 2", [](double, double x, double y) { return x / y / 2; }},
        {"x1 / (x2 / 2)", [](double, double x, double y) { return x / (y / 2); }},
        {"2^3^2", [](double, double, double) { return 512.0; }},
        {"(2^3)^2", [](double, double, double) { return 64.0; }},
        {"-2^2", [](double, double, double) { return 4.0; }},
        {"-(2^2)", [](double, double, double) { return -4.0; }},
        {"--x1", [](double, double x, double) { return x; }},
        {"-x1*x2", [](double, double x, double y) { return -x * y; }},
        {"exp(t)-1", [](double t, double, double) { return std::exp(t) - 1; }},
        {"sin(t)^2 + cos(t)^2", [](double t, double, double) { return std::pow(std::sin(t), 2) + std::pow(std::cos(t), 2); }},
        {"log(x2)", [](double, double, double y) { return std::log(y); }},
        {"sqrt(x2)", [](double, double, double y) { return std::sqrt(y); }},
        {"abs(x1 - 1)", [](double, double x, double) { return std::abs(x - 1); }},
        {"tanh(x1)", [](double, double x, double) { return std::tanh(x); }},
        {"exp(-x1^2)", [](double, double x, double) { return std::exp((-x) * (-x)); }},
        {"exp(-(x1^2))", [](double, double x, double) { return std::exp(-(x * x)); }},
        {"x1^2 + 2*x1*x2 + x2^2", [](double, double x, double y) { return x * x + 2 * x * y + y * y; }},
        {"(x1 + x2)^2", [](double, double x, double y) { return (x + y) * (x + y); }},
        {"1/(1+exp(-t))", [](double t, double, double) { return 1 / (1 + std::exp(-t)); }},
        {"x2^0.5", [](double, double, double y) { return std::pow(y, 0.5); }},
        {"x1^3", [](double, double x, double) { return x * x * x; }},
        {"x1^-2", [](double, double x, double) { return 1 / (x * x); }},
        {"2*t - 3*x1 + 4*x2", [](double t, double x, double y) { return 2 * t - 3 * x + 4 * y; }},
        {"sin(cos(t))", [](double t, double, double) { return std::sin(std::cos(t)); }},
        {"cos(t)*sin(x1) - sin(t)*cos(x1)", [](double t, double x, double) { return std::cos(t) * std::sin(x) - std::sin(t) * std::cos(x); }},
        {"1e-3*x1", [](double, double x, double) { return 1e-3 * x; }},
        {"2.5E2 - x2", [](double, double, double y) { return 250.0 - y; }},
        {".5*t", [](double t, double, double) { return 0.5 * t; }},
        {"(((t)))", [](double t, double, double) { return t; }},
        {"x1 * x2 * t", [](double t, double x, double y) { return x * y * t; }},
        {"x1 * (x2 * t)", [](double t, double x, double y) { return x * (y * t); }},
        {"x1 - -x2", [](double, double x, double y) { return x + y; }},
        {"exp(log(x2))", [](double, double, double y) { return std::exp(std::log(y)); }},
        {"sqrt(x1^2 + x2^2)", [](double, double x, double y) { return std::sqrt(x * x + y * y); }},
        {"-exp(x1)", [](double, double x, double) { return -std::exp(x); }},
        {"x2 - 0.25*x1^2*t", [](double t, double x, double y) { return y - 0.25 * x * x * t; }},
        {"(1 - t)*x1 + t*x2", [](double t, double x, double y) { return (1 - t) * x + t * y; }},
        {"abs(-t)", [](double t, double, double) { return std::abs(-t); }},
        {"tanh(x1)/(1+x2^2)", [](double, double x, double y) { return std::tanh(x) / (1 + y * y); }},
        {"2^-1", [](double, double, double) { return 0.5; }},
        {"(-2)^3", [](double, double, double) { return -8.0; }},
        {"x1*x1*x1 - x1", [](double, double x, double) { return x * x * x - x; }},
    };
    return c;
}

}  // namespace

TEST_CASE("parse_expression examples") {
    CHECK(ev("x1*(1-x1)", 0, {0.2}) == doctest::Approx(0.16).epsilon(1e-15));
    CHECK(ev("exp(t)-1", 0) == 0.0);
    CHECK(ev("2^3^2") == 512.0);
    CHECK(ev("-2^2") == 4.0);
}

TEST_CASE("eval_expression examples") {
    CHECK(ev("t*t", 3) == 9.0);
    CHECK_THROWS_AS(ev("1/x1", 0, {0.0}), EvalError);
    CHECK(std::abs(ev("sin(t)^2 + cos(t)^2", 0.7) - 1.0) <= 1e-15);
}

TEST_CASE("checked evaluation errors") {
    CHECK_THROWS_AS(ev("log(-1)"), EvalError);
    CHECK_THROWS_AS(ev("log(0)"), EvalError);
    CHECK_THROWS_AS(ev("sqrt(x1)", 0, {-1.0}), EvalError);
    CHECK_THROWS_AS(ev("(-2)^0.5"), EvalError);
    CHECK_THROWS_AS(ev("0^-1"), EvalError);
    CHECK_THROWS_AS(ev("exp(1000)"), EvalError);
    CHECK_THROWS_AS(ev("x3", 0, {1.0, 2.0}), EvalError);
    CHECK_THROWS_AS(eval_expression(parse_expression("a1 + c1"), Bindings{}), EvalError);
    Vec a = Vec::Constant(1, 2.0), c = Vec::Constant(1, 3.0);
    CHECK(eval_expression(parse_expression("a1 + c1"), Bindings{0.0, nullptr, &a, &c}) == 5.0);
}

TEST_CASE("syntax errors carry position and expected tokens") {
    try {
        parse_expression("1 + * 2");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.position() == 4);
        CHECK_FALSE(e.expected().empty());
    }
    CHECK_THROWS_AS(parse_expression(""), ParseError);
    CHECK_THROWS_AS(parse_expression("(1 + 2"), ParseError);
    CHECK_THROWS_AS(parse_expression("1 2"), ParseError);
    CHECK_THROWS_AS(parse_expression("foo(1)"), ParseError);
    CHECK_THROWS_AS(parse_expression("y1"), ParseError);
    CHECK_THROWS_AS(parse_expression("x0"), ParseError);
    CHECK_THROWS_AS(parse_expression("sin 1"), ParseError);
}

TEST_CASE("variable scanning") {
    auto e = parse_expression("x3 * t + a2");
    CHECK(e.max_index('x') == 3);
    CHECK(e.max_index('a') == 2);
    CHECK(e.max_index('c') == 0);
    CHECK(e.uses_time());
    CHECK_FALSE(parse_expression("x1").uses_time());
}

TEST_CASE("corpus evaluates like the closed forms") {
    REQUIRE(corpus().size() == 50);
    const double samples[][3] = {{0.3, 0.7, 1.9}, {0.9, -0.4, 0.6}, {0.0, 1.3, 2.2}};
    for (const auto& c : corpus()) {
        for (const auto& s : samples) {
            double want = c.exact(s[0], s[1], s[2]);
            double got = ev(c.text, s[0], {s[1], s[2]});
            const std::string label = c.text;
            INFO(label);
            CHECK(std::abs(got - want) <= 1e-14 * std::max(1.0, std::abs(want)));
        }
    }
}

TEST_CASE("pretty-print round trip is a fixed point") {
    for (const auto& c : corpus()) {
        const std::string once = to_string(parse_expression(c.text));
        const std::string twice = to_string(parse_expression(once));
        const std::string label = std::string(c.text) + " -> " + once;
        INFO(label);
        CHECK(once == twice);
        CHECK(ev(once, 0.4, {0.6, 1.1}) == ev(c.text, 0.4, {0.6, 1.1}));
    }
}
