#pragma once

#include "pwlbvp/model.hpp"
#include "pwlbvp/problem.hpp"
#include "pwlbvp/quadrature.hpp"

#include <functional>
#include <vector>

namespace pwlbvp {

/// Nonnegative integrand G on R^n with G(0) = 0. The default is ‖r‖².
class Integrand {
public:
    Integrand() = default;
    explicit Integrand(std::function<double(const Vec&)> g);

    static Integrand squared_norm() { return {}; }

    double operator()(const Vec& r) const { return custom_ ? custom_(r) : r.squaredNorm(); }
    bool is_squared_norm() const { return !custom_; }

private:
    std::function<double(const Vec&)> custom_;
};

/// Which per-piece error an accumulator folds: the integral of G over the
/// piece, or the sampled supremum of ‖residual‖.
enum class PieceMetric { Integral, Supremum };

/// E_k = g(E_{k-1}, e_k) with E_0 given; g nondecreasing in both arguments.
class ErrorAccumulator {
public:
    enum class Kind { Additive, UniformMax, Custom };

    static ErrorAccumulator additive();
    static ErrorAccumulator uniform_max();
    /// Monotonicity of g is checked on a sample lattice; throws DomainError otherwise.
    static ErrorAccumulator custom(std::function<double(double, double)> g, double initial, PieceMetric metric);

    Kind kind() const { return kind_; }
    double initial() const { return initial_; }
    PieceMetric metric() const { return metric_; }

    double combine(double previous, double piece_error) const;

private:
    Kind kind_ = Kind::Additive;
    double initial_ = 0.0;
    PieceMetric metric_ = PieceMetric::Integral;
    std::function<double(double, double)> g_;
};

/// Sampling setup for the supremum metric.
struct SampleConfig {
    int points = 33;  ///< Chebyshev-Lobatto points per piece
};

/// Everything needed to measure a piece against a vector field.
struct ErrorSettings {
    Integrand integrand;
    QuadratureRule quad{5, 1};
    SampleConfig samples;
};

/// A_i(t) y(t) + b_i(t) - f(y(t), t).
Vec residual(const Piece& piece, const FieldFn& f, double t);

/// ∫ G(residual) dt over the piece.
double piece_error_additive(const Piece& piece, const FieldFn& f, const Integrand& g, const QuadratureRule& quad);

/// max ‖residual‖ over Chebyshev-Lobatto samples of the piece.
double piece_error_uniform(const Piece& piece, const FieldFn& f, const SampleConfig& samples = {});

/// Piece error selected by the accumulator's metric.
double piece_error(const Piece& piece, const FieldFn& f, const ErrorAccumulator& acc, const ErrorSettings& settings);

/// g(E_prev, e_k); negative inputs are a DomainError.
double accumulate(const ErrorAccumulator& acc, double previous, double piece_error);

/// Running values E_1 ... E_N of the fold over the model's pieces.
std::vector<double> running_errors(const PwlModel& model, const FieldFn& f, const ErrorAccumulator& acc,
                                   const ErrorSettings& settings = {});

/// E_N: the accumulator folded over all piece errors.
double total_error(const PwlModel& model, const FieldFn& f, const ErrorAccumulator& acc,
                   const ErrorSettings& settings = {});

}  // namespace pwlbvp
