#include "pwlbvp/error_functionals.hpp"

#include "pwlbvp/errors.hpp"
#include "pwlbvp/linear_flow.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace pwlbvp {

Integrand::Integrand(std::function<double(const Vec&)> g) : custom_(std::move(g)) {}

ErrorAccumulator ErrorAccumulator::additive() {
    ErrorAccumulator a;
    a.kind_ = Kind::Additive;
    a.metric_ = PieceMetric::Integral;
    return a;
}

ErrorAccumulator ErrorAccumulator::uniform_max() {
    ErrorAccumulator a;
    a.kind_ = Kind::UniformMax;
    a.metric_ = PieceMetric::Supremum;
    return a;
}

ErrorAccumulator ErrorAccumulator::custom(std::function<double(double, double)> g, double initial,
                                          PieceMetric metric) {
    if (!g) throw DomainError("custom accumulator needs a combining function");
    if (initial < 0.0) throw DomainError("initial accumulated error must be nonnegative");
    constexpr std::array<double, 7> lattice{0.0, 1e-3, 0.1, 0.5, 1.0, 3.0, 100.0};
    for (std::size_t i = 0; i < lattice.size(); ++i) {
        for (std::size_t j = 0; j < lattice.size(); ++j) {
            const double here = g(lattice[i], lattice[j]);
            if (i + 1 < lattice.size() && g(lattice[i + 1], lattice[j]) < here)
                throw DomainError("custom accumulator is not monotone in the accumulated error");
            if (j + 1 < lattice.size() && g(lattice[i], lattice[j + 1]) < here)
                throw DomainError("custom accumulator is not monotone in the piece error");
        }
    }
    ErrorAccumulator a;
    a.kind_ = Kind::Custom;
    a.initial_ = initial;
    a.metric_ = metric;
    a.g_ = std::move(g);
    return a;
}

double ErrorAccumulator::combine(double previous, double piece_error) const {
    switch (kind_) {
    case Kind::Additive:
        return previous + piece_error;
    case Kind::UniformMax:
        return std::max(previous, piece_error);
    case Kind::Custom:
        return g_(previous, piece_error);
    }
    return previous;
}

Vec residual(const Piece& piece, const FieldFn& f, double t) {
    const Vec y = propagate_piece(piece, t);
    return piece.a_at(t) * y + piece.b_at(t) - f(y, t);
}

double piece_error_additive(const Piece& piece, const FieldFn& f, const Integrand& g, const QuadratureRule& quad) {
    return quad.integrate(piece.start(), piece.end(), [&](double t) { return g(residual(piece, f, t)); });
}

double piece_error_uniform(const Piece& piece, const FieldFn& f, const SampleConfig& samples) {
    double sup = 0.0;
    for (double t : chebyshev_lobatto(piece.start(), piece.end(), samples.points))
        sup = std::max(sup, residual(piece, f, t).norm());
    return sup;
}

double piece_error(const Piece& piece, const FieldFn& f, const ErrorAccumulator& acc, const ErrorSettings& settings) {
    if (acc.metric() == PieceMetric::Supremum) return piece_error_uniform(piece, f, settings.samples);
    return piece_error_additive(piece, f, settings.integrand, settings.quad);
}

double accumulate(const ErrorAccumulator& acc, double previous, double piece_error) {
    if (previous < 0.0 || piece_error < 0.0) throw DomainError("accumulate: errors must be nonnegative");
    return acc.combine(previous, piece_error);
}

std::vector<double> running_errors(const PwlModel& model, const FieldFn& f, const ErrorAccumulator& acc,
                                   const ErrorSettings& settings) {
    std::vector<double> out;
    out.reserve(model.pieces().size());
    double e = acc.initial();
    for (const auto& p : model.pieces()) {
        e = accumulate(acc, e, piece_error(p, f, acc, settings));
        out.push_back(e);
    }
    return out;
}

double total_error(const PwlModel& model, const FieldFn& f, const ErrorAccumulator& acc,
                   const ErrorSettings& settings) {
    return running_errors(model, f, acc, settings).back();
}

}  // namespace pwlbvp
