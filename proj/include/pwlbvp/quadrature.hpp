#pragma once

#include <span>
#include <vector>

namespace pwlbvp {

/// Composite Gauss-Legendre rule: `order` nodes on each of `panels` equal
/// panels. Exact for polynomials of degree <= 2*order - 1 on each panel.
class QuadratureRule {
public:
    explicit QuadratureRule(int order = 5, int panels = 1);

    int order() const { return order_; }
    int panels() const { return panels_; }

    /// Nodes and weights of one panel mapped to [0, 1].
    std::span<const double> nodes() const { return nodes_; }
    std::span<const double> weights() const { return weights_; }

    /// Calls fn(t, w) for every node t in [a, b] with its weight w (weights
    /// already scaled by the panel length). Order is deterministic.
    template <class Fn>
    void for_each_node(double a, double b, Fn&& fn) const {
        const double h = (b - a) / panels_;
        for (int p = 0; p < panels_; ++p) {
            const double lo = a + p * h;
            for (int q = 0; q < order_; ++q) fn(lo + h * nodes_[q], h * weights_[q]);
        }
    }

    template <class Fn>
    double integrate(double a, double b, Fn&& f) const {
        double sum = 0.0;
        for_each_node(a, b, [&](double t, double w) { sum += w * f(t); });
        return sum;
    }

private:
    int order_;
    int panels_;
    std::vector<double> nodes_;
    std::vector<double> weights_;
};

/// Chebyshev-Lobatto points cos(j*pi/(m-1)) mapped onto [a, b], ascending.
/// Endpoints are included; the m -> 2m - 1 refinement is nested.
std::vector<double> chebyshev_lobatto(double a, double b, int count);

}  // namespace pwlbvp
