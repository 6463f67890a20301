#include "pwlbvp/quadrature.hpp"

#include "pwlbvp/errors.hpp"

#include <cmath>
#include <numbers>

namespace pwlbvp {

namespace {

// Newton iteration on P_n starting from the Chebyshev-like guess.
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    x.assign(static_cast<std::size_t>(n), 0.0);
    w.assign(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0;
            double p1 = 0.0;
            for (int k = 1; k <= n; ++k) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
            }
            dp = n * (z * p0 - p1) / (z * z - 1.0);
            const double dz = p0 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        // recompute derivative at the converged root
        double p0 = 1.0;
        double p1 = 0.0;
        for (int k = 1; k <= n; ++k) {
            const double p2 = p1;
            p1 = p0;
            p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
        }
        dp = n * (z * p0 - p1) / (z * z - 1.0);
        const double wi = 2.0 / ((1.0 - z * z) * dp * dp);
        // map [-1, 1] -> [0, 1]
        x[static_cast<std::size_t>(i)] = 0.5 * (1.0 - z);
        x[static_cast<std::size_t>(n - 1 - i)] = 0.5 * (1.0 + z);
        w[static_cast<std::size_t>(i)] = 0.5 * wi;
        w[static_cast<std::size_t>(n - 1 - i)] = 0.5 * wi;
    }
    if (n % 2 == 1) x[static_cast<std::size_t>(n / 2)] = 0.5;
}

}  // namespace

QuadratureRule::QuadratureRule(int order, int panels) : order_(order), panels_(panels) {
    if (order < 1 || order > 64) throw DomainError("quadrature order must be in [1, 64]");
    if (panels < 1) throw DomainError("quadrature panel count must be positive");
    gauss_legendre(order, nodes_, weights_);
}

std::vector<double> chebyshev_lobatto(double a, double b, int count) {
    if (count < 2) throw DomainError("Chebyshev sampling needs at least 2 points");
    std::vector<double> out(static_cast<std::size_t>(count));
    const int m = count - 1;
    for (int j = 0; j <= m; ++j) {
        // j = 0 -> a, j = m -> b exactly
        const double c = -std::cos(std::numbers::pi * j / m);
        double t = a + 0.5 * (b - a) * (1.0 + c);
        if (j == 0) t = a;
        if (j == m) t = b;
        if (2 * j == m) t = 0.5 * (a + b);
        out[static_cast<std::size_t>(j)] = t;
    }
    return out;
}

}  // namespace pwlbvp
