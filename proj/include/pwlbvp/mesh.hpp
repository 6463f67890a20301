#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pwlbvp {

/// Node points 0 = t_0 < t_1 < ... < t_N = 1 with N >= 2.
class Mesh {
public:
    explicit Mesh(std::vector<double> nodes);

    static Mesh uniform(int intervals);

    int intervals() const { return static_cast<int>(nodes_.size()) - 1; }
    std::span<const double> nodes() const { return nodes_; }
    double node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
    double width(int i) const { return node(i + 1) - node(i); }

    /// Index i of the interval [t_i, t_{i+1}) containing t; t = 1 maps to the
    /// last interval. Throws DomainError outside [0, 1].
    int interval_of(double t) const;

    /// Each interval split into `parts` equal subintervals.
    Mesh subdivided(int parts) const;

    bool operator==(const Mesh&) const = default;

private:
    std::vector<double> nodes_;
};

}  // namespace pwlbvp
