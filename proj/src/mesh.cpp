#include "pwlbvp/mesh.hpp"

#include "pwlbvp/errors.hpp"

#include <algorithm>
#include <cmath>

namespace pwlbvp {

Mesh::Mesh(std::vector<double> nodes) : nodes_(std::move(nodes)) {
    if (nodes_.size() < 3) throw DomainError("mesh needs N >= 2 intervals");
    if (nodes_.front() != 0.0 || nodes_.back() != 1.0)
        throw DomainError("mesh endpoints must be exactly 0 and 1");
    for (std::size_t i = 1; i < nodes_.size(); ++i) {
        if (!(nodes_[i] > nodes_[i - 1])) throw DomainError("mesh nodes must be strictly increasing");
    }
}

Mesh Mesh::uniform(int intervals) {
    if (intervals < 2) throw DomainError("mesh needs N >= 2 intervals");
    std::vector<double> nodes(static_cast<std::size_t>(intervals) + 1);
    for (int i = 0; i <= intervals; ++i) nodes[static_cast<std::size_t>(i)] = static_cast<double>(i) / intervals;
    return Mesh(std::move(nodes));
}

int Mesh::interval_of(double t) const {
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("time outside [0, 1]");
    auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t);
    int i = static_cast<int>(it - nodes_.begin()) - 1;
    return std::min(i, intervals() - 1);
}

Mesh Mesh::subdivided(int parts) const {
    if (parts < 1) throw DomainError("subdivision count must be positive");
    if (parts == 1) return *this;
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(intervals() * parts) + 1);
    for (int i = 0; i < intervals(); ++i) {
        const double a = node(i);
        const double h = width(i);
        out.push_back(a);
        for (int j = 1; j < parts; ++j) out.push_back(a + h * j / parts);
    }
    out.push_back(1.0);
    return Mesh(std::move(out));
}

}  // namespace pwlbvp
