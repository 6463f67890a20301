#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>

namespace pwlbvp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Time-dependent vector function t -> R^n.
using VectorFn = std::function<Vec(double)>;

/// Time-dependent matrix coefficient t -> R^{n x n}. When `constant` is set the
/// function is known to be time-invariant and the exponential path is used.
struct MatrixField {
    std::function<Mat(double)> eval;
    std::optional<Mat> constant;

    static MatrixField fixed(Mat m) {
        MatrixField f;
        f.constant = m;
        f.eval = [m = std::move(m)](double) { return m; };
        return f;
    }
    static MatrixField varying(std::function<Mat(double)> fn) {
        MatrixField f;
        f.eval = std::move(fn);
        return f;
    }

    Mat operator()(double t) const { return constant ? *constant : eval(t); }
};

/// Axis-aligned box in R^n.
struct Box {
    Vec lower;
    Vec upper;

    int dim() const { return static_cast<int>(lower.size()); }
    bool contains(const Vec& x) const {
        return ((x.array() >= lower.array()) && (x.array() <= upper.array())).all();
    }
    Vec center() const { return 0.5 * (lower + upper); }
    Vec half_width() const { return 0.5 * (upper - lower); }
    Box inflated(double factor) const {
        Vec w = (upper - lower) * factor;
        return {lower - w, upper + w};
    }
};

}  // namespace pwlbvp
