#pragma once

#include "pwlbvp/mesh.hpp"
#include "pwlbvp/problem.hpp"
#include "pwlbvp/types.hpp"

#include <optional>
#include <span>
#include <vector>

namespace pwlbvp {

/// Monomial basis φ_j(s) = s^j in the local coordinate s = (t - t_i) / (t_{i+1} - t_i).
struct PolynomialBasis {
    int degree = 1;

    double value(int j, double s) const;
    /// Gram matrix ∫_0^1 φ_i φ_j ds.
    Mat gram() const;
};

/// One piece y' = A(t) y + b(t) on [start, end] with y(start) = theta.
/// A(t) = Σ_j A_j s^j and b(t) = Σ_j b_j s^j in the local coordinate.
class Piece {
public:
    enum class Structure { ZeroA, ConstantA, VaryingA };

    Piece(double start, double end, std::vector<Mat> a_coeffs, std::vector<Vec> b_coeffs, Vec theta);

    /// A ≡ 0 and b the derivative of the cubic Hermite interpolant of
    /// (y0, v0) at `start` and (y1, v1) at `end`.
    static Piece hermite(double start, double end, const Vec& y0, const Vec& v0, const Vec& y1, const Vec& v1);

    /// Constant A and constant b.
    static Piece constant(double start, double end, const Mat& a, const Vec& b, const Vec& theta);

    double start() const { return start_; }
    double end() const { return end_; }
    double length() const { return end_ - start_; }
    double local(double t) const { return (t - start_) / (end_ - start_); }
    int dim() const { return static_cast<int>(theta_.size()); }

    const Vec& theta() const { return theta_; }
    const std::vector<Mat>& a_coeffs() const { return a_; }
    const std::vector<Vec>& b_coeffs() const { return b_; }
    Structure structure() const { return structure_; }

    Mat a_at(double t) const;
    Vec b_at(double t) const;

private:
    double start_;
    double end_;
    std::vector<Mat> a_;
    std::vector<Vec> b_;
    Vec theta_;
    Structure structure_;
};

/// Piecewise linear-ODE model over a mesh: one piece per interval plus the
/// terminal value θ_N.
class PwlModel {
public:
    PwlModel(Mesh mesh, std::vector<Piece> pieces, Vec theta_end);

    /// Cubic Hermite model through node values and node slopes.
    static PwlModel hermite(const Mesh& mesh, std::span<const Vec> values, std::span<const Vec> slopes);

    const Mesh& mesh() const { return mesh_; }
    const std::vector<Piece>& pieces() const { return pieces_; }
    const Piece& piece(int i) const { return pieces_[static_cast<std::size_t>(i)]; }
    int intervals() const { return mesh_.intervals(); }
    int dim() const { return static_cast<int>(theta_end_.size()); }

    /// θ_i for i < N, θ_N for i = N.
    const Vec& theta(int i) const;
    const Vec& theta_end() const { return theta_end_; }

private:
    Mesh mesh_;
    std::vector<Piece> pieces_;
    Vec theta_end_;
};

/// y(t) of the piece containing t; θ_i at node t_i (i < N), θ_N at t = 1.
Vec eval_model(const PwlModel& model, double t);

/// A_i(t) y(t) + b_i(t) for the piece containing t (left piece at t = 1).
Vec model_derivative(const PwlModel& model, double t);

/// Slope at node k: right piece for k < N, left piece at k = N.
Vec node_slope(const PwlModel& model, int k);

struct Violation {
    enum class Kind { Value, Slope };
    Kind kind;
    int node;
    double magnitude;
};

struct ValidationReport {
    std::vector<Violation> violations;
    std::optional<double> beta_residual;

    bool ok() const { return violations.empty(); }
};

/// Value continuity |y(t_{i+1}^-) - θ_{i+1}| and slope continuity at interior
/// nodes; violations above eps are listed. The β residual is reported when a
/// boundary condition is supplied.
ValidationReport validate_model(const PwlModel& model, double eps, const BoundaryCondition* boundary = nullptr);

}  // namespace pwlbvp
