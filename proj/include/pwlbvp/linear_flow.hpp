#pragma once

#include "pwlbvp/mesh.hpp"
#include "pwlbvp/model.hpp"
#include "pwlbvp/quadrature.hpp"
#include "pwlbvp/types.hpp"

#include <vector>

namespace pwlbvp {

/// Knobs shared by the propagation routines.
struct FlowOptions {
    int substeps = 8;          ///< RK4 substeps per integration interval
    QuadratureRule quad{5, 1}; ///< rule for the convolution integral
    int segments = 8;          ///< segments of [0, t] in variation_of_constants
};

/// Φ(target, source) of y' = A(t) y.
struct FundamentalMatrix {
    double source = 0.0;
    double target = 0.0;
    Mat phi;
    int substeps = 0;
};

/// e^M by scaling and squaring around a degree-13 Padé approximant.
Mat mat_exp(const Mat& m);

/// Constant A: mat_exp((t - s) A). Time-varying A: classical RK4 on
/// Φ' = A(τ) Φ, Φ(s) = I over `substeps` uniform substeps.
FundamentalMatrix fundamental_matrix(const MatrixField& a, double s, double t, int substeps = 8);

/// ∫_s^t Φ(t, τ) b(τ) dτ by the quadrature rule in `opts`.
Vec convolution(const MatrixField& a, const VectorFn& b, double s, double t, const FlowOptions& opts = {});

/// y(t) = Φ(t, t_i) θ_i + ∫_{t_i}^t Φ(t, s) b_i(s) ds for the piece.
/// A ≡ 0 integrates the polynomial b exactly; constant A uses the exponential
/// of the augmented (state, monomial) system, which is exact for polynomial b.
Vec propagate_piece(const Piece& piece, double t, const FlowOptions& opts = {});

/// y(t; η) = Φ(t, 0) η + ∫_0^t Φ(t, s) b(s) ds.
Vec variation_of_constants(const MatrixField& a, const VectorFn& b, const Vec& eta, double t,
                           const FlowOptions& opts = {});

/// Node-wise data of y(t; η) on a mesh: y(t_i; η) = transition[i] η + particular[i].
struct MeshFlow {
    std::vector<Mat> transition;  ///< Φ(t_i, 0)
    std::vector<Vec> particular;  ///< ∫_0^{t_i} Φ(t_i, s) b(s) ds

    Vec at_node(int i, const Vec& eta) const;
    const Mat& end_transition() const { return transition.back(); }
    const Vec& end_particular() const { return particular.back(); }
};

MeshFlow flow_on_mesh(const MatrixField& a, const VectorFn& b, const Mesh& mesh, const FlowOptions& opts = {});

}  // namespace pwlbvp
