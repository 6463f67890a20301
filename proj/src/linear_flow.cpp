#include "pwlbvp/linear_flow.hpp"

#include "pwlbvp/errors.hpp"

#include <array>
#include <cmath>

namespace pwlbvp {

namespace {

constexpr std::array<double, 14> kPade13{
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0,
    129060195264000.0,   10559470521600.0,    670442572800.0,     33522128640.0,
    1323241920.0,        40840800.0,          960960.0,           16380.0,
    182.0,               1.0};
constexpr double kTheta13 = 5.371920351148152;

Mat rk4_fundamental(const MatrixField& a, double s, double t, int substeps) {
    const auto n = a(s).rows();
    Mat phi = Mat::Identity(n, n);
    const double h = (t - s) / substeps;
    for (int j = 0; j < substeps; ++j) {
        const double tau = s + j * h;
        const Mat a0 = a(tau);
        const Mat am = a(tau + 0.5 * h);
        const Mat a1 = a(j + 1 == substeps ? t : tau + h);
        const Mat k1 = a0 * phi;
        const Mat k2 = am * (phi + 0.5 * h * k1);
        const Mat k3 = am * (phi + 0.5 * h * k2);
        const Mat k4 = a1 * (phi + h * k3);
        phi += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return phi;
}

Mat phi_between(const MatrixField& a, double s, double t, int substeps) {
    if (s == t) {
        const auto n = a(s).rows();
        return Mat::Identity(n, n);
    }
    if (a.constant) return mat_exp((t - s) * *a.constant);
    return rk4_fundamental(a, s, t, substeps);
}

}  // namespace

Mat mat_exp(const Mat& m) {
    if (m.rows() != m.cols()) throw DomainError("mat_exp: matrix must be square");
    if (!m.allFinite()) throw DomainError("mat_exp: non-finite entries");
    const auto n = m.rows();
    if (n == 0) return m;
    if (m.isZero(0.0)) return Mat::Identity(n, n);

    const double norm1 = m.cwiseAbs().colwise().sum().maxCoeff();
    int squarings = 0;
    if (norm1 > kTheta13) squarings = static_cast<int>(std::ceil(std::log2(norm1 / kTheta13)));
    const Mat a = m / std::ldexp(1.0, squarings);

    const Mat id = Mat::Identity(n, n);
    const Mat a2 = a * a;
    const Mat a4 = a2 * a2;
    const Mat a6 = a4 * a2;
    const auto& b = kPade13;
    const Mat u_inner = a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id;
    const Mat u = a * u_inner;
    const Mat v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;
    Mat r = (v - u).partialPivLu().solve(v + u);
    for (int k = 0; k < squarings; ++k) r = r * r;
    return r;
}

FundamentalMatrix fundamental_matrix(const MatrixField& a, double s, double t, int substeps) {
    if (s > t) throw DomainError("fundamental_matrix: source time after target time");
    if (substeps < 1) throw DomainError("fundamental_matrix: substeps must be positive");
    return {s, t, phi_between(a, s, t, substeps), substeps};
}

Vec convolution(const MatrixField& a, const VectorFn& b, double s, double t, const FlowOptions& opts) {
    Vec sum = Vec::Zero(b(s).size());
    if (s == t) return sum;
    opts.quad.for_each_node(s, t, [&](double tau, double w) {
        sum += w * (phi_between(a, tau, t, opts.substeps) * b(tau));
    });
    return sum;
}

Vec propagate_piece(const Piece& piece, double t, const FlowOptions& opts) {
    if (!(t >= piece.start() && t <= piece.end())) throw DomainError("propagate_piece: time outside the piece");
    if (t == piece.start()) return piece.theta();
    const double s = piece.local(t);
    const double h = piece.length();
    const auto& bc = piece.b_coeffs();

    switch (piece.structure()) {
    case Piece::Structure::ZeroA: {
        // θ + h Σ_j b_j s^{j+1} / (j + 1), Horner in s
        Vec acc = bc.back() / static_cast<double>(bc.size());
        for (auto j = static_cast<int>(bc.size()) - 2; j >= 0; --j)
            acc = acc * s + bc[static_cast<std::size_t>(j)] / static_cast<double>(j + 1);
        return piece.theta() + (h * s) * acc;
    }
    case Piece::Structure::ConstantA: {
        // z = (y, 1, s, s^2, ...), dz/ds = K z
        const auto n = piece.dim();
        const auto m = static_cast<Eigen::Index>(bc.size());
        Mat k = Mat::Zero(n + m, n + m);
        k.topLeftCorner(n, n) = h * piece.a_coeffs().front();
        for (Eigen::Index j = 0; j < m; ++j) k.block(0, n + j, n, 1) = h * bc[static_cast<std::size_t>(j)];
        for (Eigen::Index j = 1; j < m; ++j) k(n + j, n + j - 1) = static_cast<double>(j);
        Vec z0 = Vec::Zero(n + m);
        z0.head(n) = piece.theta();
        z0(n) = 1.0;
        return (mat_exp(s * k) * z0).head(n);
    }
    case Piece::Structure::VaryingA: {
        const auto a = MatrixField::varying([&piece](double tau) { return piece.a_at(tau); });
        const VectorFn b = [&piece](double tau) { return piece.b_at(tau); };
        return phi_between(a, piece.start(), t, opts.substeps) * piece.theta() +
               convolution(a, b, piece.start(), t, opts);
    }
    }
    return piece.theta();
}

Vec variation_of_constants(const MatrixField& a, const VectorFn& b, const Vec& eta, double t,
                           const FlowOptions& opts) {
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("variation_of_constants: time outside [0, 1]");
    if (opts.segments < 1) throw DomainError("variation_of_constants: segments must be positive");
    Vec y = eta;
    if (t == 0.0) return y;
    double lo = 0.0;
    for (int j = 1; j <= opts.segments; ++j) {
        const double hi = (j == opts.segments) ? t : t * j / opts.segments;
        y = phi_between(a, lo, hi, opts.substeps) * y + convolution(a, b, lo, hi, opts);
        lo = hi;
    }
    return y;
}

Vec MeshFlow::at_node(int i, const Vec& eta) const {
    const auto k = static_cast<std::size_t>(i);
    return transition[k] * eta + particular[k];
}

MeshFlow flow_on_mesh(const MatrixField& a, const VectorFn& b, const Mesh& mesh, const FlowOptions& opts) {
    MeshFlow out;
    const auto n = b(0.0).size();
    out.transition.push_back(Mat::Identity(n, n));
    out.particular.push_back(Vec::Zero(n));
    for (int i = 0; i < mesh.intervals(); ++i) {
        const double lo = mesh.node(i);
        const double hi = mesh.node(i + 1);
        const Mat step = phi_between(a, lo, hi, opts.substeps);
        out.transition.push_back(step * out.transition.back());
        out.particular.push_back(step * out.particular.back() + convolution(a, b, lo, hi, opts));
    }
    return out;
}

}  // namespace pwlbvp
