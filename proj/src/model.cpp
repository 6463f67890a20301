#include "pwlbvp/model.hpp"

#include "pwlbvp/errors.hpp"
#include "pwlbvp/linear_flow.hpp"

namespace pwlbvp {

double PolynomialBasis::value(int j, double s) const {
    double r = 1.0;
    for (int k = 0; k < j; ++k) r *= s;
    return r;
}

Mat PolynomialBasis::gram() const {
    const int m = degree + 1;
    Mat g(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) g(i, j) = 1.0 / (i + j + 1);
    return g;
}

namespace {

Piece::Structure classify(const std::vector<Mat>& a) {
    bool all_zero = true;
    for (const auto& m : a) all_zero = all_zero && m.isZero(0.0);
    if (all_zero) return Piece::Structure::ZeroA;
    for (std::size_t j = 1; j < a.size(); ++j)
        if (!a[j].isZero(0.0)) return Piece::Structure::VaryingA;
    return Piece::Structure::ConstantA;
}

}  // namespace

Piece::Piece(double start, double end, std::vector<Mat> a_coeffs, std::vector<Vec> b_coeffs, Vec theta)
    : start_(start), end_(end), a_(std::move(a_coeffs)), b_(std::move(b_coeffs)), theta_(std::move(theta)) {
    if (!(end_ > start_)) throw DomainError("piece interval must have positive length");
    const auto n = theta_.size();
    if (a_.empty()) a_.push_back(Mat::Zero(n, n));
    if (b_.empty()) b_.push_back(Vec::Zero(n));
    for (const auto& m : a_)
        if (m.rows() != n || m.cols() != n) throw DomainError("piece A coefficient has wrong shape");
    for (const auto& v : b_)
        if (v.size() != n) throw DomainError("piece b coefficient has wrong size");
    structure_ = classify(a_);
}

Piece Piece::hermite(double start, double end, const Vec& y0, const Vec& v0, const Vec& y1, const Vec& v1) {
    const double h = end - start;
    const Vec dy = (y1 - y0) / h;
    std::vector<Vec> b{v0, 6.0 * dy - 4.0 * v0 - 2.0 * v1, -6.0 * dy + 3.0 * v0 + 3.0 * v1};
    const auto n = y0.size();
    return Piece(start, end, {Mat::Zero(n, n)}, std::move(b), y0);
}

Piece Piece::constant(double start, double end, const Mat& a, const Vec& b, const Vec& theta) {
    return Piece(start, end, {a}, {b}, theta);
}

Mat Piece::a_at(double t) const {
    const double s = local(t);
    Mat r = a_.back();
    for (auto k = static_cast<int>(a_.size()) - 2; k >= 0; --k) r = r * s + a_[static_cast<std::size_t>(k)];
    return r;
}

Vec Piece::b_at(double t) const {
    const double s = local(t);
    Vec r = b_.back();
    for (auto k = static_cast<int>(b_.size()) - 2; k >= 0; --k) r = r * s + b_[static_cast<std::size_t>(k)];
    return r;
}

PwlModel::PwlModel(Mesh mesh, std::vector<Piece> pieces, Vec theta_end)
    : mesh_(std::move(mesh)), pieces_(std::move(pieces)), theta_end_(std::move(theta_end)) {
    if (static_cast<int>(pieces_.size()) != mesh_.intervals())
        throw DomainError("model needs exactly one piece per mesh interval");
    for (int i = 0; i < mesh_.intervals(); ++i) {
        const auto& p = pieces_[static_cast<std::size_t>(i)];
        if (p.start() != mesh_.node(i) || p.end() != mesh_.node(i + 1))
            throw DomainError("piece interval does not match the mesh");
        if (p.dim() != theta_end_.size()) throw DomainError("piece dimension mismatch");
    }
}

PwlModel PwlModel::hermite(const Mesh& mesh, std::span<const Vec> values, std::span<const Vec> slopes) {
    const auto nodes = static_cast<std::size_t>(mesh.intervals()) + 1;
    if (values.size() != nodes || slopes.size() != nodes)
        throw DomainError("Hermite model needs one value and one slope per node");
    std::vector<Piece> pieces;
    pieces.reserve(nodes - 1);
    for (std::size_t i = 0; i + 1 < nodes; ++i) {
        pieces.push_back(Piece::hermite(mesh.node(static_cast<int>(i)), mesh.node(static_cast<int>(i) + 1),
                                        values[i], slopes[i], values[i + 1], slopes[i + 1]));
    }
    return PwlModel(mesh, std::move(pieces), values.back());
}

const Vec& PwlModel::theta(int i) const {
    if (i == intervals()) return theta_end_;
    return piece(i).theta();
}

Vec eval_model(const PwlModel& model, double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("eval_model: time outside [0, 1]");
    if (t == 1.0) return model.theta_end();
    return propagate_piece(model.piece(model.mesh().interval_of(t)), t);
}

Vec model_derivative(const PwlModel& model, double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("model_derivative: time outside [0, 1]");
    const auto& p = model.piece(model.mesh().interval_of(t));
    const Vec y = propagate_piece(p, t);
    return p.a_at(t) * y + p.b_at(t);
}

Vec node_slope(const PwlModel& model, int k) {
    if (k < 0 || k > model.intervals()) throw DomainError("node index out of range");
    if (k < model.intervals()) {
        const auto& p = model.piece(k);
        return p.a_at(p.start()) * p.theta() + p.b_at(p.start());
    }
    const auto& p = model.piece(k - 1);
    return p.a_at(p.end()) * propagate_piece(p, p.end()) + p.b_at(p.end());
}

ValidationReport validate_model(const PwlModel& model, double eps, const BoundaryCondition* boundary) {
    ValidationReport report;
    const int n_int = model.intervals();
    for (int i = 0; i < n_int; ++i) {
        const auto& p = model.piece(i);
        const Vec y_end = propagate_piece(p, p.end());
        const double gap = (y_end - model.theta(i + 1)).norm();
        if (gap > eps) report.violations.push_back({Violation::Kind::Value, i + 1, gap});
        if (i + 1 < n_int) {
            const auto& q = model.piece(i + 1);
            const Vec& th = model.theta(i + 1);
            const double t = p.end();
            const double slope_gap = ((p.a_at(t) * th + p.b_at(t)) - (q.a_at(t) * th + q.b_at(t))).norm();
            if (slope_gap > eps) report.violations.push_back({Violation::Kind::Slope, i + 1, slope_gap});
        }
    }
    if (boundary) report.beta_residual = boundary->residuals(model.theta(0), model.theta_end()).norm();
    return report;
}

}  // namespace pwlbvp
