#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <utility>

#include "linalg.hpp"

/*
 * Stiefel and Grassmann manifolds embedded in R^{d x k} with the Euclidean
 * (Frobenius) metric.
 *
 *   Stiefel   O_{d,k}: X^T X = I, tangent vectors V with X^T V skew.
 *   Grassmann G_{d,k}: span(X), represented by one orthonormal X;
 *                      horizontal tangent vectors satisfy X^T V = 0.
 *
 * The raw-matrix functions (project_*, *_flow) are what the sampler calls in
 * its inner loop; the typed wrappers validate their inputs.
 */

namespace ghmc {

enum class Geometry { Stiefel, Grassmann, Euclidean, LogPositive };

inline const char *to_string(Geometry g) {
    switch (g) {
    case Geometry::Stiefel: return "stiefel";
    case Geometry::Grassmann: return "grassmann";
    case Geometry::Euclidean: return "euclidean";
    case Geometry::LogPositive: return "log_positive";
    }
    return "?";
}

inline bool is_manifold(Geometry g) { return g == Geometry::Stiefel || g == Geometry::Grassmann; }

constexpr double kOrthonormalTolerance = 1e-10;
constexpr double kTangencyTolerance = 1e-8;

/// d x k matrix with orthonormal columns.
class StiefelPoint {
  public:
    explicit StiefelPoint(Matrix x, double tol = kOrthonormalTolerance) : x_(std::move(x)) {
        require(x_.cols() >= 1 && x_.rows() >= x_.cols(), "StiefelPoint: need d >= k >= 1");
        const double r = orthonormality_residual(x_);
        if (!(r <= tol)) {
            throw std::invalid_argument("StiefelPoint: columns not orthonormal (residual " + std::to_string(r) +
                                        ")");
        }
    }

    const Matrix &matrix() const { return x_; }
    Eigen::Index d() const { return x_.rows(); }
    Eigen::Index k() const { return x_.cols(); }

  private:
    Matrix x_;
};

/// A k-dimensional subspace of R^d, held through one orthonormal representative.
class GrassmannPoint {
  public:
    explicit GrassmannPoint(StiefelPoint rep) : rep_(std::move(rep)) {}
    explicit GrassmannPoint(Matrix x, double tol = kOrthonormalTolerance) : rep_(std::move(x), tol) {}

    const StiefelPoint &representative() const { return rep_; }
    const Matrix &matrix() const { return rep_.matrix(); }
    Eigen::Index d() const { return rep_.d(); }
    Eigen::Index k() const { return rep_.k(); }

  private:
    StiefelPoint rep_;
};

struct TangentVector {
    Matrix entries;
    Geometry geometry;
    Matrix base;
};

// ---------------------------------------------------------------------------
// raw kernels

/// (I − XXᵀ)V
inline Matrix project_grassmann(const Matrix &x, const Matrix &v) {
    require_same_shape(x, v, "project_tangent");
    return v - x * (x.transpose() * v);
}

/// V − X sym(XᵀV)
inline Matrix project_stiefel(const Matrix &x, const Matrix &v) {
    require_same_shape(x, v, "project_tangent");
    return v - x * sym(x.transpose() * v);
}

inline Matrix project_tangent(Geometry g, const Matrix &x, const Matrix &v) {
    switch (g) {
    case Geometry::Stiefel: return project_stiefel(x, v);
    case Geometry::Grassmann: return project_grassmann(x, v);
    default: require_same_shape(x, v, "project_tangent"); return v;
    }
}

/// Tangency residual, scaled by the size of the velocity so that large
/// velocities are judged on relative accuracy.
inline double tangency_residual(Geometry g, const Matrix &x, const Matrix &v) {
    const Matrix a = x.transpose() * v;
    const double raw = g == Geometry::Grassmann ? max_abs(a) : max_abs(a + a.transpose());
    return raw / std::max(1.0, max_abs(v));
}

struct Flow {
    Matrix point;
    Matrix velocity;
};

inline void check_flow_input(Geometry g, const Matrix &x, const Matrix &v) {
    require_same_shape(x, v, "geodesic");
    const double r = tangency_residual(g, x, v);
    if (!(r <= kTangencyTolerance)) {
        throw std::invalid_argument(std::string("geodesic: velocity not tangent (residual ") + std::to_string(r) +
                                    ")");
    }
}

/// Grassmann geodesic. With the thin SVD V = U Σ Wᵀ:
///   X(t) = X W cos(Σt) Wᵀ + U sin(Σt) Wᵀ
///   Ẋ(t) = −X W Σ sin(Σt) Wᵀ + U Σ cos(Σt) Wᵀ
/// Zero singular values are kept, so rank-deficient velocities need no
/// special handling.
inline Flow grassmann_flow(const Matrix &x, const Matrix &v, double t) {
    check_flow_input(Geometry::Grassmann, x, v);
    if (t == 0.0) return {x, v};
    Eigen::JacobiSVD<Matrix> svd(v, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector &sigma = svd.singularValues();
    const Matrix &u = svd.matrixU();
    const Matrix &w = svd.matrixV();
    const Eigen::Index k = sigma.size();
    Vector c(k), s(k);
    for (Eigen::Index j = 0; j < k; ++j) {
        c(j) = std::cos(sigma(j) * t);
        s(j) = std::sin(sigma(j) * t);
    }
    const Matrix xw = x * w;
    Flow out;
    out.point = (xw * c.asDiagonal() + u * s.asDiagonal()) * w.transpose();
    out.velocity = (u * (sigma.cwiseProduct(c)).asDiagonal() - xw * (sigma.cwiseProduct(s)).asDiagonal()) *
                   w.transpose();
    return out;
}

/// Stiefel geodesic for the embedded metric. With A = XᵀV, S = VᵀV:
///   [X(t) Ẋ(t)] = [X V] exp(t [[A, −S], [I, A]]) diag(exp(−tA), exp(−tA))
inline Flow stiefel_flow(const Matrix &x, const Matrix &v, double t) {
    check_flow_input(Geometry::Stiefel, x, v);
    if (t == 0.0) return {x, v};
    const Eigen::Index k = x.cols();
    const Matrix a = x.transpose() * v;
    const Matrix s = v.transpose() * v;
    Matrix block(2 * k, 2 * k);
    block.topLeftCorner(k, k) = a;
    block.topRightCorner(k, k) = -s;
    block.bottomLeftCorner(k, k).setIdentity();
    block.bottomRightCorner(k, k) = a;
    const Matrix e = expm(t * block);
    const Matrix rot = expm(-t * a);
    Matrix xv(x.rows(), 2 * k);
    xv << x, v;
    const Matrix moved = xv * e;
    Flow out;
    out.point = moved.leftCols(k) * rot;
    out.velocity = moved.rightCols(k) * rot;
    return out;
}

/// Thin QR with the sign convention diag(R) > 0.
inline Matrix orthonormalize(const Matrix &x) {
    require(x.rows() >= x.cols() && x.cols() >= 1, "reorthonormalize: need d >= k >= 1");
    Eigen::HouseholderQR<Matrix> qr(x);
    const Matrix r = qr.matrixQR().topRows(x.cols()).triangularView<Eigen::Upper>();
    const double scale = std::max(max_abs(x), std::numeric_limits<double>::min());
    const double rank_tol = 1e-12 * scale * static_cast<double>(x.rows());
    Matrix q = qr.householderQ() * Matrix::Identity(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        if (!(std::abs(r(j, j)) > rank_tol)) throw std::invalid_argument("reorthonormalize: rank-deficient input");
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    }
    return q;
}

// ---------------------------------------------------------------------------
// typed API

inline TangentVector project_tangent(const StiefelPoint &x, const Matrix &v) {
    return {project_stiefel(x.matrix(), v), Geometry::Stiefel, x.matrix()};
}

inline TangentVector project_tangent(const GrassmannPoint &x, const Matrix &v) {
    return {project_grassmann(x.matrix(), v), Geometry::Grassmann, x.matrix()};
}

inline std::pair<GrassmannPoint, TangentVector> geodesic_grassmann(const GrassmannPoint &x, const TangentVector &v,
                                                                   double t) {
    Flow f = grassmann_flow(x.matrix(), v.entries, t);
    GrassmannPoint p(std::move(f.point));
    return {p, TangentVector{std::move(f.velocity), Geometry::Grassmann, p.matrix()}};
}

inline std::pair<StiefelPoint, TangentVector> geodesic_stiefel(const StiefelPoint &x, const TangentVector &v,
                                                               double t) {
    Flow f = stiefel_flow(x.matrix(), v.entries, t);
    StiefelPoint p(std::move(f.point));
    return {p, TangentVector{std::move(f.velocity), Geometry::Stiefel, p.matrix()}};
}

inline StiefelPoint reorthonormalize(const Matrix &x) { return StiefelPoint(orthonormalize(x)); }

template <class Rng> Matrix standard_normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng &rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix g(rows, cols);
    // column-major fill keeps the draw order independent of Eigen internals
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) g(i, j) = normal(rng);
    return g;
}

/// Haar-distributed point on O_{d,k}: orthonormalized Gaussian matrix.
template <class Rng> StiefelPoint random_uniform_point(Eigen::Index d, Eigen::Index k, Rng &rng) {
    require(d >= k && k >= 1, "random_uniform_point: need d >= k >= 1");
    return StiefelPoint(orthonormalize(standard_normal_matrix(d, k, rng)));
}

} // namespace ghmc
