#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Eigenvalues>

#include "manifold.hpp"

namespace ghmc {

/// Principal angles in [0, π/2], nondecreasing.
struct PrincipalAngles {
    Vector angles;
};

/// Ordered Grassmann samples sharing one (d, k).
class SubspaceChain {
  public:
    SubspaceChain() = default;

    void push_back(GrassmannPoint p, long iteration) {
        if (!samples_.empty() && (p.d() != samples_.front().d() || p.k() != samples_.front().k())) {
            throw std::invalid_argument("SubspaceChain: inconsistent dimensions across samples");
        }
        samples_.push_back(std::move(p));
        iterations_.push_back(iteration);
    }
    void push_back(GrassmannPoint p) { push_back(std::move(p), static_cast<long>(samples_.size())); }

    std::size_t size() const { return samples_.size(); }
    bool empty() const { return samples_.empty(); }
    const GrassmannPoint &operator[](std::size_t i) const { return samples_[i]; }
    long iteration(std::size_t i) const { return iterations_[i]; }
    const std::vector<GrassmannPoint> &samples() const { return samples_; }

    /// Samples [first, last).
    SubspaceChain window(std::size_t first, std::size_t last) const {
        require(first <= last && last <= samples_.size(), "SubspaceChain::window: bounds outside chain");
        SubspaceChain out;
        for (std::size_t i = first; i < last; ++i) out.push_back(samples_[i], iterations_[i]);
        return out;
    }

  private:
    std::vector<GrassmannPoint> samples_;
    std::vector<long> iterations_;
};

namespace detail {

inline void require_same_grassmann(const GrassmannPoint &x, const GrassmannPoint &y, const char *what) {
    if (x.d() != y.d() || x.k() != y.k()) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

/// Angles of span(Y) relative to span(X). Cosines come from XᵀY and sines from
/// (I − XXᵀ)Y; each is used where it is well conditioned.
inline Vector one_sided_angles(const Matrix &x, const Matrix &y) {
    const Eigen::Index k = x.cols();
    const Matrix cross = x.transpose() * y;
    const Vector cosines = Eigen::JacobiSVD<Matrix>(cross).singularValues(); // descending
    const Vector sines = Eigen::JacobiSVD<Matrix>(y - x * cross).singularValues(); // descending
    Vector theta(k);
    for (Eigen::Index j = 0; j < k; ++j) {
        const double c = std::clamp(cosines(j), 0.0, 1.0);
        const double s = std::clamp(sines(k - 1 - j), 0.0, 1.0);
        theta(j) = s * s < 0.5 ? std::asin(s) : std::acos(c);
    }
    std::sort(theta.data(), theta.data() + k);
    return theta;
}

} // namespace detail

inline PrincipalAngles principal_angles(const GrassmannPoint &x, const GrassmannPoint &y) {
    detail::require_same_grassmann(x, y, "principal_angles");
    const Vector a = detail::one_sided_angles(x.matrix(), y.matrix());
    const Vector b = detail::one_sided_angles(y.matrix(), x.matrix());
    return {0.5 * (a + b)};
}

/// sqrt(Σ sin²θ_j) = ‖(I − XXᵀ)Y‖_F, symmetrized so that d(X,Y) == d(Y,X) bitwise.
inline double pf_distance(const GrassmannPoint &x, const GrassmannPoint &y) {
    detail::require_same_grassmann(x, y, "pf_distance");
    const Matrix &a = x.matrix();
    const Matrix &b = y.matrix();
    const double ab = (b - a * (a.transpose() * b)).norm();
    const double ba = (a - b * (b.transpose() * a)).norm();
    return 0.5 * (ab + ba);
}

/// sqrt(Σ θ_j²)
inline double geodesic_distance(const GrassmannPoint &x, const GrassmannPoint &y) {
    return principal_angles(x, y).angles.norm();
}

struct PfMean {
    GrassmannPoint point;
    /// λ_k − λ_{k+1} of the averaged projector.
    double eigengap;
    /// Set when the gap is below 1e-12; the returned subspace is then one
    /// arbitrary (but deterministic) completion.
    bool ill_defined;
};

/// Minimizer of Σ_j d_pF(U, U_j)²: the top-k eigenvectors of Σ_j U_j U_jᵀ.
inline PfMean pf_mean(const SubspaceChain &chain) {
    require(!chain.empty(), "pf_mean: empty chain");
    const Eigen::Index d = chain[0].d();
    const Eigen::Index k = chain[0].k();
    Matrix m = Matrix::Zero(d, d);
    for (const auto &s : chain.samples()) m.selfadjointView<Eigen::Lower>().rankUpdate(s.matrix());
    m /= static_cast<double>(chain.size());
    m = m.selfadjointView<Eigen::Lower>();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
    const Vector &values = eig.eigenvalues(); // ascending
    Matrix top(d, k);
    for (Eigen::Index j = 0; j < k; ++j) top.col(j) = eig.eigenvectors().col(d - 1 - j);
    const double gap = k < d ? values(d - k) - values(d - k - 1) : 1.0;
    return {GrassmannPoint(orthonormalize(top)), gap, gap < 1e-12};
}

/// d_pF(sample_i, reference) for every sample.
inline std::vector<double> pf_trace(const SubspaceChain &chain, const GrassmannPoint &reference) {
    std::vector<double> out;
    out.reserve(chain.size());
    for (const auto &s : chain.samples()) out.push_back(pf_distance(s, reference));
    return out;
}

} // namespace ghmc
