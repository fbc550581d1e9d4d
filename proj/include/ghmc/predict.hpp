#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "models.hpp"

namespace ghmc {

using IndexList = std::vector<Eigen::Index>;

/// μ_A + Σ_AB Σ_BB⁻¹ (y_B − μ_B) for target indices A given observed indices B.
inline Vector gaussian_conditional_mean(const Matrix &sigma, const Vector &mu, const IndexList &observed_idx,
                                        const Vector &observed_vals, const IndexList &target_idx) {
    const Eigen::Index d = sigma.rows();
    require(sigma.cols() == d && mu.size() == d, "gaussian_conditional_mean: Σ must be d x d and μ length d");
    require(static_cast<Eigen::Index>(observed_idx.size()) == observed_vals.size(),
            "gaussian_conditional_mean: observed indices and values differ in length");
    std::vector<char> used(static_cast<std::size_t>(d), 0);
    for (auto i : observed_idx) {
        require(i >= 0 && i < d, "gaussian_conditional_mean: index out of range");
        require(!used[static_cast<std::size_t>(i)], "gaussian_conditional_mean: repeated index");
        used[static_cast<std::size_t>(i)] = 1;
    }
    for (auto i : target_idx) {
        require(i >= 0 && i < d, "gaussian_conditional_mean: index out of range");
        require(!used[static_cast<std::size_t>(i)], "gaussian_conditional_mean: observed and target sets overlap");
    }
    const auto na = static_cast<Eigen::Index>(target_idx.size());
    const auto nb = static_cast<Eigen::Index>(observed_idx.size());
    Vector out(na);
    for (Eigen::Index a = 0; a < na; ++a) out(a) = mu(target_idx[static_cast<std::size_t>(a)]);
    if (nb == 0 || na == 0) return out;

    Matrix s_bb(nb, nb), s_ab(na, nb);
    Vector resid(nb);
    for (Eigen::Index b = 0; b < nb; ++b) {
        const auto ib = observed_idx[static_cast<std::size_t>(b)];
        resid(b) = observed_vals(b) - mu(ib);
        for (Eigen::Index c = 0; c < nb; ++c) s_bb(b, c) = sigma(ib, observed_idx[static_cast<std::size_t>(c)]);
        for (Eigen::Index a = 0; a < na; ++a) s_ab(a, b) = sigma(target_idx[static_cast<std::size_t>(a)], ib);
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(s_bb, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > 1e12)
        throw NumericalError("gaussian_conditional_mean: conditioning block is singular or ill-conditioned");
    out += s_ab * s_bb.ldlt().solve(resid);
    return out;
}

/// Mean of the linear predictor (continuous) or of the success probability
/// (binary) under one posterior state.
inline Matrix predictive_mean(ModelTag tag, const ProductState &s) {
    switch (tag) {
    case ModelTag::PpcaLatent: {
        const PPCAParams p = ppca_latent_params(s);
        return detail::linear_predictor(p.U, p.log_lambda.array().exp().matrix(), p.Z, p.mu);
    }
    case ModelTag::EpcaBernoulli: {
        const PPCAParams p = epca_params(s);
        return detail::linear_predictor(p.U, p.log_lambda.array().exp().matrix(), p.Z, p.mu)
            .unaryExpr([](double t) { return logistic(t); });
    }
    case ModelTag::JointPoissonLogistic: {
        const JointModelParams p = joint_params(s);
        return detail::linear_predictor(p.U, p.log_lambda.array().exp().matrix(), p.Z, p.mu)
            .unaryExpr([](double t) { return std::exp(t); });
    }
    default: throw std::invalid_argument("predictive_mean: model has no per-entry latent predictor");
    }
}

struct Reconstruction {
    /// Binary: thresholded averaged probabilities. Continuous: observed values
    /// where observed, posterior mean where missing.
    Matrix values;
    /// Posterior-mean probability (binary) or linear predictor (continuous).
    Matrix posterior_mean;
    /// Binary: 0-1 error over all entries. Continuous: MAE over missing
    /// entries. Empty when not applicable (no truth, or nothing missing).
    std::optional<double> error;
    Eigen::Index evaluated_entries = 0;
};

/// Streaming posterior average for reconstruction.
class ReconstructionAccumulator {
  public:
    explicit ReconstructionAccumulator(ModelTag tag) : tag_(tag) {
        require(tag == ModelTag::EpcaBernoulli || tag == ModelTag::PpcaLatent,
                "posterior_reconstruct: supported for binary EPCA and latent PPCA");
    }

    void add(const ProductState &s) {
        Matrix m = predictive_mean(tag_, s);
        if (count_ == 0)
            sum_ = std::move(m);
        else
            sum_ += m;
        ++count_;
    }

    std::size_t count() const { return count_; }

    Reconstruction result(const MaskedDataMatrix &data, const Matrix *truth = nullptr) const {
        require(count_ > 0, "posterior_reconstruct: empty window");
        require(sum_.rows() == data.rows() && sum_.cols() == data.cols(),
                "posterior_reconstruct: chain dimensions do not match the data");
        if (truth) require(truth->rows() == data.rows() && truth->cols() == data.cols(),
                           "posterior_reconstruct: truth dimensions do not match the data");
        Reconstruction r;
        r.posterior_mean = sum_ / static_cast<double>(count_);
        if (tag_ == ModelTag::EpcaBernoulli) {
            // ties at exactly 1/2 go to 0
            r.values = r.posterior_mean.unaryExpr([](double p) { return p > 0.5 ? 1.0 : 0.0; });
            if (truth) {
                r.evaluated_entries = r.values.size();
                r.error = static_cast<double>((r.values.array() != truth->array()).count()) /
                          static_cast<double>(r.values.size());
            }
            return r;
        }
        r.values = data.values;
        double abs_sum = 0.0;
        for (Eigen::Index j = 0; j < data.cols(); ++j)
            for (Eigen::Index i = 0; i < data.rows(); ++i) {
                if (data.mask(i, j)) continue;
                r.values(i, j) = r.posterior_mean(i, j);
                if (truth) {
                    abs_sum += std::abs(r.posterior_mean(i, j) - (*truth)(i, j));
                    ++r.evaluated_entries;
                }
            }
        if (r.evaluated_entries > 0) r.error = abs_sum / static_cast<double>(r.evaluated_entries);
        return r;
    }

  private:
    ModelTag tag_;
    Matrix sum_;
    std::size_t count_ = 0;
};

inline Reconstruction posterior_reconstruct(const std::vector<ProductState> &window, ModelTag tag,
                                            const MaskedDataMatrix &data, const Matrix *truth = nullptr) {
    ReconstructionAccumulator acc(tag);
    for (const auto &s : window) acc.add(s);
    return acc.result(data, truth);
}

/// Single-state 0-1 reconstruction error of binary EPCA against truth.
inline double binary_sample_error(const ProductState &s, const Matrix &truth) {
    const Matrix p = predictive_mean(ModelTag::EpcaBernoulli, s);
    require(p.rows() == truth.rows() && p.cols() == truth.cols(), "binary_sample_error: shape mismatch");
    Eigen::Index wrong = 0;
    for (Eigen::Index j = 0; j < p.cols(); ++j)
        for (Eigen::Index i = 0; i < p.rows(); ++i) wrong += ((p(i, j) > 0.5 ? 1.0 : 0.0) != truth(i, j)) ? 1 : 0;
    return static_cast<double>(wrong) / static_cast<double>(p.size());
}

/// Mode of p(z | x) ∝ Π_i Poisson(x_i; exp((Wz + μ)_i)) N(z; 0, sd² I) by damped Newton.
inline Vector poisson_latent_mode(const Matrix &W, const Vector &mu, const Vector &x, double latent_sd = 1.0,
                                  double tol = 1e-8, int max_iter = 100) {
    const Eigen::Index k = W.cols();
    const double prec = 1.0 / (latent_sd * latent_sd);
    auto objective = [&](const Vector &z) {
        const Vector eta = W * z + mu;
        return x.dot(eta) - eta.array().exp().sum() - 0.5 * prec * z.squaredNorm();
    };
    Vector z = Vector::Zero(k);
    double f = objective(z);
    for (int it = 0; it < max_iter; ++it) {
        const Vector rate = (W * z + mu).array().exp();
        const Vector g = W.transpose() * (x - rate) - prec * z;
        Matrix h = W.transpose() * rate.asDiagonal() * W;
        h.diagonal().array() += prec;
        const Vector step = h.llt().solve(g);
        double t = 1.0;
        Vector next = z + step;
        double fn = objective(next);
        while (!(fn >= f) && t > 1e-10) {
            t *= 0.5;
            next = z + t * step;
            fn = objective(next);
        }
        z = next;
        f = fn;
        if ((t * step).lpNorm<Eigen::Infinity>() < tol) break;
    }
    return z;
}

/// P(y = 1 | x) for held-out count rows, averaged over posterior states of
/// the Poisson-logistic model. Each state contributes logistic(βᵀz* + β₀) at
/// its own latent mode z*, so no averaging of U across states is needed.
inline Vector joint_predict_probability(const std::vector<ProductState> &states, const Matrix &x_new,
                                        const Priors &priors = {}) {
    require(!states.empty(), "joint_predict_probability: empty window");
    Vector prob = Vector::Zero(x_new.rows());
    for (const auto &s : states) {
        const JointModelParams p = joint_params(s);
        require(p.U.rows() == x_new.cols(), "joint_predict_probability: dimension mismatch");
        const Matrix w = p.U * p.log_lambda.array().exp().matrix().asDiagonal();
        for (Eigen::Index j = 0; j < x_new.rows(); ++j) {
            const Vector z = poisson_latent_mode(w, p.mu, x_new.row(j).transpose(), priors.latent_sd);
            prob(j) += logistic(p.beta.dot(z) + p.beta0);
        }
    }
    return prob / static_cast<double>(states.size());
}

/// Sorts Λ in decreasing order and permutes the columns of U (and of Z and
/// the entries of β when present) to match. Applied to samples at reporting
/// time only; the likelihood is invariant under the relabeling.
inline ProductState order_by_scale(const ProductState &s) {
    const std::size_t li = s.index("log_lambda");
    const Vector ll = s[li].value;
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(ll.size()));
    std::iota(perm.begin(), perm.end(), 0);
    std::stable_sort(perm.begin(), perm.end(), [&](Eigen::Index a, Eigen::Index b) { return ll(a) > ll(b); });
    ProductState out = s;
    auto permute_cols = [&](Matrix &m) {
        const Matrix src = m;
        for (std::size_t c = 0; c < perm.size(); ++c) m.col(static_cast<Eigen::Index>(c)) = src.col(perm[c]);
    };
    auto permute_rows = [&](Matrix &m) {
        const Matrix src = m;
        for (std::size_t c = 0; c < perm.size(); ++c) m.row(static_cast<Eigen::Index>(c)) = src.row(perm[c]);
    };
    for (std::size_t b = 0; b < out.size(); ++b) {
        auto &blk = out[b];
        if (blk.name == "U" || blk.name == "Z") permute_cols(blk.value);
        if (blk.name == "log_lambda" || blk.name == "beta") permute_rows(blk.value);
    }
    return out;
}

} // namespace ghmc
