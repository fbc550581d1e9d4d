#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "data.hpp"
#include "state.hpp"

/*
 * Log-posteriors and ambient gradients for the low-rank models.
 *
 *   PPCA (marginal)       y_j ~ N(μ, U Λ² Uᵀ + σ² I),          U ∈ O_{d,k}
 *   PPCA (latent)         y_ji ~ N((U Λ z_j)_i + μ_i, σ²)      observed entries only
 *   Grassmann FA          y_j ~ N(μ, Φ (U Uᵀ + Ψ) Φ),          U ∈ G_{d,k}
 *   Bernoulli EPCA        x_ji ~ Bernoulli(logistic((U Λ z_j)_i + μ_i))
 *   Poisson-logistic      x_ji ~ Poisson(exp((U Λ z_j)_i + μ_i)),
 *                         y_j ~ Bernoulli(logistic(βᵀ z_j + β₀))
 *
 * Positive parameters live in log coordinates. Their standard log-normal
 * priors combined with the log-transform Jacobian give a N(0, s²) density on
 * the logarithm, which is what log_prior contains. The uniform prior on U is
 * a constant and is omitted.
 */

namespace ghmc {

struct Priors {
    /// sd of the Gaussian priors on μ, β, β₀
    double location_sd = 10.0;
    /// sd of the Gaussian prior on the log of each positive scale
    double log_scale_sd = 1.0;
    /// sd of the Gaussian prior on the latent factors
    double latent_sd = 1.0;
};

struct ModelEvaluation {
    double log_likelihood = 0.0;
    double log_prior = 0.0;
    BlockMatrices gradient; ///< empty unless requested
    double log_posterior() const { return log_likelihood + log_prior; }
};

enum class ModelTag { Ppca, PpcaLatent, FaGrassmann, EpcaBernoulli, JointPoissonLogistic };

inline const char *to_string(ModelTag m) {
    switch (m) {
    case ModelTag::Ppca: return "ppca";
    case ModelTag::PpcaLatent: return "ppca-latent";
    case ModelTag::FaGrassmann: return "fa-grassmann";
    case ModelTag::EpcaBernoulli: return "epca-bernoulli";
    case ModelTag::JointPoissonLogistic: return "joint-poisson-logistic";
    }
    return "?";
}

inline ModelTag parse_model_tag(const std::string &s) {
    for (ModelTag m : {ModelTag::Ppca, ModelTag::PpcaLatent, ModelTag::FaGrassmann, ModelTag::EpcaBernoulli,
                       ModelTag::JointPoissonLogistic})
        if (s == to_string(m)) return m;
    throw std::invalid_argument("unknown model '" + s + "'");
}

/// U, Λ = exp(log_lambda), μ, σ² = exp(log_sigma2); Z is used by the latent variant only.
struct PPCAParams {
    Matrix U;
    Vector log_lambda;
    Vector mu;
    double log_sigma2 = 0.0;
    Matrix Z;
};

struct FAGrassmannParams {
    Matrix U;
    Vector log_psi;
    Vector log_phi;
    Vector mu;
};

struct JointModelParams {
    Matrix U;
    Vector log_lambda;
    Vector mu;
    Matrix Z;
    Vector beta;
    double beta0 = 0.0;
};

namespace detail {

/// log N(x; 0, sd² I) summed over entries, with its gradient added to `grad`.
inline double gaussian_prior(const Matrix &x, double sd, Matrix *grad) {
    const double n = static_cast<double>(x.size());
    if (grad) grad->noalias() -= x / (sd * sd);
    return -0.5 * x.squaredNorm() / (sd * sd) - n * std::log(sd) - 0.5 * n * kLog2Pi;
}

struct GaussianTerms {
    double log_likelihood;
    Matrix d_sigma; ///< ∂ℓ/∂Σ (symmetric)
    Vector d_mu;
};

/// Σ_j log N(y_j; μ, Σ) over the rows of y, with derivatives in Σ and μ.
inline GaussianTerms gaussian_rows(const Matrix &sigma, const Vector &mu, const Matrix &y, bool want_grad) {
    const Eigen::Index n = y.rows();
    const Eigen::Index d = y.cols();
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    GaussianTerms out{-std::numeric_limits<double>::infinity(), Matrix::Constant(d, d, nan), Vector::Constant(d, nan)};
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success) return out;
    const Matrix resid_t = (y.rowwise() - mu.transpose()).transpose(); // d x N
    const Matrix w = llt.matrixL().solve(resid_t);
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) logdet += std::log(llt.matrixLLT()(i, i));
    logdet *= 2.0;
    out.log_likelihood = -0.5 * (static_cast<double>(n * d) * kLog2Pi + static_cast<double>(n) * logdet +
                                 w.squaredNorm());
    if (want_grad) {
        const Matrix inv = llt.solve(Matrix::Identity(d, d));
        const Matrix a = llt.solve(resid_t); // Σ⁻¹ (y_j − μ)
        out.d_sigma = -0.5 * static_cast<double>(n) * inv + 0.5 * a * a.transpose();
        out.d_mu = a.rowwise().sum();
    }
    return out;
}

/// Gradients of a linear predictor η = Z Λ Uᵀ + 1μᵀ given ∂ℓ/∂η.
struct LinearPredictorGrad {
    Matrix dU;
    Vector dlog_lambda;
    Matrix dZ;
    Vector dmu;
};

inline Matrix linear_predictor(const Matrix &U, const Vector &lambda, const Matrix &Z, const Vector &mu) {
    return (Z * lambda.asDiagonal() * U.transpose()).rowwise() + mu.transpose();
}

inline LinearPredictorGrad linear_predictor_grad(const Matrix &U, const Vector &lambda, const Matrix &Z,
                                                 const Matrix &d_eta) {
    LinearPredictorGrad g;
    const Matrix zl = Z * lambda.asDiagonal();
    g.dU = d_eta.transpose() * zl;
    const Matrix du = d_eta * U; // N x k
    g.dZ = du * lambda.asDiagonal();
    g.dlog_lambda = lambda.cwiseProduct(du.cwiseProduct(Z).colwise().sum().transpose());
    g.dmu = d_eta.colwise().sum().transpose();
    return g;
}

inline void require_latent_shapes(const Matrix &U, const Vector &log_lambda, const Vector &mu, const Matrix &Z,
                                  const MaskedDataMatrix &data) {
    require(U.rows() == data.cols(), "model: U rows must equal data columns");
    require(log_lambda.size() == U.cols(), "model: Λ length must equal U columns");
    require(mu.size() == data.cols(), "model: μ length must equal data columns");
    require(Z.rows() == data.rows() && Z.cols() == U.cols(), "model: Z must be N x k");
}

inline double sum_log_factorial(const MaskedDataMatrix &data) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < data.cols(); ++j)
        for (Eigen::Index i = 0; i < data.rows(); ++i)
            if (data.mask(i, j)) s += std::lgamma(data.values(i, j) + 1.0);
    return s;
}

inline void require_kind(const MaskedDataMatrix &data, DataKind kind, const char *what) {
    if (data.kind != kind) throw std::invalid_argument(std::string(what) + ": wrong data kind");
}

} // namespace detail

// ---------------------------------------------------------------------------
// PPCA, Z integrated out. Gradient blocks: U, log_lambda, mu, log_sigma2.

inline ModelEvaluation ppca_log_posterior(const PPCAParams &p, const MaskedDataMatrix &data, bool want_grad = true,
                                          const Priors &priors = {}) {
    detail::require_kind(data, DataKind::Continuous, "ppca_log_posterior");
    require(data.rows() > 0, "ppca_log_posterior: no observations");
    require(data.complete(), "ppca_log_posterior: rows must be fully observed");
    require(p.U.rows() == data.cols() && p.log_lambda.size() == p.U.cols() && p.mu.size() == data.cols(),
            "ppca_log_posterior: parameter shapes do not match the data");
    const Vector lambda2 = (2.0 * p.log_lambda).array().exp();
    const double sigma2 = std::exp(p.log_sigma2);
    Matrix cov = p.U * lambda2.asDiagonal() * p.U.transpose();
    cov.diagonal().array() += sigma2;

    ModelEvaluation out;
    auto g = detail::gaussian_rows(cov, p.mu, data.values, want_grad);
    out.log_likelihood = g.log_likelihood;
    if (want_grad) {
        out.gradient.resize(4);
        const Matrix gu = g.d_sigma * p.U;
        out.gradient[0] = 2.0 * gu * lambda2.asDiagonal();
        out.gradient[1] = 2.0 * lambda2.cwiseProduct(p.U.cwiseProduct(gu).colwise().sum().transpose());
        out.gradient[2] = g.d_mu;
        out.gradient[3] = Matrix::Constant(1, 1, sigma2 * g.d_sigma.trace());
    }
    Matrix ls = Matrix::Constant(1, 1, p.log_sigma2);
    out.log_prior = detail::gaussian_prior(p.log_lambda, priors.log_scale_sd, want_grad ? &out.gradient[1] : nullptr) +
                    detail::gaussian_prior(p.mu, priors.location_sd, want_grad ? &out.gradient[2] : nullptr) +
                    detail::gaussian_prior(ls, priors.log_scale_sd, want_grad ? &out.gradient[3] : nullptr);
    return out;
}

// ---------------------------------------------------------------------------
// PPCA with explicit latent factors, Gaussian on observed entries.
// Gradient blocks: U, log_lambda, Z, mu, log_sigma2.

inline ModelEvaluation ppca_latent_log_posterior(const PPCAParams &p, const MaskedDataMatrix &data,
                                                 bool want_grad = true, const Priors &priors = {}) {
    detail::require_kind(data, DataKind::Continuous, "ppca_latent_log_posterior");
    detail::require_latent_shapes(p.U, p.log_lambda, p.mu, p.Z, data);
    const Vector lambda = p.log_lambda.array().exp();
    const double sigma2 = std::exp(p.log_sigma2);
    const Matrix eta = detail::linear_predictor(p.U, lambda, p.Z, p.mu);
    Matrix resid = Matrix::Zero(data.rows(), data.cols());
    double sse = 0.0;
    double n_obs = 0.0;
    for (Eigen::Index j = 0; j < data.cols(); ++j)
        for (Eigen::Index i = 0; i < data.rows(); ++i)
            if (data.mask(i, j)) {
                const double e = data.values(i, j) - eta(i, j);
                resid(i, j) = e;
                sse += e * e;
                n_obs += 1.0;
            }
    ModelEvaluation out;
    out.log_likelihood = -0.5 * n_obs * (kLog2Pi + p.log_sigma2) - 0.5 * sse / sigma2;
    if (want_grad) {
        auto g = detail::linear_predictor_grad(p.U, lambda, p.Z, resid / sigma2);
        out.gradient = {std::move(g.dU), std::move(g.dlog_lambda), std::move(g.dZ), std::move(g.dmu),
                        Matrix::Constant(1, 1, -0.5 * n_obs + 0.5 * sse / sigma2)};
    }
    Matrix ls = Matrix::Constant(1, 1, p.log_sigma2);
    out.log_prior = detail::gaussian_prior(p.log_lambda, priors.log_scale_sd, want_grad ? &out.gradient[1] : nullptr) +
                    detail::gaussian_prior(p.Z, priors.latent_sd, want_grad ? &out.gradient[2] : nullptr) +
                    detail::gaussian_prior(p.mu, priors.location_sd, want_grad ? &out.gradient[3] : nullptr) +
                    detail::gaussian_prior(ls, priors.log_scale_sd, want_grad ? &out.gradient[4] : nullptr);
    return out;
}

// ---------------------------------------------------------------------------
// Grassmann factor analysis. Gradient blocks: U, log_psi, log_phi, mu.

inline Matrix fa_covariance(const FAGrassmannParams &p) {
    const Vector phi = p.log_phi.array().exp();
    Matrix m = p.U * p.U.transpose();
    m.diagonal() += p.log_psi.array().exp().matrix();
    return phi.asDiagonal() * m * phi.asDiagonal();
}

inline ModelEvaluation fa_grassmann_log_posterior(const FAGrassmannParams &p, const MaskedDataMatrix &data,
                                                  bool want_grad = true, const Priors &priors = {}) {
    detail::require_kind(data, DataKind::Continuous, "fa_grassmann_log_posterior");
    require(data.rows() > 0, "fa_grassmann_log_posterior: no observations");
    require(data.complete(), "fa_grassmann_log_posterior: rows must be fully observed");
    const Eigen::Index d = data.cols();
    require(p.U.rows() == d && p.log_psi.size() == d && p.log_phi.size() == d && p.mu.size() == d,
            "fa_grassmann_log_posterior: parameter shapes do not match the data");
    const Vector phi = p.log_phi.array().exp();
    const Vector psi = p.log_psi.array().exp();
    Matrix m = p.U * p.U.transpose();
    m.diagonal() += psi;
    const Matrix cov = phi.asDiagonal() * m * phi.asDiagonal();

    ModelEvaluation out;
    auto g = detail::gaussian_rows(cov, p.mu, data.values, want_grad);
    out.log_likelihood = g.log_likelihood;
    if (want_grad) {
        const Matrix dm = phi.asDiagonal() * g.d_sigma * phi.asDiagonal();
        out.gradient.resize(4);
        out.gradient[0] = 2.0 * dm * p.U;
        out.gradient[1] = psi.cwiseProduct(dm.diagonal());
        out.gradient[2] = 2.0 * phi.cwiseProduct(g.d_sigma.cwiseProduct(m) * phi);
        out.gradient[3] = g.d_mu;
    }
    out.log_prior = detail::gaussian_prior(p.log_psi, priors.log_scale_sd, want_grad ? &out.gradient[1] : nullptr) +
                    detail::gaussian_prior(p.log_phi, priors.log_scale_sd, want_grad ? &out.gradient[2] : nullptr) +
                    detail::gaussian_prior(p.mu, priors.location_sd, want_grad ? &out.gradient[3] : nullptr);
    return out;
}

// ---------------------------------------------------------------------------
// Bernoulli exponential-family PCA. Gradient blocks: U, log_lambda, Z, mu.
// Masked entries contribute nothing.

inline ModelEvaluation epca_bernoulli_log_posterior(const PPCAParams &p, const MaskedDataMatrix &data,
                                                    bool want_grad = true, const Priors &priors = {}) {
    detail::require_kind(data, DataKind::Binary, "epca_bernoulli_log_posterior");
    detail::require_latent_shapes(p.U, p.log_lambda, p.mu, p.Z, data);
    const Vector lambda = p.log_lambda.array().exp();
    const Matrix eta = detail::linear_predictor(p.U, lambda, p.Z, p.mu);
    Matrix d_eta;
    if (want_grad) d_eta = Matrix::Zero(data.rows(), data.cols());
    double ll = 0.0;
    for (Eigen::Index j = 0; j < data.cols(); ++j)
        for (Eigen::Index i = 0; i < data.rows(); ++i) {
            if (!data.mask(i, j)) continue;
            const double t = eta(i, j);
            const double x = data.values(i, j);
            const double e = std::exp(-std::abs(t));
            ll += x * t - (std::max(t, 0.0) + std::log1p(e));
            if (want_grad) {
                const double prob = t >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
                d_eta(i, j) = x - prob;
            }
        }
    ModelEvaluation out;
    out.log_likelihood = ll;
    if (want_grad) {
        auto g = detail::linear_predictor_grad(p.U, lambda, p.Z, d_eta);
        out.gradient = {std::move(g.dU), std::move(g.dlog_lambda), std::move(g.dZ), std::move(g.dmu)};
    }
    out.log_prior = detail::gaussian_prior(p.log_lambda, priors.log_scale_sd, want_grad ? &out.gradient[1] : nullptr) +
                    detail::gaussian_prior(p.Z, priors.latent_sd, want_grad ? &out.gradient[2] : nullptr) +
                    detail::gaussian_prior(p.mu, priors.location_sd, want_grad ? &out.gradient[3] : nullptr);
    return out;
}

// ---------------------------------------------------------------------------
// Supervised Poisson-logistic model. Gradient blocks: U, log_lambda, Z, mu,
// beta, beta0.

namespace detail {

inline ModelEvaluation joint_core(const JointModelParams &p, const MaskedDataMatrix &data, bool want_grad,
                                  const Priors &priors, double log_factorial_sum) {
    const Vector lambda = p.log_lambda.array().exp();
    const Matrix eta = linear_predictor(p.U, lambda, p.Z, p.mu);
    Matrix d_eta;
    if (want_grad) d_eta = Matrix::Zero(data.rows(), data.cols());
    double ll = -log_factorial_sum;
    for (Eigen::Index j = 0; j < data.cols(); ++j)
        for (Eigen::Index i = 0; i < data.rows(); ++i) {
            if (!data.mask(i, j)) continue;
            const double t = eta(i, j);
            const double x = data.values(i, j);
            const double rate = std::exp(t);
            ll += x * t - rate;
            if (want_grad) d_eta(i, j) = x - rate;
        }
    const Vector &y = *data.labels;
    const Vector zeta = (p.Z * p.beta).array() + p.beta0;
    Vector d_zeta(zeta.size());
    for (Eigen::Index j = 0; j < zeta.size(); ++j) {
        ll += y(j) * zeta(j) - softplus(zeta(j));
        d_zeta(j) = y(j) - logistic(zeta(j));
    }
    ModelEvaluation out;
    out.log_likelihood = ll;
    if (want_grad) {
        auto g = linear_predictor_grad(p.U, lambda, p.Z, d_eta);
        g.dZ.noalias() += d_zeta * p.beta.transpose();
        out.gradient = {std::move(g.dU), std::move(g.dlog_lambda), std::move(g.dZ), std::move(g.dmu),
                        p.Z.transpose() * d_zeta, Matrix::Constant(1, 1, d_zeta.sum())};
    }
    Matrix b0 = Matrix::Constant(1, 1, p.beta0);
    out.log_prior = gaussian_prior(p.log_lambda, priors.log_scale_sd, want_grad ? &out.gradient[1] : nullptr) +
                    gaussian_prior(p.Z, priors.latent_sd, want_grad ? &out.gradient[2] : nullptr) +
                    gaussian_prior(p.mu, priors.location_sd, want_grad ? &out.gradient[3] : nullptr) +
                    gaussian_prior(p.beta, priors.location_sd, want_grad ? &out.gradient[4] : nullptr) +
                    gaussian_prior(b0, priors.location_sd, want_grad ? &out.gradient[5] : nullptr);
    return out;
}

inline void require_joint(const JointModelParams &p, const MaskedDataMatrix &data) {
    require_kind(data, DataKind::Count, "joint_poisson_logistic_log_posterior");
    require(data.labels.has_value(), "joint_poisson_logistic_log_posterior: labels required");
    for (Eigen::Index j = 0; j < data.labels->size(); ++j) {
        const double y = (*data.labels)(j);
        require(y == 0.0 || y == 1.0, "joint_poisson_logistic_log_posterior: labels must be 0 or 1");
    }
    require_latent_shapes(p.U, p.log_lambda, p.mu, p.Z, data);
    require(p.beta.size() == p.U.cols(), "joint_poisson_logistic_log_posterior: β must have length k");
}

} // namespace detail

inline ModelEvaluation joint_poisson_logistic_log_posterior(const JointModelParams &p, const MaskedDataMatrix &data,
                                                            bool want_grad = true, const Priors &priors = {}) {
    detail::require_joint(p, data);
    return detail::joint_core(p, data, want_grad, priors, detail::sum_log_factorial(data));
}

// ---------------------------------------------------------------------------
// ProductState adaptors

inline ProductState ppca_state(const PPCAParams &p) {
    ProductState s;
    s.add("U", Geometry::Stiefel, p.U);
    s.add("log_lambda", Geometry::LogPositive, p.log_lambda);
    s.add("mu", Geometry::Euclidean, p.mu);
    s.add("log_sigma2", Geometry::LogPositive, Matrix::Constant(1, 1, p.log_sigma2));
    return s;
}

inline ProductState ppca_latent_state(const PPCAParams &p) {
    ProductState s;
    s.add("U", Geometry::Stiefel, p.U);
    s.add("log_lambda", Geometry::LogPositive, p.log_lambda);
    s.add("Z", Geometry::Euclidean, p.Z);
    s.add("mu", Geometry::Euclidean, p.mu);
    s.add("log_sigma2", Geometry::LogPositive, Matrix::Constant(1, 1, p.log_sigma2));
    return s;
}

inline ProductState epca_state(const PPCAParams &p) {
    ProductState s;
    s.add("U", Geometry::Stiefel, p.U);
    s.add("log_lambda", Geometry::LogPositive, p.log_lambda);
    s.add("Z", Geometry::Euclidean, p.Z);
    s.add("mu", Geometry::Euclidean, p.mu);
    return s;
}

inline ProductState fa_state(const FAGrassmannParams &p) {
    ProductState s;
    s.add("U", Geometry::Grassmann, p.U);
    s.add("log_psi", Geometry::LogPositive, p.log_psi);
    s.add("log_phi", Geometry::LogPositive, p.log_phi);
    s.add("mu", Geometry::Euclidean, p.mu);
    return s;
}

inline ProductState joint_state(const JointModelParams &p) {
    ProductState s;
    s.add("U", Geometry::Stiefel, p.U);
    s.add("log_lambda", Geometry::LogPositive, p.log_lambda);
    s.add("Z", Geometry::Euclidean, p.Z);
    s.add("mu", Geometry::Euclidean, p.mu);
    s.add("beta", Geometry::Euclidean, p.beta);
    s.add("beta0", Geometry::Euclidean, Matrix::Constant(1, 1, p.beta0));
    return s;
}

// Adaptors read blocks by position; the layouts are fixed by the *_state builders.

inline PPCAParams ppca_params(const ProductState &s) {
    return {s[0].value, s[1].value, s[2].value, s[3].value(0, 0), Matrix()};
}

inline PPCAParams ppca_latent_params(const ProductState &s) {
    return {s[0].value, s[1].value, s[3].value, s[4].value(0, 0), s[2].value};
}

inline PPCAParams epca_params(const ProductState &s) { return {s[0].value, s[1].value, s[3].value, 0.0, s[2].value}; }

inline FAGrassmannParams fa_params(const ProductState &s) { return {s[0].value, s[1].value, s[2].value, s[3].value}; }

inline JointModelParams joint_params(const ProductState &s) {
    return {s[0].value, s[1].value, s[3].value, s[2].value, s[4].value, s[5].value(0, 0)};
}

/// HMC target for one of the models above over a fixed data set.
class ModelTarget {
  public:
    ModelTarget(ModelTag tag, MaskedDataMatrix data, Priors priors = {})
        : tag_(tag), data_(std::move(data)), priors_(priors) {
        switch (tag_) {
        case ModelTag::Ppca:
        case ModelTag::FaGrassmann:
            detail::require_kind(data_, DataKind::Continuous, "ModelTarget");
            require(data_.complete(), "ModelTarget: marginal Gaussian models need fully observed rows");
            break;
        case ModelTag::PpcaLatent: detail::require_kind(data_, DataKind::Continuous, "ModelTarget"); break;
        case ModelTag::EpcaBernoulli: detail::require_kind(data_, DataKind::Binary, "ModelTarget"); break;
        case ModelTag::JointPoissonLogistic:
            detail::require_kind(data_, DataKind::Count, "ModelTarget");
            require(data_.labels.has_value(), "ModelTarget: joint model needs labels");
            log_factorial_sum_ = detail::sum_log_factorial(data_);
            break;
        }
    }

    ModelEvaluation evaluate(const ProductState &s, bool want_grad) const {
        switch (tag_) {
        case ModelTag::Ppca: return ppca_log_posterior(ppca_params(s), data_, want_grad, priors_);
        case ModelTag::PpcaLatent: return ppca_latent_log_posterior(ppca_latent_params(s), data_, want_grad, priors_);
        case ModelTag::FaGrassmann: return fa_grassmann_log_posterior(fa_params(s), data_, want_grad, priors_);
        case ModelTag::EpcaBernoulli: return epca_bernoulli_log_posterior(epca_params(s), data_, want_grad, priors_);
        case ModelTag::JointPoissonLogistic: {
            const JointModelParams p = joint_params(s);
            detail::require_latent_shapes(p.U, p.log_lambda, p.mu, p.Z, data_);
            return detail::joint_core(p, data_, want_grad, priors_, log_factorial_sum_);
        }
        }
        throw std::logic_error("ModelTarget: unknown model");
    }

    double log_density(const ProductState &s) const { return evaluate(s, false).log_posterior(); }

    double log_density_and_gradient(const ProductState &s, BlockMatrices &grad) const {
        ModelEvaluation e = evaluate(s, true);
        grad = std::move(e.gradient);
        return e.log_posterior();
    }

    ModelTag tag() const { return tag_; }
    const MaskedDataMatrix &data() const { return data_; }
    const Priors &priors() const { return priors_; }

  private:
    ModelTag tag_;
    MaskedDataMatrix data_;
    Priors priors_;
    double log_factorial_sum_ = 0.0;
};

} // namespace ghmc
