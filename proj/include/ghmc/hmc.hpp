#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "manifold.hpp"
#include "state.hpp"

/*
 * Embedding geodesic Monte Carlo on a product of Stiefel, Grassmann and
 * Euclidean blocks. One iteration:
 *
 *   v ~ N(0, I), projected onto the tangent space of every manifold block
 *   h = log π(x) − ½|v|²
 *   repeat L times:
 *       v ← Π(v + ε/2 ∇log π(x))
 *       (x, v) ← geodesic flow for time ε   (straight line on Euclidean blocks)
 *       v ← Π(v + ε/2 ∇log π(x))
 *   accept the endpoint with probability min(1, exp(h* − h))
 *
 * LogPositive blocks flow like Euclidean ones; the target is expected to be
 * written in log coordinates, Jacobian included.
 */

namespace ghmc {

template <class T>
concept LogDensity = requires(const T &t, const ProductState &s, BlockMatrices &g) {
    { t.log_density(s) } -> std::convertible_to<double>;
    { t.log_density_and_gradient(s, g) } -> std::convertible_to<double>;
};

/// Type-erased target built from two callables.
struct TargetDensity {
    std::function<double(const ProductState &)> density;
    std::function<BlockMatrices(const ProductState &)> gradient;

    double log_density(const ProductState &s) const { return density(s); }
    double log_density_and_gradient(const ProductState &s, BlockMatrices &g) const {
        g = gradient(s);
        return density(s);
    }
};

struct HMCConfig {
    double step_size = 0.01;
    int leapfrog_steps = 20;
    std::size_t num_samples = 1000;
    std::uint64_t seed = 1;
    double target_acceptance_low = 0.6;
    double target_acceptance_high = 0.8;
    std::size_t adapt_iterations = 200;
    /// Keep every state in Chain::samples. Long runs over large blocks can
    /// turn this off and consume states through the observer instead.
    bool store_samples = true;
    /// Spot-check the gradient against finite differences at the initial state.
    bool check_gradient = true;
    double reorthonormalize_threshold = 1e-10;

    void validate() const {
        require(step_size > 0.0 && std::isfinite(step_size), "HMCConfig: step size must be positive");
        require(leapfrog_steps >= 1, "HMCConfig: leapfrog steps must be >= 1");
        require(target_acceptance_low >= 0.0 && target_acceptance_low <= target_acceptance_high &&
                    target_acceptance_high <= 1.0,
                "HMCConfig: target acceptance must be a sub-interval of [0,1]");
    }
};

struct IterationRecord {
    double log_density;   ///< at the state kept after this iteration
    double energy_error;  ///< h* − h of the proposal (NaN when the trajectory diverged)
    double accept_prob;   ///< min(1, exp(h* − h))
    bool accepted;
};

struct Chain {
    std::vector<ProductState> samples;
    std::vector<IterationRecord> records;
    double step_size = 0.0;

    double acceptance_rate() const {
        if (records.empty()) return 0.0;
        std::size_t n = 0;
        for (const auto &r : records) n += r.accepted ? 1 : 0;
        return static_cast<double>(n) / static_cast<double>(records.size());
    }
};

using SampleObserver = std::function<void(std::size_t, const ProductState &, const IterationRecord &)>;

inline double kinetic_energy(const BlockMatrices &v) {
    double s = 0.0;
    for (const auto &b : v) s += b.squaredNorm();
    return 0.5 * s;
}

/// Gaussian velocity projected onto the tangent space of each manifold block.
template <class Rng> BlockMatrices draw_velocity(const ProductState &state, Rng &rng) {
    BlockMatrices v;
    v.reserve(state.size());
    for (const auto &b : state.blocks()) {
        Matrix g = standard_normal_matrix(b.value.rows(), b.value.cols(), rng);
        if (is_manifold(b.geometry)) g = project_tangent(b.geometry, b.value, g);
        v.push_back(std::move(g));
    }
    return v;
}

/// Norm-wise relative error ‖fd − g‖ / max(‖fd‖, ‖g‖, floor) of the analytic
/// gradient against central differences in ambient coordinates. At most
/// `max_coords` evenly spaced coordinates per block are checked (0 = all).
template <LogDensity Target>
double gradient_relative_error(const Target &target, const ProductState &state, double h = 1e-5,
                               Eigen::Index max_coords = 0, double floor = 1e-8) {
    BlockMatrices analytic;
    target.log_density_and_gradient(state, analytic);
    ProductState probe = state;
    double diff2 = 0.0, fd2 = 0.0, an2 = 0.0;
    for (std::size_t b = 0; b < state.size(); ++b) {
        Matrix &x = probe[b].value;
        const Eigen::Index n = x.size();
        const Eigen::Index stride = (max_coords > 0 && n > max_coords) ? n / max_coords : 1;
        for (Eigen::Index i = 0; i < n; i += stride) {
            const double orig = x.data()[i];
            x.data()[i] = orig + h;
            const double up = target.log_density(probe);
            x.data()[i] = orig - h;
            const double down = target.log_density(probe);
            x.data()[i] = orig;
            const double fd = (up - down) / (2.0 * h);
            const double g = analytic[b].data()[i];
            diff2 += (fd - g) * (fd - g);
            fd2 += fd * fd;
            an2 += g * g;
        }
    }
    return std::sqrt(diff2) / std::max({std::sqrt(fd2), std::sqrt(an2), floor});
}

/// Geodesic leapfrog integrator with per-chain scratch state.
template <LogDensity Target> class GeodesicIntegrator {
  public:
    GeodesicIntegrator(const Target &target, double reorth_threshold)
        : target_(target), reorth_threshold_(reorth_threshold) {}

    struct Endpoint {
        ProductState state;
        BlockMatrices velocity;
        BlockMatrices gradient;
        double log_density;
        bool finite;
    };

    /// L leapfrog steps from (x, v); `grad` is ∇log π at x.
    Endpoint integrate(const ProductState &x, BlockMatrices v, const BlockMatrices &grad, double eps, int steps) {
        Endpoint e{x, std::move(v), grad, 0.0, true};
        for (int s = 0; s < steps; ++s) {
            kick(e, 0.5 * eps);
            if (!drift(e, eps)) {
                e.finite = false;
                return e;
            }
            e.log_density = target_.log_density_and_gradient(e.state, e.gradient);
            if (!std::isfinite(e.log_density) || !gradients_finite(e.gradient)) {
                e.finite = false;
                return e;
            }
            kick(e, 0.5 * eps);
        }
        if (steps == 0) e.log_density = target_.log_density(e.state);
        return e;
    }

  private:
    static bool gradients_finite(const BlockMatrices &g) {
        for (const auto &b : g)
            if (!all_finite(b)) return false;
        return true;
    }

    void kick(Endpoint &e, double half) {
        for (std::size_t b = 0; b < e.state.size(); ++b) {
            const auto &blk = e.state[b];
            e.velocity[b].noalias() += half * e.gradient[b];
            if (is_manifold(blk.geometry)) e.velocity[b] = project_tangent(blk.geometry, blk.value, e.velocity[b]);
        }
    }

    bool drift(Endpoint &e, double eps) {
        for (std::size_t b = 0; b < e.state.size(); ++b) {
            auto &blk = e.state[b];
            if (!all_finite(e.velocity[b])) return false;
            switch (blk.geometry) {
            case Geometry::Stiefel:
            case Geometry::Grassmann: {
                Flow f = blk.geometry == Geometry::Stiefel ? stiefel_flow(blk.value, e.velocity[b], eps)
                                                           : grassmann_flow(blk.value, e.velocity[b], eps);
                if (!all_finite(f.point) || !all_finite(f.velocity)) return false;
                blk.value = std::move(f.point);
                e.velocity[b] = std::move(f.velocity);
                if (orthonormality_residual(blk.value) > reorth_threshold_) {
                    blk.value = orthonormalize(blk.value);
                    e.velocity[b] = project_tangent(blk.geometry, blk.value, e.velocity[b]);
                }
                break;
            }
            default: blk.value.noalias() += eps * e.velocity[b]; break;
            }
        }
        return true;
    }

    const Target &target_;
    double reorth_threshold_;
};

/// Stateful single-chain sampler; hmc_sample and adapt_step_size drive it.
template <LogDensity Target> class GeodesicHMC {
  public:
    GeodesicHMC(const Target &target, ProductState init, const HMCConfig &config, std::uint64_t seed)
        : target_(target), integrator_(target, config.reorthonormalize_threshold), state_(std::move(init)),
          step_size_(config.step_size), steps_(config.leapfrog_steps), rng_(seed) {
        config.validate();
        state_.validate();
        log_density_ = target_.log_density_and_gradient(state_, gradient_);
        bool finite = std::isfinite(log_density_);
        for (const auto &g : gradient_) finite = finite && all_finite(g);
        if (!finite) {
            std::ostringstream msg;
            msg << "hmc: non-finite log-density or gradient at the initial state (log density " << log_density_
                << ")";
            throw NumericalError(msg.str());
        }
        if (gradient_.size() != state_.size()) throw std::invalid_argument("hmc: gradient/block count mismatch");
        if (config.check_gradient) {
            const double err = gradient_relative_error(target_, state_, 1e-5, 8);
            if (!(err < 1e-4)) {
                throw NumericalError("hmc: gradient disagrees with finite differences at the initial state "
                                     "(relative error " +
                                     std::to_string(err) + ")");
            }
        }
    }

    IterationRecord step() {
        BlockMatrices v = draw_velocity(state_, rng_);
        const double h = log_density_ - kinetic_energy(v);
        auto end = integrator_.integrate(state_, std::move(v), gradient_, step_size_, steps_);
        const double h_new = end.finite ? end.log_density - kinetic_energy(end.velocity)
                                        : std::numeric_limits<double>::quiet_NaN();
        const double log_u = std::log(uniform_(rng_));
        IterationRecord rec{};
        rec.energy_error = h_new - h;
        rec.accept_prob = std::isfinite(rec.energy_error) ? std::min(1.0, std::exp(rec.energy_error)) : 0.0;
        rec.accepted = std::isfinite(rec.energy_error) && log_u < rec.energy_error;
        if (rec.accepted) {
            state_ = std::move(end.state);
            gradient_ = std::move(end.gradient);
            log_density_ = end.log_density;
        }
        rec.log_density = log_density_;
        return rec;
    }

    const ProductState &state() const { return state_; }
    double log_density() const { return log_density_; }
    double step_size() const { return step_size_; }
    void set_step_size(double eps) { step_size_ = eps; }

  private:
    const Target &target_;
    GeodesicIntegrator<Target> integrator_;
    ProductState state_;
    BlockMatrices gradient_;
    double log_density_ = 0.0;
    double step_size_;
    int steps_;
    std::mt19937_64 rng_;
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Runs config.num_samples iterations from `init`. Rejected proposals repeat
/// the previous state.
template <LogDensity Target>
Chain hmc_sample(const Target &target, ProductState init, const HMCConfig &config,
                 const SampleObserver &observer = {}) {
    GeodesicHMC<Target> sampler(target, std::move(init), config, config.seed);
    Chain chain;
    chain.step_size = config.step_size;
    chain.records.reserve(config.num_samples);
    if (config.store_samples) chain.samples.reserve(config.num_samples);
    for (std::size_t i = 0; i < config.num_samples; ++i) {
        IterationRecord rec = sampler.step();
        if (observer) observer(i, sampler.state(), rec);
        if (config.store_samples) chain.samples.push_back(sampler.state());
        chain.records.push_back(rec);
    }
    return chain;
}

struct AdaptationResult {
    double step_size;
    /// Mean acceptance probability over the post-adaptation window (NaN if none ran).
    double acceptance;
    bool in_range;
    std::string warning;
    /// State reached at the end of adaptation.
    ProductState state;
};

/// Tunes ε toward the target acceptance interval. Batches of 10 iterations
/// are scored by their mean acceptance probability; ε is halved or doubled
/// when a batch is far outside the interval and nudged in log space when
/// close. A final window of max(50, adapt_iterations/4) iterations at the
/// chosen ε reports the achieved rate. The adaptation draws are not part of
/// any returned chain.
template <LogDensity Target>
AdaptationResult adapt_step_size(const Target &target, const ProductState &init, const HMCConfig &config) {
    config.validate();
    const double lo = config.target_acceptance_low;
    const double hi = config.target_acceptance_high;
    if (lo <= 0.0 && hi >= 1.0) return {config.step_size, std::numeric_limits<double>::quiet_NaN(), true, {}, init};
    require(config.adapt_iterations >= 50, "adapt_step_size: need at least 50 adaptation iterations");

    const double mid = 0.5 * (lo + hi);
    GeodesicHMC<Target> sampler(target, init, config, config.seed ^ 0x9e3779b97f4a7c15ULL);
    double eps = config.step_size;
    constexpr std::size_t batch = 10;
    const std::size_t batches = config.adapt_iterations / batch;
    int halvings_without_acceptance = 0;

    auto run = [&](std::size_t n) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += sampler.step().accept_prob;
        return s / static_cast<double>(n);
    };

    for (std::size_t b = 0; b < batches; ++b) {
        sampler.set_step_size(eps);
        const double a = run(batch);
        if (a <= 0.0) {
            eps *= 0.5;
            if (++halvings_without_acceptance >= 60)
                throw NumericalError("adapt_step_size: every proposal rejected after repeated halving of the step size");
            continue;
        }
        halvings_without_acceptance = 0;
        if (a >= lo && a <= hi) continue;
        const double gain = 1.0 / std::sqrt(1.0 + static_cast<double>(b));
        if (a < 0.5 * lo)
            eps *= 0.5;
        else if (a > 0.5 * (1.0 + hi) && a > 0.97)
            eps *= 2.0;
        else
            eps *= std::exp(gain * (a - mid));
    }

    sampler.set_step_size(eps);
    const std::size_t window = std::max<std::size_t>(50, config.adapt_iterations / 4);
    const double achieved = run(window);
    if (achieved <= 0.0)
        throw NumericalError("adapt_step_size: no proposals accepted at the adapted step size");
    AdaptationResult out{eps, achieved, achieved >= lo && achieved <= hi, {}, sampler.state()};
    if (!out.in_range) {
        std::ostringstream msg;
        msg << "step size adaptation reached acceptance " << achieved << " outside [" << lo << ", " << hi << "]";
        out.warning = msg.str();
    }
    return out;
}

} // namespace ghmc
