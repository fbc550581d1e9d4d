#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/SVD>

#include "csv.hpp"
#include "hmc.hpp"
#include "models.hpp"
#include "predict.hpp"
#include "subspace.hpp"

#ifndef GHMC_VERSION
#define GHMC_VERSION "unknown"
#endif

namespace ghmc {

class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// configuration

/// Flat key = value configuration shared by all experiments.
struct ExperimentConfig {
    std::string experiment = "fit";
    std::string model = "epca-bernoulli";
    long d = 16;
    long k = 3;
    long n = 600;
    double corruption_rate = 0.2;
    double missing_fraction = 0.5;
    HMCConfig hmc;
    long window_begin = 100;
    long window_end = 500;
    long burn_in = 50;
    long trials = 20;
    long folds = 10;
    long assignments = 100;
    long prediction_states = 50;
    std::vector<double> fractions{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
    /// Predictand counts for leave-one-out prediction; empty means 1 .. d-1.
    std::vector<long> predictand_counts;
    std::string input;
    std::string truth;
    std::string baseline;
    std::string output = "out";
    bool save_latent = false;

    /// Defaults for a named experiment (bits, loo, impute, cv, fit, diagnose).
    static ExperimentConfig defaults_for(const std::string &experiment) {
        ExperimentConfig c;
        c.experiment = experiment;
        c.hmc.num_samples = 1000;
        c.hmc.adapt_iterations = 200;
        if (experiment == "bits") {
            c.model = "epca-bernoulli";
            c.k = 3;
            c.hmc.leapfrog_steps = 80;
            c.hmc.num_samples = 10000;
        } else if (experiment == "loo") {
            c.model = "fa-grassmann";
            c.k = 3;
            c.hmc.num_samples = 200;
            c.hmc.adapt_iterations = 100;
            c.burn_in = 50;
        } else if (experiment == "impute") {
            c.model = "ppca-latent";
            c.k = 7;
            c.trials = 100;
            c.hmc.num_samples = 300;
            c.burn_in = 100;
        } else if (experiment == "cv") {
            c.model = "joint-poisson-logistic";
            c.k = 5;
            c.hmc.num_samples = 600;
            c.burn_in = 200;
        }
        return c;
    }

    void set(const std::string &key, const std::string &raw) {
        const std::string value = trim(raw);
        auto as_long = [&]() {
            std::size_t used = 0;
            long v = 0;
            try {
                v = std::stol(value, &used);
            } catch (const std::exception &) {
                used = 0;
            }
            if (value.empty() || used != value.size()) throw ConfigError(key + ": expected an integer, got '" + value + "'");
            return v;
        };
        auto as_double = [&]() {
            try {
                return parse_double(value, key);
            } catch (const CsvError &e) {
                throw ConfigError(e.what());
            }
        };
        auto as_bool = [&]() {
            if (value == "true" || value == "1") return true;
            if (value == "false" || value == "0") return false;
            throw ConfigError(key + ": expected true or false, got '" + value + "'");
        };
        auto list = [&]() {
            std::vector<std::string> out;
            std::string item;
            std::istringstream in(value);
            while (std::getline(in, item, ','))
                if (!trim(item).empty()) out.push_back(trim(item));
            return out;
        };
        if (key == "experiment") experiment = value;
        else if (key == "model") {
            parse_model_tag(value);
            model = value;
        } else if (key == "d") d = as_long();
        else if (key == "k") k = as_long();
        else if (key == "n") n = as_long();
        else if (key == "corruption_rate") corruption_rate = as_double();
        else if (key == "missing_fraction") missing_fraction = as_double();
        else if (key == "step_size") hmc.step_size = as_double();
        else if (key == "leapfrog_steps") hmc.leapfrog_steps = static_cast<int>(as_long());
        else if (key == "num_samples") {
            const long v = as_long();
            if (v < 1) throw ConfigError("num_samples must be >= 1");
            hmc.num_samples = static_cast<std::size_t>(v);
        } else if (key == "seed") {
            const long v = as_long();
            if (v < 0) throw ConfigError("seed must be non-negative");
            hmc.seed = static_cast<std::uint64_t>(v);
        } else if (key == "target_acceptance_low") hmc.target_acceptance_low = as_double();
        else if (key == "target_acceptance_high") hmc.target_acceptance_high = as_double();
        else if (key == "adapt_iterations") {
            const long v = as_long();
            if (v < 0) throw ConfigError("adapt_iterations must be non-negative");
            hmc.adapt_iterations = static_cast<std::size_t>(v);
        } else if (key == "window_begin") window_begin = as_long();
        else if (key == "window_end") window_end = as_long();
        else if (key == "burn_in") burn_in = as_long();
        else if (key == "trials") trials = as_long();
        else if (key == "folds") folds = as_long();
        else if (key == "assignments") assignments = as_long();
        else if (key == "prediction_states") prediction_states = as_long();
        else if (key == "fractions") {
            fractions.clear();
            for (const auto &s : list()) fractions.push_back(parse_double(s, key));
        } else if (key == "predictand_counts") {
            predictand_counts.clear();
            for (const auto &s : list()) {
                const double v = parse_double(s, key);
                if (v != std::floor(v)) throw ConfigError("predictand_counts: expected integers");
                predictand_counts.push_back(static_cast<long>(v));
            }
        } else if (key == "input") input = value;
        else if (key == "truth") truth = value;
        else if (key == "baseline") baseline = value;
        else if (key == "output") output = value;
        else if (key == "save_latent") save_latent = as_bool();
        else throw ConfigError("unknown configuration key '" + key + "'");
    }

    /// Reads `key = value` lines; '#' starts a comment.
    void load_file(const std::string &path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file '" + path + "'");
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            if (trim(line).empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
            set(trim(line.substr(0, eq)), line.substr(eq + 1));
        }
    }

    void validate() const {
        auto unit = [](double x) { return x >= 0.0 && x <= 1.0; };
        if (!unit(corruption_rate)) throw ConfigError("corruption_rate must lie in [0, 1]");
        if (!unit(missing_fraction)) throw ConfigError("missing_fraction must lie in [0, 1]");
        for (double f : fractions)
            if (!unit(f)) throw ConfigError("fractions must lie in [0, 1]");
        if (d < 1 || k < 1 || n < 1) throw ConfigError("d, k and n must be positive");
        if (window_begin < 0 || window_end < window_begin) throw ConfigError("window must satisfy 0 <= begin <= end");
        if (burn_in < 0) throw ConfigError("burn_in must be non-negative");
        if (trials < 1 || folds < 2 || assignments < 1 || prediction_states < 1)
            throw ConfigError("trials, assignments and prediction_states must be >= 1 and folds >= 2");
        for (long m : predictand_counts)
            if (m < 0) throw ConfigError("predictand_counts must be non-negative");
        if (hmc.adapt_iterations != 0 && hmc.adapt_iterations < 50)
            throw ConfigError("adapt_iterations must be 0 (off) or >= 50");
        try {
            hmc.validate();
        } catch (const std::invalid_argument &e) {
            throw ConfigError(e.what());
        }
    }

    /// Sorted key/value echo of every setting.
    std::vector<std::pair<std::string, std::string>> entries() const {
        auto join = [](const auto &v) {
            std::string s;
            for (std::size_t i = 0; i < v.size(); ++i) {
                if (i) s += ",";
                if constexpr (std::is_floating_point_v<std::decay_t<decltype(v[i])>>)
                    s += format_double(v[i]);
                else
                    s += std::to_string(v[i]);
            }
            return s;
        };
        std::map<std::string, std::string> m{
            {"experiment", experiment},
            {"model", model},
            {"d", std::to_string(d)},
            {"k", std::to_string(k)},
            {"n", std::to_string(n)},
            {"corruption_rate", format_double(corruption_rate)},
            {"missing_fraction", format_double(missing_fraction)},
            {"step_size", format_double(hmc.step_size)},
            {"leapfrog_steps", std::to_string(hmc.leapfrog_steps)},
            {"num_samples", std::to_string(hmc.num_samples)},
            {"seed", std::to_string(hmc.seed)},
            {"target_acceptance_low", format_double(hmc.target_acceptance_low)},
            {"target_acceptance_high", format_double(hmc.target_acceptance_high)},
            {"adapt_iterations", std::to_string(hmc.adapt_iterations)},
            {"window_begin", std::to_string(window_begin)},
            {"window_end", std::to_string(window_end)},
            {"burn_in", std::to_string(burn_in)},
            {"trials", std::to_string(trials)},
            {"folds", std::to_string(folds)},
            {"assignments", std::to_string(assignments)},
            {"prediction_states", std::to_string(prediction_states)},
            {"fractions", join(fractions)},
            {"predictand_counts", join(predictand_counts)},
            {"input", input},
            {"truth", truth},
            {"baseline", baseline},
            {"output", output},
            {"save_latent", save_latent ? "true" : "false"},
        };
        return {m.begin(), m.end()};
    }
};

inline std::string version_string() {
    std::ostringstream s;
    s << "ghmc " << GHMC_VERSION << "; Eigen " << EIGEN_WORLD_VERSION << "." << EIGEN_MAJOR_VERSION << "."
      << EIGEN_MINOR_VERSION;
    return s.str();
}

/// Writes <dir>/manifest.txt: configuration echo, seed and library versions.
inline void write_manifest(const std::string &dir, const ExperimentConfig &cfg,
                           const std::vector<std::string> &outputs = {}) {
    std::ofstream out(std::filesystem::path(dir) / "manifest.txt");
    if (!out) throw CsvError("cannot write manifest in '" + dir + "'");
    out << "# ghmc experiment manifest\n";
    out << "versions = " << version_string() << "\n";
    for (const auto &[k, v] : cfg.entries()) out << k << " = " << v << "\n";
    for (const auto &f : outputs) out << "output_file = " << std::filesystem::path(f).filename().string() << "\n";
}

inline void write_summary(const std::string &path, const std::vector<std::pair<std::string, std::string>> &kv) {
    std::ofstream out(path);
    if (!out) throw CsvError("cannot write '" + path + "'");
    for (const auto &[k, v] : kv) out << k << " = " << v << "\n";
}

inline std::string na_or(const std::optional<double> &x) { return x ? format_double(*x) : std::string("NA"); }

// ---------------------------------------------------------------------------
// synthetic data

struct BitData {
    Matrix truth;           ///< uncorrupted 0/1 matrix
    Matrix corrupted;       ///< truth with independent flips
    MaskedDataMatrix data;  ///< corrupted values with half the entries missing
    Matrix strings;         ///< the distinct prototype rows
};

/// Prototype strings repeated `repeats` times, bits flipped independently
/// with probability `flip_rate`, then exactly `missing` entries masked.
inline BitData gen_bitvectors(std::uint64_t seed, long strings = 3, long bits = 16, long repeats = 200,
                              double flip_rate = 0.2, long missing = -1) {
    require(strings >= 1 && bits >= 1 && repeats >= 1, "gen_bitvectors: sizes must be positive");
    require(flip_rate >= 0.0 && flip_rate <= 1.0, "gen_bitvectors: flip rate must lie in [0, 1]");
    const long n = strings * repeats;
    if (missing < 0) missing = n * bits / 2;
    require(missing <= n * bits, "gen_bitvectors: more missing entries than entries");
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.5), flip(flip_rate);
    BitData out;
    out.strings.resize(strings, bits);
    for (long s = 0; s < strings; ++s)
        for (long b = 0; b < bits; ++b) out.strings(s, b) = coin(rng) ? 1.0 : 0.0;
    out.truth.resize(n, bits);
    for (long i = 0; i < n; ++i) out.truth.row(i) = out.strings.row(i / repeats);
    out.corrupted = out.truth;
    for (long i = 0; i < n; ++i)
        for (long b = 0; b < bits; ++b)
            if (flip(rng)) out.corrupted(i, b) = 1.0 - out.corrupted(i, b);
    std::vector<long> cells(static_cast<std::size_t>(n * bits));
    std::iota(cells.begin(), cells.end(), 0L);
    std::shuffle(cells.begin(), cells.end(), rng);
    Mask mask = Mask::Constant(n, bits, true);
    for (long c = 0; c < missing; ++c) {
        const long cell = cells[static_cast<std::size_t>(c)];
        mask(cell / bits, cell % bits) = false;
    }
    out.data = MaskedDataMatrix(out.corrupted, mask, DataKind::Binary);
    return out;
}

/// Rows y_j = W z_j + μ + σ ε_j with W = U diag(scales); returns data and the
/// true covariance.
struct LowRankGaussian {
    Matrix values;
    Vector mean;
    Matrix covariance;
};

inline LowRankGaussian gen_lowrank_gaussian(long n, long d, long k, double sigma, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const Matrix u = random_uniform_point(d, k, rng).matrix();
    Vector scales(k);
    for (long l = 0; l < k; ++l) scales(l) = 3.0 * std::pow(0.7, static_cast<double>(l));
    const Matrix w = u * scales.asDiagonal();
    const Vector mu = standard_normal_matrix(d, 1, rng);
    const Matrix z = standard_normal_matrix(n, k, rng);
    const Matrix e = standard_normal_matrix(n, d, rng);
    LowRankGaussian out;
    out.values = ((z * w.transpose()).rowwise() + mu.transpose()) + sigma * e;
    out.mean = mu;
    out.covariance = w * w.transpose() + sigma * sigma * Matrix::Identity(d, d);
    return out;
}

/// Counts and labels drawn from the Poisson-logistic model.
struct JointSynthetic {
    MaskedDataMatrix data;
    JointModelParams truth;
};

inline JointSynthetic gen_joint_data(long n, long d, const Vector &beta, double beta0, std::uint64_t seed,
                                     double base_rate = 3.0) {
    const long k = beta.size();
    std::mt19937_64 rng(seed);
    JointModelParams p;
    p.U = random_uniform_point(d, k, rng).matrix();
    p.log_lambda.resize(k);
    for (long l = 0; l < k; ++l) p.log_lambda(l) = std::log(3.0 - 2.0 * static_cast<double>(l) / std::max(1L, k - 1));
    p.mu = Vector::Constant(d, std::log(base_rate)) + 0.2 * standard_normal_matrix(d, 1, rng);
    p.Z = standard_normal_matrix(n, k, rng);
    p.beta = beta;
    p.beta0 = beta0;
    const Matrix eta = detail::linear_predictor(p.U, p.log_lambda.array().exp().matrix(), p.Z, p.mu);
    Matrix x(n, d);
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < d; ++j) x(i, j) = std::poisson_distribution<int>(std::exp(eta(i, j)))(rng);
    Vector y(n);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (long i = 0; i < n; ++i) y(i) = unif(rng) < logistic(p.Z.row(i).dot(beta) + beta0) ? 1.0 : 0.0;
    return {MaskedDataMatrix::fully_observed(x, DataKind::Count, y), p};
}

// ---------------------------------------------------------------------------
// initial states

inline Vector observed_column_means(const MaskedDataMatrix &data) {
    Vector m = Vector::Zero(data.cols());
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
        double s = 0.0;
        long c = 0;
        for (Eigen::Index i = 0; i < data.rows(); ++i)
            if (data.mask(i, j)) {
                s += data.values(i, j);
                ++c;
            }
        m(j) = c > 0 ? s / static_cast<double>(c) : 0.0;
    }
    return m;
}

struct PcaStart {
    Matrix U;          ///< d x k loadings
    Vector scales;     ///< singular values / sqrt(N)
    Matrix Z;          ///< N x k unit-variance scores
    Vector mean;
    double residual_variance;
};

/// PCA of `values` after filling missing entries with column means.
inline PcaStart pca_start(const Matrix &values, const Mask &mask, long k) {
    const Eigen::Index n = values.rows(), d = values.cols();
    require(k <= std::min(n, d), "pca_start: k exceeds the data dimensions");
    Vector mean = Vector::Zero(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        double s = 0.0;
        long c = 0;
        for (Eigen::Index i = 0; i < n; ++i)
            if (mask(i, j)) s += values(i, j), ++c;
        mean(j) = c ? s / static_cast<double>(c) : 0.0;
    }
    Matrix centered(n, d);
    for (Eigen::Index j = 0; j < d; ++j)
        for (Eigen::Index i = 0; i < n; ++i) centered(i, j) = mask(i, j) ? values(i, j) - mean(j) : 0.0;
    Eigen::JacobiSVD<Matrix> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double rn = std::sqrt(static_cast<double>(n));
    PcaStart p;
    p.U = svd.matrixV().leftCols(k);
    p.scales = (svd.singularValues().head(k) / rn).cwiseMax(1e-3);
    p.Z = svd.matrixU().leftCols(k) * rn;
    p.mean = mean;
    const double tail = svd.singularValues().tail(svd.singularValues().size() - k).squaredNorm();
    p.residual_variance = std::max(tail / static_cast<double>(n * d), 1e-3);
    return p;
}

/// Uniform random U, Λ = 1, μ = 0 and small latent factors.
inline ProductState random_latent_start(ModelTag tag, const MaskedDataMatrix &data, long k, std::mt19937_64 &rng) {
    PPCAParams p;
    p.U = random_uniform_point(data.cols(), k, rng).matrix();
    p.log_lambda = Vector::Zero(k);
    p.mu = Vector::Zero(data.cols());
    p.log_sigma2 = 0.0;
    p.Z = 0.1 * standard_normal_matrix(data.rows(), k, rng);
    if (tag == ModelTag::EpcaBernoulli) return epca_state(p);
    if (tag == ModelTag::PpcaLatent) return ppca_latent_state(p);
    throw std::invalid_argument("random_latent_start: model has no latent factors");
}

/// Data-driven starting state for each model.
inline ProductState initial_state(ModelTag tag, const MaskedDataMatrix &data, long k, std::mt19937_64 &rng) {
    require(k >= 1 && k <= data.cols(), "initial_state: need 1 <= k <= d");
    switch (tag) {
    case ModelTag::EpcaBernoulli: return random_latent_start(tag, data, k, rng);
    case ModelTag::Ppca:
    case ModelTag::PpcaLatent: {
        const PcaStart s = pca_start(data.values, data.mask, k);
        PPCAParams p{s.U, s.scales.array().log(), s.mean, std::log(s.residual_variance), s.Z};
        if (tag == ModelTag::Ppca) return ppca_state(p);
        return ppca_latent_state(p);
    }
    case ModelTag::FaGrassmann: {
        const Eigen::Index d = data.cols();
        const Vector mean = observed_column_means(data);
        const Matrix centered = data.values.rowwise() - mean.transpose();
        const Matrix cov = centered.transpose() * centered / static_cast<double>(data.rows());
        const Vector sd = cov.diagonal().cwiseMax(1e-12).cwiseSqrt();
        const Matrix corr = sd.cwiseInverse().asDiagonal() * cov * sd.cwiseInverse().asDiagonal();
        Eigen::SelfAdjointEigenSolver<Matrix> eig(corr);
        const Matrix u = eig.eigenvectors().rightCols(k).rowwise().reverse();
        const Vector ev = eig.eigenvalues().tail(k).reverse().cwiseMax(1e-3);
        const double s = ev.mean();
        const Vector communality = (u * ev.cwiseSqrt().asDiagonal()).rowwise().squaredNorm();
        FAGrassmannParams p;
        p.U = u;
        p.log_psi = ((Vector::Ones(d) - communality).cwiseMax(0.05) / s).array().log();
        p.log_phi = (sd * std::sqrt(s)).array().log();
        p.mu = mean;
        return fa_state(p);
    }
    case ModelTag::JointPoissonLogistic: {
        require(data.labels.has_value(), "initial_state: joint model needs labels");
        const Matrix logx = (data.values.array() + 0.5).log();
        const PcaStart s = pca_start(logx, data.mask, k);
        JointModelParams p;
        p.U = s.U;
        p.log_lambda = s.scales.array().log();
        p.mu = s.mean;
        p.Z = s.Z;
        p.beta = Vector::Zero(k);
        const double ybar = std::clamp(data.labels->mean(), 0.02, 0.98);
        p.beta0 = std::log(ybar / (1.0 - ybar));
        return joint_state(p);
    }
    }
    throw std::logic_error("initial_state: unknown model");
}

// ---------------------------------------------------------------------------
// running a chain

struct SamplerRun {
    double step_size = 0.0;
    std::optional<double> adapted_acceptance;
    std::vector<IterationRecord> records;
    std::vector<std::string> warnings;

    double acceptance_rate() const {
        if (records.empty()) return 0.0;
        double a = 0.0;
        for (const auto &r : records) a += r.accepted ? 1.0 : 0.0;
        return a / static_cast<double>(records.size());
    }
    double mean_abs_energy_error() const {
        double s = 0.0;
        long c = 0;
        for (const auto &r : records)
            if (std::isfinite(r.energy_error)) s += std::abs(r.energy_error), ++c;
        return c ? s / static_cast<double>(c) : std::numeric_limits<double>::quiet_NaN();
    }
};

/// Optional step-size adaptation followed by the main chain. The main chain
/// starts from `init` when `restart_from_init`, otherwise from where
/// adaptation ended. States are handed to `observer` and not stored.
template <LogDensity Target>
SamplerRun run_sampler(const Target &target, const ProductState &init, const HMCConfig &config,
                       bool restart_from_init, const SampleObserver &observer) {
    SamplerRun run;
    HMCConfig h = config;
    h.store_samples = false;
    ProductState start = init;
    if (config.adapt_iterations > 0) {
        AdaptationResult a = adapt_step_size(target, init, h);
        h.step_size = a.step_size;
        run.adapted_acceptance = a.acceptance;
        if (!a.warning.empty()) run.warnings.push_back(a.warning);
        if (!restart_from_init) start = std::move(a.state);
        h.check_gradient = false;
    }
    run.step_size = h.step_size;
    run.records = hmc_sample(target, std::move(start), h, observer).records;
    return run;
}

/// Collects selected blocks (order-normalized when the state has scales).
class BlockRecorder {
  public:
    explicit BlockRecorder(std::vector<std::string> names) : names_(std::move(names)) {}

    void add(std::size_t iteration, const ProductState &raw) {
        const bool has_scales = std::any_of(raw.blocks().begin(), raw.blocks().end(),
                                            [](const ParameterBlock &b) { return b.name == "log_lambda"; });
        const ProductState s = has_scales ? order_by_scale(raw) : raw;
        if (values_.empty()) values_.resize(names_.size());
        for (std::size_t b = 0; b < names_.size(); ++b) values_[b].push_back(s.value(names_[b]));
        iterations_.push_back(static_cast<long>(iteration));
    }

    std::vector<std::string> write(const std::string &prefix) const {
        std::vector<std::string> files;
        if (iterations_.empty()) return files;
        for (std::size_t b = 0; b < names_.size(); ++b) {
            const std::string path = prefix + "_" + names_[b] + ".csv";
            write_block_csv(path, names_[b], iterations_, values_[b]);
            files.push_back(path);
        }
        return files;
    }

    const std::vector<Matrix> &values(const std::string &name) const {
        for (std::size_t b = 0; b < names_.size(); ++b)
            if (names_[b] == name) return values_.at(b);
        throw std::invalid_argument("BlockRecorder: block '" + name + "' not recorded");
    }
    const std::vector<long> &iterations() const { return iterations_; }

  private:
    std::vector<std::string> names_;
    std::vector<std::vector<Matrix>> values_;
    std::vector<long> iterations_;
};

inline std::vector<std::string> stored_block_names(ModelTag tag, bool save_latent) {
    switch (tag) {
    case ModelTag::Ppca: return {"U", "log_lambda", "mu", "log_sigma2"};
    case ModelTag::PpcaLatent:
        return save_latent ? std::vector<std::string>{"U", "log_lambda", "Z", "mu", "log_sigma2"}
                           : std::vector<std::string>{"U", "log_lambda", "mu", "log_sigma2"};
    case ModelTag::FaGrassmann: return {"U", "log_psi", "log_phi", "mu"};
    case ModelTag::EpcaBernoulli:
        return save_latent ? std::vector<std::string>{"U", "log_lambda", "Z", "mu"}
                           : std::vector<std::string>{"U", "log_lambda", "mu"};
    case ModelTag::JointPoissonLogistic:
        return save_latent ? std::vector<std::string>{"U", "log_lambda", "Z", "mu", "beta", "beta0"}
                           : std::vector<std::string>{"U", "log_lambda", "mu", "beta", "beta0"};
    }
    return {};
}

inline void ensure_dir(const std::string &dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw CsvError("cannot create output directory '" + dir + "': " + ec.message());
}

inline std::string out_path(const std::string &dir, const std::string &name) {
    return (std::filesystem::path(dir) / name).string();
}

// ---------------------------------------------------------------------------
// generic fit

struct FitResult {
    SamplerRun run;
    std::vector<std::string> files;
};

/// Samples the posterior of `cfg.model` on `data` and writes chain CSVs,
/// diagnostics and a manifest to cfg.output.
inline FitResult run_fit(const MaskedDataMatrix &data, const ExperimentConfig &cfg) {
    cfg.validate();
    const ModelTag tag = parse_model_tag(cfg.model);
    const ModelTarget target(tag, data);
    std::mt19937_64 rng(cfg.hmc.seed);
    const ProductState init = initial_state(tag, data, cfg.k, rng);
    BlockRecorder rec(stored_block_names(tag, cfg.save_latent));
    FitResult out;
    out.run = run_sampler(target, init, cfg.hmc, false,
                          [&](std::size_t i, const ProductState &s, const IterationRecord &) { rec.add(i, s); });
    ensure_dir(cfg.output);
    out.files = rec.write(out_path(cfg.output, "chain"));
    const std::string diag = out_path(cfg.output, "chain_diagnostics.csv");
    write_diagnostics_csv(diag, out.run.records);
    out.files.push_back(diag);
    write_summary(out_path(cfg.output, "summary.txt"),
                  {{"step_size", format_double(out.run.step_size)},
                   {"acceptance_rate", format_double(out.run.acceptance_rate())},
                   {"mean_abs_energy_error", format_double(out.run.mean_abs_energy_error())}});
    write_manifest(cfg.output, cfg, out.files);
    return out;
}

// ---------------------------------------------------------------------------
// bit-vector reconstruction

inline double threshold_error(const Matrix &prob, const Matrix &truth) {
    Eigen::Index wrong = 0;
    for (Eigen::Index i = 0; i < prob.size(); ++i)
        wrong += ((prob.data()[i] > 0.5 ? 1.0 : 0.0) != truth.data()[i]) ? 1 : 0;
    return static_cast<double>(wrong) / static_cast<double>(prob.size());
}

struct BitResult {
    std::vector<double> sample_error;
    /// Error of the averaged reconstruction over [window_begin, i]; NaN before the window.
    std::vector<double> running_error;
    std::optional<double> window_error;      ///< over [window_begin, window_end]
    std::optional<double> full_chain_error;  ///< over [window_begin, N)
    Matrix reconstruction;                   ///< thresholded window average
    SubspaceChain subspaces;
    SamplerRun run;
    std::vector<std::string> warnings;
};

/// EPCA fit of masked bit vectors with per-iteration reconstruction error
/// against `truth`. Writes trace, reconstruction, U chain, diagnostics,
/// summary and manifest when `write_outputs`.
inline BitResult run_bit_experiment(const MaskedDataMatrix &data, const Matrix &truth, const ExperimentConfig &cfg,
                                    bool write_outputs = true) {
    cfg.validate();
    require(data.kind == DataKind::Binary, "run_bit_experiment: binary data required");
    require(truth.rows() == data.rows() && truth.cols() == data.cols(), "run_bit_experiment: truth shape mismatch");
    const ModelTarget target(ModelTag::EpcaBernoulli, data);
    std::mt19937_64 rng(cfg.hmc.seed);
    const ProductState init = random_latent_start(ModelTag::EpcaBernoulli, data, cfg.k, rng);

    BitResult out;
    const long n = static_cast<long>(cfg.hmc.num_samples);
    long wb = cfg.window_begin, we = cfg.window_end;
    if (wb >= n) {
        out.warnings.push_back("averaging window starts after the last sample; no averaged error reported");
    } else if (we >= n) {
        out.warnings.push_back("averaging window truncated to the chain length");
        we = n - 1;
    }
    Matrix window_sum = Matrix::Zero(data.rows(), data.cols());
    Matrix full_sum = Matrix::Zero(data.rows(), data.cols());
    long window_count = 0, full_count = 0;
    BlockRecorder rec({"U", "log_lambda", "mu"});
    out.run = run_sampler(target, init, cfg.hmc, true, [&](std::size_t it, const ProductState &s, const IterationRecord &) {
        const long i = static_cast<long>(it);
        const Matrix p = predictive_mean(ModelTag::EpcaBernoulli, s);
        out.sample_error.push_back(threshold_error(p, truth));
        if (i >= wb && i <= we) {
            window_sum += p;
            ++window_count;
        }
        if (i >= wb) {
            full_sum += p;
            ++full_count;
            out.running_error.push_back(threshold_error(full_sum / static_cast<double>(full_count), truth));
        } else {
            out.running_error.push_back(std::numeric_limits<double>::quiet_NaN());
        }
        out.subspaces.push_back(GrassmannPoint(s.value("U")), i);
        rec.add(it, s);
    });
    for (auto &w : out.run.warnings) out.warnings.push_back(w);
    if (window_count > 0) {
        const Matrix avg = window_sum / static_cast<double>(window_count);
        out.window_error = threshold_error(avg, truth);
        out.reconstruction = avg.unaryExpr([](double p) { return p > 0.5 ? 1.0 : 0.0; });
    }
    if (full_count > 0) out.full_chain_error = threshold_error(full_sum / static_cast<double>(full_count), truth);

    if (write_outputs) {
        ensure_dir(cfg.output);
        std::vector<std::string> files;
        const std::string trace = out_path(cfg.output, "bit_error_trace.csv");
        {
            CsvWriter w(trace);
            w.row({"iteration", "sample_error", "running_average_error"});
            for (std::size_t i = 0; i < out.sample_error.size(); ++i)
                w.row({std::to_string(i), format_double(out.sample_error[i]),
                       std::isnan(out.running_error[i]) ? std::string("NA") : format_double(out.running_error[i])});
        }
        files.push_back(trace);
        if (window_count > 0) {
            const std::string recon = out_path(cfg.output, "bit_reconstruction.csv");
            write_matrix_csv(recon, out.reconstruction);
            files.push_back(recon);
        }
        for (auto &f : rec.write(out_path(cfg.output, "chain"))) files.push_back(f);
        const std::string diag = out_path(cfg.output, "chain_diagnostics.csv");
        write_diagnostics_csv(diag, out.run.records);
        files.push_back(diag);
        write_summary(out_path(cfg.output, "summary.txt"),
                      {{"step_size", format_double(out.run.step_size)},
                       {"acceptance_rate", format_double(out.run.acceptance_rate())},
                       {"window_error", na_or(out.window_error)},
                       {"full_chain_error", na_or(out.full_chain_error)},
                       {"final_sample_error", format_double(out.sample_error.back())}});
        write_manifest(cfg.output, cfg, files);
    }
    return out;
}

// ---------------------------------------------------------------------------
// leave-one-out conditional prediction

struct LooRow {
    long row;
    long predictands;
    std::optional<double> bayes_l1;
    std::optional<double> baseline_l1;
};

/// Maps training rows to Gaussian moments.
using MomentsFn = std::function<GaussianMoments(const MaskedDataMatrix &train, std::uint64_t seed)>;

/// Posterior-mean (μ, Σ) of the Grassmann factor model from a short chain.
inline MomentsFn bayes_fa_moments(const ExperimentConfig &cfg) {
    return [cfg](const MaskedDataMatrix &train, std::uint64_t seed) {
        const ModelTarget target(ModelTag::FaGrassmann, train);
        std::mt19937_64 rng(seed);
        const ProductState init = initial_state(ModelTag::FaGrassmann, train, cfg.k, rng);
        HMCConfig h = cfg.hmc;
        h.seed = seed;
        GaussianMoments m{Vector::Zero(train.cols()), Matrix::Zero(train.cols(), train.cols())};
        long count = 0;
        run_sampler(target, init, h, false, [&](std::size_t i, const ProductState &s, const IterationRecord &) {
            if (static_cast<long>(i) < cfg.burn_in) return;
            const FAGrassmannParams p = fa_params(s);
            m.mean += p.mu;
            m.covariance += fa_covariance(p);
            ++count;
        });
        if (count == 0) throw ConfigError("loo: burn_in leaves no samples");
        m.mean /= static_cast<double>(count);
        m.covariance /= static_cast<double>(count);
        return m;
    };
}

inline MomentsFn fixed_moments(GaussianMoments g) {
    return [g](const MaskedDataMatrix &, std::uint64_t) { return g; };
}

struct LooResult {
    std::vector<LooRow> rows;
    std::vector<std::string> warnings;
};

/// For every held-out row and predictand count, the mean over random
/// predictor/predictand splits of the mean absolute deviation of the
/// predictands from their conditional mean.
inline LooResult run_loo_prediction(const MaskedDataMatrix &data, const ExperimentConfig &cfg, const MomentsFn &bayes,
                                    const MomentsFn *baseline = nullptr) {
    cfg.validate();
    require(data.kind == DataKind::Continuous && data.complete(), "loo: fully observed continuous data required");
    require(data.rows() >= 3, "loo: need at least 3 rows");
    const long d = data.cols();
    std::vector<long> levels = cfg.predictand_counts;
    if (levels.empty())
        for (long m = 1; m < d; ++m) levels.push_back(m);
    LooResult out;
    for (long m : levels) {
        if (m > d) throw ConfigError("loo: predictand count exceeds the dimension");
        if (m == 0) out.warnings.push_back("loo: predictand count 0 yields empty error rows");
    }
    for (long r = 0; r < data.rows(); ++r) {
        std::vector<Eigen::Index> keep;
        for (long i = 0; i < data.rows(); ++i)
            if (i != r) keep.push_back(i);
        const MaskedDataMatrix train = data.select_rows(keep);
        const std::uint64_t seed = cfg.hmc.seed + 7919ULL * static_cast<std::uint64_t>(r + 1);
        const GaussianMoments gb = bayes(train, seed);
        std::optional<GaussianMoments> gl;
        if (baseline) gl = (*baseline)(train, seed);
        const Vector y = data.values.row(r).transpose();
        std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
        for (long m : levels) {
            LooRow row{r, m, std::nullopt, std::nullopt};
            if (m > 0) {
                double eb = 0.0, el = 0.0;
                std::vector<Eigen::Index> idx(static_cast<std::size_t>(d));
                for (long a = 0; a < cfg.assignments; ++a) {
                    std::iota(idx.begin(), idx.end(), 0);
                    std::shuffle(idx.begin(), idx.end(), rng);
                    const IndexList targets(idx.begin(), idx.begin() + m);
                    const IndexList predictors(idx.begin() + m, idx.end());
                    Vector yb(static_cast<Eigen::Index>(predictors.size())), ya(m);
                    for (std::size_t b = 0; b < predictors.size(); ++b) yb(static_cast<Eigen::Index>(b)) = y(predictors[b]);
                    for (long t = 0; t < m; ++t) ya(t) = y(targets[static_cast<std::size_t>(t)]);
                    eb += (gaussian_conditional_mean(gb.covariance, gb.mean, predictors, yb, targets) - ya)
                              .cwiseAbs()
                              .mean();
                    if (gl)
                        el += (gaussian_conditional_mean(gl->covariance, gl->mean, predictors, yb, targets) - ya)
                                  .cwiseAbs()
                                  .mean();
                }
                row.bayes_l1 = eb / static_cast<double>(cfg.assignments);
                if (gl) row.baseline_l1 = el / static_cast<double>(cfg.assignments);
            }
            out.rows.push_back(row);
        }
    }
    return out;
}

inline void write_loo_csv(const std::string &path, const LooResult &r) {
    CsvWriter w(path);
    w.row({"row", "predictands", "bayes_l1", "baseline_l1"});
    for (const auto &x : r.rows)
        w.row({std::to_string(x.row), std::to_string(x.predictands), x.bayes_l1 ? format_double(*x.bayes_l1) : "",
               x.baseline_l1 ? format_double(*x.baseline_l1) : ""});
}

// ---------------------------------------------------------------------------
// imputation sweep

struct ImputationRow {
    double fraction;
    long trial;
    long missing_entries;
    long skipped_rows;
    std::optional<double> mae;
    std::optional<double> column_mean_mae;
};

struct ImputationResult {
    std::vector<ImputationRow> rows;
    std::vector<std::string> warnings;
};

/// One trial: hide each observed entry with probability `fraction`, impute
/// by the latent PPCA posterior mean and by column means.
inline ImputationRow imputation_trial(const MaskedDataMatrix &complete, double fraction, long trial,
                                      const ExperimentConfig &cfg, std::vector<std::string> &warnings) {
    const std::uint64_t seed = cfg.hmc.seed + 1000003ULL * static_cast<std::uint64_t>(std::llround(fraction * 1000)) +
                               static_cast<std::uint64_t>(trial);
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution hide(fraction);
    Mask mask = complete.mask;
    Mask hidden = Mask::Constant(complete.rows(), complete.cols(), false);
    for (Eigen::Index i = 0; i < complete.rows(); ++i)
        for (Eigen::Index j = 0; j < complete.cols(); ++j)
            if (complete.mask(i, j) && hide(rng)) {
                mask(i, j) = false;
                hidden(i, j) = true;
            }
    ImputationRow row{fraction, trial, 0, 0, std::nullopt, std::nullopt};
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < complete.rows(); ++i) {
        if (mask.row(i).any())
            keep.push_back(i);
        else
            ++row.skipped_rows;
    }
    if (row.skipped_rows > 0)
        warnings.push_back("impute: fraction " + format_double(fraction) + " trial " + std::to_string(trial) + ": " +
                           std::to_string(row.skipped_rows) + " fully missing row(s) skipped");
    for (auto i : keep) row.missing_entries += hidden.row(i).count();
    if (row.missing_entries == 0 || static_cast<long>(keep.size()) <= cfg.k) return row;

    MaskedDataMatrix train = complete.select_rows(keep);
    Mask sub_hidden(train.rows(), train.cols());
    for (std::size_t r = 0; r < keep.size(); ++r) {
        train.mask.row(static_cast<Eigen::Index>(r)) = mask.row(keep[r]);
        sub_hidden.row(static_cast<Eigen::Index>(r)) = hidden.row(keep[r]);
    }
    const Vector col_means = observed_column_means(train);
    const ModelTarget target(ModelTag::PpcaLatent, train);
    const ProductState init = initial_state(ModelTag::PpcaLatent, train, cfg.k, rng);
    HMCConfig h = cfg.hmc;
    h.seed = seed;
    ReconstructionAccumulator acc(ModelTag::PpcaLatent);
    run_sampler(target, init, h, false, [&](std::size_t i, const ProductState &s, const IterationRecord &) {
        if (static_cast<long>(i) >= cfg.burn_in) acc.add(s);
    });
    if (acc.count() == 0) throw ConfigError("impute: burn_in leaves no samples");
    const Reconstruction rec = acc.result(train);
    double mae = 0.0, base = 0.0;
    for (Eigen::Index i = 0; i < train.rows(); ++i)
        for (Eigen::Index j = 0; j < train.cols(); ++j)
            if (sub_hidden(i, j)) {
                mae += std::abs(rec.values(i, j) - train.values(i, j));
                base += std::abs(col_means(j) - train.values(i, j));
            }
    row.mae = mae / static_cast<double>(row.missing_entries);
    row.column_mean_mae = base / static_cast<double>(row.missing_entries);
    return row;
}

inline ImputationResult run_imputation_sweep(const MaskedDataMatrix &data, const ExperimentConfig &cfg) {
    cfg.validate();
    require(data.kind == DataKind::Continuous, "impute: continuous data required");
    ImputationResult out;
    for (double f : cfg.fractions)
        for (long t = 0; t < cfg.trials; ++t) out.rows.push_back(imputation_trial(data, f, t, cfg, out.warnings));
    return out;
}

inline void write_imputation_csv(const std::string &path, const ImputationResult &r) {
    CsvWriter w(path);
    w.row({"fraction", "trial", "missing_entries", "skipped_rows", "mae", "column_mean_mae"});
    for (const auto &x : r.rows)
        w.row({format_double(x.fraction), std::to_string(x.trial), std::to_string(x.missing_entries),
               std::to_string(x.skipped_rows), na_or(x.mae), na_or(x.column_mean_mae)});
}

// ---------------------------------------------------------------------------
// joint model: fit, β summaries and cross-validation

struct JointFit {
    std::vector<ProductState> states;  ///< thinned post-burn-in states, order-normalized
    std::vector<Vector> beta;          ///< every post-burn-in β, order-normalized
    SamplerRun run;
};

inline JointFit fit_joint(const MaskedDataMatrix &train, const ExperimentConfig &cfg, std::uint64_t seed) {
    const ModelTarget target(ModelTag::JointPoissonLogistic, train);
    std::mt19937_64 rng(seed);
    const ProductState init = initial_state(ModelTag::JointPoissonLogistic, train, cfg.k, rng);
    HMCConfig h = cfg.hmc;
    h.seed = seed;
    JointFit fit;
    const long kept = static_cast<long>(cfg.hmc.num_samples) - cfg.burn_in;
    if (kept <= 0) throw ConfigError("cv: burn_in leaves no samples");
    const long stride = std::max(1L, kept / cfg.prediction_states);
    fit.run = run_sampler(target, init, h, false, [&](std::size_t it, const ProductState &s, const IterationRecord &) {
        const long i = static_cast<long>(it);
        if (i < cfg.burn_in) return;
        const ProductState o = order_by_scale(s);
        fit.beta.push_back(o.value("beta"));
        if ((i - cfg.burn_in) % stride == 0 && static_cast<long>(fit.states.size()) < cfg.prediction_states)
            fit.states.push_back(o);
    });
    return fit;
}

/// Equal-tailed credible interval from samples.
inline std::pair<double, double> credible_interval(std::vector<double> x, double level = 0.95) {
    require(!x.empty(), "credible_interval: no samples");
    std::sort(x.begin(), x.end());
    auto q = [&](double p) {
        const double pos = p * static_cast<double>(x.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, x.size() - 1);
        return x[lo] + (pos - static_cast<double>(lo)) * (x[hi] - x[lo]);
    };
    return {q(0.5 * (1.0 - level)), q(0.5 * (1.0 + level))};
}

struct CvFold {
    long fold;
    long n_test;
    double error;
    double majority_error;
    bool single_class;
};

struct CvResult {
    std::vector<CvFold> folds;
    double mean_error = 0.0;
    double mean_majority_error = 0.0;
    std::vector<std::string> warnings;
};

inline CvResult run_joint_cv(const MaskedDataMatrix &data, const ExperimentConfig &cfg) {
    cfg.validate();
    require(data.kind == DataKind::Count && data.labels.has_value(), "cv: count data with labels required");
    require(data.rows() >= cfg.folds, "cv: fewer rows than folds");
    std::vector<Eigen::Index> order(static_cast<std::size_t>(data.rows()));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(cfg.hmc.seed);
    std::shuffle(order.begin(), order.end(), rng);
    CvResult out;
    long total = 0;
    double wrong = 0.0, wrong_major = 0.0;
    for (long f = 0; f < cfg.folds; ++f) {
        std::vector<Eigen::Index> tr, te;
        for (std::size_t i = 0; i < order.size(); ++i)
            (static_cast<long>(i) % cfg.folds == f ? te : tr).push_back(order[i]);
        const MaskedDataMatrix train = data.select_rows(tr);
        const MaskedDataMatrix test = data.select_rows(te);
        const JointFit fit = fit_joint(train, cfg, cfg.hmc.seed + 104729ULL * static_cast<std::uint64_t>(f + 1));
        for (const auto &w : fit.run.warnings) out.warnings.push_back("cv fold " + std::to_string(f) + ": " + w);
        const Vector prob = joint_predict_probability(fit.states, test.values);
        const double majority = train.labels->mean() > 0.5 ? 1.0 : 0.0;
        CvFold fold{f, static_cast<long>(te.size()), 0.0, 0.0, false};
        const double ones = test.labels->sum();
        fold.single_class = ones == 0.0 || ones == static_cast<double>(te.size());
        if (fold.single_class) out.warnings.push_back("cv fold " + std::to_string(f) + ": test labels have a single class");
        double e = 0.0, em = 0.0;
        for (Eigen::Index i = 0; i < prob.size(); ++i) {
            const double y = (*test.labels)(i);
            e += ((prob(i) > 0.5 ? 1.0 : 0.0) != y) ? 1.0 : 0.0;
            em += (majority != y) ? 1.0 : 0.0;
        }
        fold.error = e / static_cast<double>(te.size());
        fold.majority_error = em / static_cast<double>(te.size());
        wrong += e;
        wrong_major += em;
        total += static_cast<long>(te.size());
        out.folds.push_back(fold);
    }
    out.mean_error = wrong / static_cast<double>(total);
    out.mean_majority_error = wrong_major / static_cast<double>(total);
    return out;
}

inline void write_cv_csv(const std::string &path, const CvResult &r) {
    CsvWriter w(path);
    w.row({"fold", "n_test", "error", "majority_error"});
    for (const auto &f : r.folds)
        w.row({std::to_string(f.fold), std::to_string(f.n_test), format_double(f.error),
               format_double(f.majority_error)});
    w.row({"mean", "", format_double(r.mean_error), format_double(r.mean_majority_error)});
}

// ---------------------------------------------------------------------------
// diagnostics

struct Diagnosis {
    PfMean mean;
    std::vector<long> iterations;
    std::vector<double> distances;
    long reference_begin = 0;
    long reference_end = 0;
    std::optional<double> acceptance_rate;
    std::optional<double> mean_abs_energy_error;
};

/// pF mean of samples [begin, end) (default: latter half) and the distance
/// of every sample to it. Stiefel samples are read as their column spans.
inline Diagnosis diagnose(const SubspaceChain &chain, long begin = -1, long end = -1,
                          const std::vector<IterationRecord> *records = nullptr) {
    require(chain.size() > 0, "diagnose: empty chain");
    const long n = static_cast<long>(chain.size());
    if (begin < 0) begin = n / 2;
    if (end < 0) end = n;
    require(begin < end && end <= n, "diagnose: reference window outside the chain");
    Diagnosis d{pf_mean(chain.window(static_cast<std::size_t>(begin), static_cast<std::size_t>(end))), {}, {}, begin,
                end, std::nullopt, std::nullopt};
    d.distances = pf_trace(chain, d.mean.point);
    for (std::size_t i = 0; i < chain.size(); ++i) d.iterations.push_back(chain.iteration(i));
    if (records && !records->empty()) {
        SamplerRun tmp;
        tmp.records = *records;
        d.acceptance_rate = tmp.acceptance_rate();
        d.mean_abs_energy_error = tmp.mean_abs_energy_error();
    }
    return d;
}

inline SubspaceChain subspace_chain_from_block(const BlockTrace &b) {
    SubspaceChain c;
    for (std::size_t i = 0; i < b.values.size(); ++i) {
        const Matrix &u = b.values[i];
        // re-orthonormalize only if the file carries rounding beyond the point tolerance
        c.push_back(GrassmannPoint(orthonormality_residual(u) <= kOrthonormalTolerance ? u : orthonormalize(u)),
                    b.iterations[i]);
    }
    return c;
}

/// Fraction of samples from `after` on that lie within `radius` of the mean.
inline double fraction_within(const Diagnosis &d, double radius, long after = 0) {
    long in = 0, total = 0;
    for (std::size_t i = 0; i < d.distances.size(); ++i) {
        if (d.iterations[i] < after) continue;
        ++total;
        in += d.distances[i] <= radius ? 1 : 0;
    }
    return total ? static_cast<double>(in) / static_cast<double>(total) : 1.0;
}

} // namespace ghmc
