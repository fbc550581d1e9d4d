#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ghmc/ghmc.hpp"

using namespace ghmc;

namespace {

struct CommonOptions {
    std::string config_file;
    std::vector<std::string> overrides;
    std::optional<long> seed;
    std::optional<long> samples;
    std::optional<long> leapfrog;
    std::optional<double> step_size;
    std::optional<long> adapt;
    std::optional<long> k;
    std::string output;
};

void add_common(CLI::App *cmd, CommonOptions &o) {
    cmd->add_option("--config", o.config_file, "key = value configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--set", o.overrides, "override one setting, as key=value (repeatable)");
    cmd->add_option("--seed", o.seed, "random seed");
    cmd->add_option("--samples", o.samples, "number of HMC samples");
    cmd->add_option("--leapfrog", o.leapfrog, "leapfrog steps per trajectory");
    cmd->add_option("--step-size", o.step_size, "initial step size");
    cmd->add_option("--adapt", o.adapt, "step-size adaptation iterations (0 disables)");
    cmd->add_option("-k,--latent-dim", o.k, "number of latent dimensions");
    cmd->add_option("-o,--output", o.output, "output directory");
}

ExperimentConfig build_config(const std::string &experiment, const CommonOptions &o) {
    ExperimentConfig c = ExperimentConfig::defaults_for(experiment);
    if (!o.config_file.empty()) c.load_file(o.config_file);
    for (const auto &kv : o.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        c.set(trim(kv.substr(0, eq)), kv.substr(eq + 1));
    }
    if (o.seed) c.set("seed", std::to_string(*o.seed));
    if (o.samples) c.set("num_samples", std::to_string(*o.samples));
    if (o.leapfrog) c.set("leapfrog_steps", std::to_string(*o.leapfrog));
    if (o.step_size) c.hmc.step_size = *o.step_size;
    if (o.adapt) c.set("adapt_iterations", std::to_string(*o.adapt));
    if (o.k) c.set("k", std::to_string(*o.k));
    if (!o.output.empty()) c.output = o.output;
    c.experiment = experiment;
    c.validate();
    return c;
}

DataKind parse_kind(const std::string &s) {
    if (s == "continuous") return DataKind::Continuous;
    if (s == "binary") return DataKind::Binary;
    if (s == "count") return DataKind::Count;
    throw ConfigError("unknown data kind '" + s + "'");
}

DataKind kind_for(ModelTag tag) {
    switch (tag) {
    case ModelTag::EpcaBernoulli: return DataKind::Binary;
    case ModelTag::JointPoissonLogistic: return DataKind::Count;
    default: return DataKind::Continuous;
    }
}

void warn_all(const std::vector<std::string> &warnings) {
    for (const auto &w : warnings) std::cerr << "warning: " << w << "\n";
}

std::string require_input(const ExperimentConfig &c) {
    if (c.input.empty()) throw ConfigError("an input dataset is required (--input or input = ...)");
    return c.input;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Geodesic HMC on Stiefel and Grassmann manifolds: Bayesian dimensionality-reduction experiments"};
    app.set_version_flag("--version", version_string());
    app.require_subcommand(1);

    CommonOptions common;
    std::string input, truth, baseline, kind_name, chain_file, diag_file;
    long ref_begin = -1, ref_end = -1;

    auto *gen = app.add_subcommand("gen-bits", "generate corrupted, half-missing bit vectors and their originals");
    add_common(gen, common);

    auto *fit = app.add_subcommand("fit", "sample a model posterior and write chain CSVs");
    add_common(fit, common);
    fit->add_option("-i,--input", input, "dataset CSV")->check(CLI::ExistingFile);
    fit->add_option("--kind", kind_name, "data kind: continuous, binary or count (default from the model)");

    auto *rec = app.add_subcommand("reconstruct", "bit-vector reconstruction with error traces");
    add_common(rec, common);
    rec->add_option("-i,--input", input, "masked binary dataset CSV (generated from the seed when omitted)")
        ->check(CLI::ExistingFile);
    rec->add_option("--truth", truth, "uncorrupted binary CSV matching --input")->check(CLI::ExistingFile);

    auto *loo = app.add_subcommand("loo", "leave-one-out conditional-mean prediction");
    add_common(loo, common);
    loo->add_option("-i,--input", input, "continuous dataset CSV")->check(CLI::ExistingFile);
    loo->add_option("--baseline", baseline, "baseline moments CSV (mean row, then covariance rows)")
        ->check(CLI::ExistingFile);

    auto *imp = app.add_subcommand("impute", "missing-data imputation sweep");
    add_common(imp, common);
    imp->add_option("-i,--input", input, "continuous dataset CSV")->check(CLI::ExistingFile);

    auto *cv = app.add_subcommand("cv", "cross-validated label prediction with the joint count model");
    add_common(cv, common);
    cv->add_option("-i,--input", input, "count dataset CSV with a label column")->check(CLI::ExistingFile);

    auto *diag = app.add_subcommand("diagnose", "pF-mean trace of a sampled U chain");
    add_common(diag, common);
    diag->add_option("--chain", chain_file, "U block chain CSV")->required()->check(CLI::ExistingFile);
    diag->add_option("--diagnostics", diag_file, "diagnostics CSV for acceptance and energy summaries")
        ->check(CLI::ExistingFile);
    diag->add_option("--begin", ref_begin, "first sample of the reference window (default: half the chain)");
    diag->add_option("--end", ref_end, "one past the last reference sample (default: chain length)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) {
            ExperimentConfig c = build_config("bits", common);
            ensure_dir(c.output);
            const BitData b = gen_bitvectors(c.hmc.seed, 3, 16, c.n / 3, c.corruption_rate,
                                             std::llround(c.missing_fraction * static_cast<double>(c.n / 3 * 3 * 16)));
            const std::string t = out_path(c.output, "bits_truth.csv");
            const std::string d = out_path(c.output, "bits_data.csv");
            write_dataset_csv(t, MaskedDataMatrix::fully_observed(b.truth, DataKind::Binary));
            write_dataset_csv(d, b.data);
            write_manifest(c.output, c, {t, d});
            std::cout << "wrote " << t << " and " << d << "\n";
        } else if (fit->parsed()) {
            ExperimentConfig c = build_config("fit", common);
            if (!input.empty()) c.input = input;
            const ModelTag tag = parse_model_tag(c.model);
            const DataKind kind = kind_name.empty() ? kind_for(tag) : parse_kind(kind_name);
            const Dataset ds = read_dataset_csv(require_input(c), kind);
            const FitResult r = run_fit(ds.data, c);
            warn_all(r.run.warnings);
            std::cout << "step_size " << format_double(r.run.step_size) << " acceptance "
                      << format_double(r.run.acceptance_rate()) << "\n";
        } else if (rec->parsed()) {
            ExperimentConfig c = build_config("bits", common);
            if (!input.empty()) c.input = input;
            if (!truth.empty()) c.truth = truth;
            BitData b;
            if (c.input.empty()) {
                b = gen_bitvectors(c.hmc.seed);
            } else {
                if (c.truth.empty()) throw ConfigError("reconstruct: --truth is required with --input");
                b.data = read_dataset_csv(c.input, DataKind::Binary).data;
                b.truth = read_dataset_csv(c.truth, DataKind::Binary).data.values;
            }
            const BitResult r = run_bit_experiment(b.data, b.truth, c);
            warn_all(r.warnings);
            std::cout << "window_error " << na_or(r.window_error) << " full_chain_error " << na_or(r.full_chain_error)
                      << " acceptance " << format_double(r.run.acceptance_rate()) << "\n";
        } else if (loo->parsed()) {
            ExperimentConfig c = build_config("loo", common);
            if (!input.empty()) c.input = input;
            if (!baseline.empty()) c.baseline = baseline;
            const Dataset ds = read_dataset_csv(require_input(c), DataKind::Continuous);
            std::optional<MomentsFn> base;
            if (!c.baseline.empty()) base = fixed_moments(read_moments_csv(c.baseline));
            const LooResult r = run_loo_prediction(ds.data, c, bayes_fa_moments(c), base ? &*base : nullptr);
            warn_all(r.warnings);
            ensure_dir(c.output);
            const std::string f = out_path(c.output, "loo_errors.csv");
            write_loo_csv(f, r);
            write_manifest(c.output, c, {f});
            std::cout << "wrote " << f << "\n";
        } else if (imp->parsed()) {
            ExperimentConfig c = build_config("impute", common);
            if (!input.empty()) c.input = input;
            const Dataset ds = read_dataset_csv(require_input(c), DataKind::Continuous);
            const ImputationResult r = run_imputation_sweep(ds.data, c);
            warn_all(r.warnings);
            ensure_dir(c.output);
            const std::string f = out_path(c.output, "imputation.csv");
            write_imputation_csv(f, r);
            write_manifest(c.output, c, {f});
            std::cout << "wrote " << f << "\n";
        } else if (cv->parsed()) {
            ExperimentConfig c = build_config("cv", common);
            if (!input.empty()) c.input = input;
            const Dataset ds = read_dataset_csv(require_input(c), DataKind::Count);
            const CvResult r = run_joint_cv(ds.data, c);
            warn_all(r.warnings);
            ensure_dir(c.output);
            const std::string f = out_path(c.output, "cv_errors.csv");
            write_cv_csv(f, r);
            write_manifest(c.output, c, {f});
            std::cout << "mean_error " << format_double(r.mean_error) << " majority_error "
                      << format_double(r.mean_majority_error) << "\n";
        } else if (diag->parsed()) {
            ExperimentConfig c = build_config("diagnose", common);
            std::optional<std::vector<IterationRecord>> records;
            if (!diag_file.empty()) records = read_diagnostics_csv(diag_file);
            const Diagnosis d =
                diagnose(subspace_chain_from_block(read_block_csv(chain_file)), ref_begin, ref_end,
                         records ? &*records : nullptr);
            if (d.mean.ill_defined) std::cerr << "warning: pF mean ill-defined (eigengap below 1e-12)\n";
            ensure_dir(c.output);
            const std::string f = out_path(c.output, "pf_trace.csv");
            write_trace_csv(f, d.iterations, d.distances);
            const std::string m = out_path(c.output, "pf_mean.csv");
            write_matrix_csv(m, d.mean.point.matrix());
            std::vector<std::pair<std::string, std::string>> summary{
                {"reference_begin", std::to_string(d.reference_begin)},
                {"reference_end", std::to_string(d.reference_end)},
                {"eigengap", format_double(d.mean.eigengap)},
                {"max_distance_after_reference",
                 format_double(*std::max_element(d.distances.begin() + d.reference_begin, d.distances.end()))},
                {"acceptance_rate", na_or(d.acceptance_rate)},
                {"mean_abs_energy_error", na_or(d.mean_abs_energy_error)}};
            write_summary(out_path(c.output, "diagnose_summary.txt"), summary);
            write_manifest(c.output, c, {f, m});
            for (const auto &[k, v] : summary) std::cout << k << " " << v << "\n";
        }
    } catch (const NumericalError &e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
