// Command-line surface for the compression laboratory: target generation,
// training runs, checkpoint probing, config sweeps, and plot regeneration.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "complab/config.hpp"
#include "complab/runner.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitAborted = 3;

int run_gen_target(int64_t vocab, int64_t len, const std::string& pattern_csv, uint64_t seed,
                   const std::string& out_path) {
    complab::TargetSpec spec;
    spec.vocab_size = vocab;
    spec.length = len;
    spec.seed = seed;
    spec.pattern.clear();
    std::istringstream ss(pattern_csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        spec.pattern.push_back(std::stod(item));
    }
    complab::TargetDistribution target = complab::TargetDistribution::build(spec);
    std::ofstream out(out_path);
    complab::require(out.good(), complab::Errc::io, "cannot write " + out_path);
    target.save(out);
    std::printf("target written to %s\n", out_path.c_str());
    std::printf("support size: %lld sequences\n", static_cast<long long>(target.support_count()));
    std::printf("analytic entropy: %.6f nats\n", target.analytic_entropy());
    return kExitOk;
}

int run_train(const std::string& config_path, int64_t epochs_override,
              const std::string& out_override) {
    complab::RunConfig cfg = complab::load_config(config_path);
    if (epochs_override > 0) {
        cfg.epochs = epochs_override;
        cfg.tail_epochs = std::min(cfg.tail_epochs, cfg.epochs);
    }
    if (!out_override.empty()) {
        cfg.output_dir = out_override;
    }
    cfg.validate();
    complab::RunSummary s = complab::run_experiment(cfg);
    std::printf("run directory: %s\n", cfg.output_dir.c_str());
    std::printf("epochs completed: %lld\n", static_cast<long long>(s.epochs_completed));
    std::printf("empirical target entropy: %.6f nats\n", s.empirical_entropy);
    if (!s.aborted && s.epochs_completed >= cfg.tail_epochs) {
        std::printf("tail entropy: %.6f  tail KL: %.6f  tail loss: %.6f\n", s.tail_entropy,
                    s.tail_kl, s.tail_loss);
    }
    std::printf("spikes: %zu  jumps: %zu  dead: %.4f\n", s.spikes.spikes.size(),
                s.spikes.jumps.size(), s.final_dead);
    if (s.aborted) {
        std::fprintf(stderr, "training aborted; partial metrics flushed\n");
        return kExitAborted;
    }
    return kExitOk;
}

int run_probe(const std::string& run_dir, const std::string& checkpoint) {
    namespace fs = std::filesystem;
    complab::RunConfig cfg = complab::load_config((fs::path(run_dir) / "config.cfg").string());
    auto model = complab::build_model(cfg.resolved_model());
    const std::string ckpt =
        checkpoint.empty() ? (fs::path(run_dir) / "model.ckpt").string() : checkpoint;
    {
        std::ifstream in(ckpt, std::ios::binary);
        complab::require(in.good(), complab::Errc::io, "cannot open checkpoint: " + ckpt);
        model->load_checkpoint(in);
    }
    model->set_mode(complab::Mode::eval);

    complab::CensusResult census = complab::neuron_census(*model);
    const double dead = complab::dead_proportion(census.ledger);
    std::printf("sequences traversed: %lld\n", static_cast<long long>(census.sequences));
    std::printf("N_max: %lld token positions\n", static_cast<long long>(census.ledger.n_max));
    std::printf("FFN neurons: %lld  dead: %.4f  mean active fraction: %.4f\n",
                static_cast<long long>(census.ledger.total_neurons()), dead,
                census.mean_active_fraction);

    nlohmann::json hist;
    nlohmann::json activation;
    activation["n_max"] = census.ledger.n_max;
    activation["total_neurons"] = census.ledger.total_neurons();
    activation["dead_proportion"] = dead;
    activation["mean_active_fraction"] = census.mean_active_fraction;
    complab::Histogram pooled = complab::activation_histogram(census.ledger, 20);
    activation["pooled"] = {{"bin_edges", pooled.bin_edges}, {"mass", pooled.mass}};
    nlohmann::json layers = nlohmann::json::array();
    for (size_t lp = 0; lp < census.ledger.layer_ids.size(); ++lp) {
        complab::ActivationLedger one;
        one.layer_ids = {census.ledger.layer_ids[lp]};
        one.neurons_per_layer = census.ledger.neurons_per_layer;
        one.n_max = census.ledger.n_max;
        const auto counts = census.ledger.layer_counts(lp);
        one.counts.assign(counts.begin(), counts.end());
        complab::Histogram h = complab::activation_histogram(one, 20);
        layers.push_back({{"layer", census.ledger.layer_ids[lp]},
                          {"bin_edges", h.bin_edges},
                          {"mass", h.mass},
                          {"dead_proportion", complab::dead_proportion(one)}});
    }
    activation["per_layer"] = layers;
    hist["activation"] = activation;

    if (cfg.model.routed) {
        complab::RouterStats rs = complab::router_census(*model);
        complab::Histogram all = complab::weight_histogram(rs.all_weights, 30);
        complab::Histogram res = complab::weight_histogram(rs.residual_weights, 30);
        hist["router"] = {{"paths", rs.paths},
                          {"samples", rs.all_weights.size()},
                          {"all_paths", {{"bin_edges", all.bin_edges}, {"mass", all.mass}}},
                          {"residual", {{"bin_edges", res.bin_edges}, {"mass", res.mass}}}};
        std::printf("router samples: %zu (paths: %lld)\n", rs.all_weights.size(),
                    static_cast<long long>(rs.paths));
    }
    std::ofstream out(fs::path(run_dir) / "histograms.json");
    out << hist.dump(2) << "\n";
    std::printf("histograms.json updated in %s\n", run_dir.c_str());
    return kExitOk;
}

int run_sweep(const std::vector<std::string>& config_paths, const std::string& out_dir, int jobs) {
    namespace fs = std::filesystem;
    std::vector<complab::RunConfig> configs;
    configs.reserve(config_paths.size());
    for (const std::string& path : config_paths) {
        configs.push_back(complab::load_config(path));
    }
    std::vector<complab::SweepRow> rows = complab::run_sweep(configs, jobs);
    fs::create_directories(out_dir);
    {
        std::ofstream out(fs::path(out_dir) / "sweep.csv");
        complab::write_sweep_csv(rows, out);
    }
    std::vector<double> kl, ce, loss;
    for (const complab::SweepRow& r : rows) {
        kl.push_back(r.tail_kl);
        ce.push_back(r.tail_cross_entropy);
        loss.push_back(r.tail_loss);
    }
    std::printf("sweep rows: %zu -> %s/sweep.csv\n", rows.size(), out_dir.c_str());
    if (rows.size() >= 2) {
        std::printf("pearson(tail KL, tail cross-entropy): %.4f\n", complab::pearson(kl, ce));
        std::printf("pearson(tail KL, tail loss): %.4f\n", complab::pearson(kl, loss));
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"complab: controlled compression experiments on tiny sequence models"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-target", "generate and store a target distribution");
    int64_t vocab = 5, len = 5;
    uint64_t seed = 0;
    std::string pattern = "0.8,0.2", out_path = "target.txt";
    gen->add_option("--vocab", vocab, "vocabulary size (excluding '#')");
    gen->add_option("--len", len, "sequence length");
    gen->add_option("--pattern", pattern, "comma-separated transition probabilities");
    gen->add_option("--seed", seed, "generator seed");
    gen->add_option("--out", out_path, "output file");

    auto* train = app.add_subcommand("train", "run one training experiment");
    std::string config_path;
    int64_t epochs_override = 0;
    std::string out_override;
    train->add_option("--config", config_path, "run configuration file")->required();
    train->add_option("--epochs", epochs_override, "override training.epochs (smoke runs)");
    train->add_option("--out", out_override, "override output.dir");

    auto* probe = app.add_subcommand("probe", "census and router stats on a checkpoint");
    std::string probe_dir, probe_ckpt;
    probe->add_option("--run", probe_dir, "run directory holding config.cfg and model.ckpt")
        ->required();
    probe->add_option("--checkpoint", probe_ckpt, "explicit checkpoint path");

    auto* sweep = app.add_subcommand("sweep", "run a list of configs and tabulate tail averages");
    std::vector<std::string> sweep_configs;
    std::string sweep_out = "sweep";
    int jobs = 1;
    sweep->add_option("configs", sweep_configs, "config files")->required();
    sweep->add_option("--out", sweep_out, "output directory for sweep.csv");
    sweep->add_option("--jobs", jobs, "parallel runs");

    auto* report = app.add_subcommand("report", "regenerate plots from stored metrics");
    std::string report_dir;
    report->add_option("--run", report_dir, "run directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            return run_gen_target(vocab, len, pattern, seed, out_path);
        }
        if (train->parsed()) {
            return run_train(config_path, epochs_override, out_override);
        }
        if (probe->parsed()) {
            return run_probe(probe_dir, probe_ckpt);
        }
        if (sweep->parsed()) {
            return run_sweep(sweep_configs, sweep_out, jobs);
        }
        if (report->parsed()) {
            complab::regenerate_plots(report_dir);
            std::printf("plots regenerated in %s/plots\n", report_dir.c_str());
            return kExitOk;
        }
    } catch (const complab::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        switch (e.code()) {
            case complab::Errc::config:
            case complab::Errc::strict_parse:
            case complab::Errc::spec:
            case complab::Errc::unsupported_variant:
                return kExitConfig;
            case complab::Errc::poisoned_state:
                return kExitAborted;
            default:
                return kExitError;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitError;
    }
    return kExitError;
}
