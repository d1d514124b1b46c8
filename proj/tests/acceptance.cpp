// Acceptance suite: runs the ten acceptance criteria end to end and prints
// one PASS/FAIL line per criterion. Training runs land in --runs-dir and are
// reused on rerun when the stored config matches, so an interrupted suite
// resumes instead of recomputing.
//
// Usage: acceptance [--runs-dir DIR] [--jobs N] [--criterion K]

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdarg>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "complab/grad_check.hpp"
#include "complab/runner.hpp"
#include "test_support.hpp"

using namespace complab;
namespace fs = std::filesystem;

namespace {

struct CriterionResult {
    int id = 0;
    bool pass = false;
    std::string detail;
};

struct Options {
    std::string runs_dir = "acceptance_runs";
    int jobs = 2;
    int only = -1;  // -1: all criteria
};

constexpr uint64_t kTargetSeed = 21;
constexpr uint64_t kSampleSeed = 11;
const uint64_t kModelSeeds[3] = {1, 2, 3};
const uint64_t kShuffleSeeds[3] = {101, 202, 303};

Options parse_args(int argc, char** argv) {
    Options o;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        auto next = [&]() -> std::string {
            if (i + 1 >= argc) {
                std::fprintf(stderr, "missing value for %s\n", a.c_str());
                std::exit(2);
            }
            return argv[++i];
        };
        if (a == "--runs-dir") {
            o.runs_dir = next();
        } else if (a == "--jobs") {
            o.jobs = std::stoi(next());
        } else if (a == "--criterion") {
            o.only = std::stoi(next());
        } else {
            std::fprintf(stderr, "unknown argument: %s\n", a.c_str());
            std::exit(2);
        }
    }
    return o;
}

RunConfig base_config(const Options& o, const std::string& name) {
    RunConfig c;
    c.target = TargetSpec{5, 5, {0.8, 0.2}, kTargetSeed};
    c.sample_count = 65536;
    c.sample_seed = kSampleSeed;
    c.epochs = 100;
    c.batch_size = 512;
    c.output_dir = (fs::path(o.runs_dir) / name).string();
    return c;
}

RunConfig tf_config(const Options& o, const std::string& name, int64_t d, int64_t layers,
                    Variant variant, bool routed, const std::string& preset, int seed_idx) {
    RunConfig c = base_config(o, name);
    c.model.family = Family::transformer;
    c.model.d = d;
    c.model.layers = layers;
    c.model.heads = 4;
    c.model.variant = variant;
    c.model.routed = routed;
    c.model.dropout_rate = 0.1;
    c.model.seed = kModelSeeds[seed_idx];
    c.shuffle_seed = kShuffleSeeds[seed_idx];
    c.optimizer_preset = preset;
    c.optimizer = OptimizerConfig::preset(preset);
    return c;
}

RunConfig rnn_config(const Options& o, const std::string& name, Family family, int64_t d,
                     int seed_idx) {
    RunConfig c = base_config(o, name);
    c.model.family = family;
    c.model.d = d;
    c.model.layers = 1;
    c.model.dropout_rate = 0.1;
    c.model.seed = kModelSeeds[seed_idx];
    c.shuffle_seed = kShuffleSeeds[seed_idx];
    return c;
}

// rough relative cost for longest-first scheduling
double run_cost(const RunConfig& c) {
    const double d = static_cast<double>(c.model.d);
    double per_token = 0.0;
    if (c.model.family == Family::transformer) {
        for (int64_t l = 0; l < c.model.layers; ++l) {
            const bool attn = c.model.variant != Variant::ffn_main || l == 0;
            bool ffn = true;
            if (c.model.variant == Variant::attention_only) {
                ffn = false;
            } else if (c.model.variant == Variant::attention_main) {
                ffn = l == c.model.layers - 1;
            }
            per_token += (attn ? 4 * d * d : 0) + (ffn ? 8 * d * d : 0);
        }
        if (c.model.routed) {
            per_token *= 1.35;
        }
    } else {
        const double gates = c.model.family == Family::gru ? 3 : 4;
        per_token = gates * (d * 4 * d + 16 * d * d);
    }
    return per_token * static_cast<double>(c.epochs) * static_cast<double>(c.sample_count);
}

class RunPool {
public:
    RunPool(const Options& o) : opts_(o) {}

    void add(const RunConfig& cfg) {
        const std::string name = fs::path(cfg.output_dir).filename().string();
        if (!plan_.count(name)) {
            plan_.emplace(name, cfg);
        }
    }

    void execute() {
        std::vector<const RunConfig*> order;
        for (auto& [name, cfg] : plan_) {
            order.push_back(&cfg);
        }
        std::sort(order.begin(), order.end(), [](const RunConfig* a, const RunConfig* b) {
            const double ca = run_cost(*a), cb = run_cost(*b);
            return ca != cb ? ca > cb : a->output_dir < b->output_dir;
        });
        std::atomic<size_t> next{0};
        const auto t0 = std::chrono::steady_clock::now();
        auto worker = [&]() {
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= order.size()) {
                    return;
                }
                const RunConfig& cfg = *order[i];
                const std::string name = fs::path(cfg.output_dir).filename().string();
                const auto s0 = std::chrono::steady_clock::now();
                RunArtifacts a = ensure_run(cfg);
                const double mins =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - s0).count() /
                    60.0;
                const double total_mins =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() /
                    60.0;
                std::printf("[run %zu/%zu] %-22s %6.1f min (elapsed %6.1f min)\n", i + 1,
                            order.size(), name.c_str(), mins, total_mins);
                std::fflush(stdout);
                std::lock_guard<std::mutex> lk(mu_);
                done_.emplace(name, std::move(a));
            }
        };
        std::vector<std::future<void>> pool;
        for (int i = 0; i < std::max(1, opts_.jobs); ++i) {
            pool.push_back(std::async(std::launch::async, worker));
        }
        for (auto& f : pool) {
            f.get();
        }
    }

    const RunArtifacts& get(const std::string& name) const { return done_.at(name); }

private:
    Options opts_;
    std::map<std::string, RunConfig> plan_;
    std::map<std::string, RunArtifacts> done_;
    std::mutex mu_;
};

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof(buf), format, args);
    va_end(args);
    return buf;
}

// ---------------------------------------------------------------------------
// criterion 1: gradient correctness, under one minute
// ---------------------------------------------------------------------------
CriterionResult criterion1() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst_primitive = 0.0;
    for (PrimitiveKind kind : all_primitive_kinds()) {
        worst_primitive = std::max(worst_primitive, grad_check(kind, 20, 1234));
    }

    ModelConfig mc;
    mc.family = Family::transformer;
    mc.d = 8;
    mc.layers = 2;
    mc.heads = 4;
    mc.dropout_rate = 0.0;
    mc.vocab_size = 5;
    mc.length = 5;
    mc.seed = 42;
    auto model = build_model(mc);
    TokenBatch batch;
    batch.rows = 3;
    batch.cols = 6;
    batch.tokens = {5, 0, 1, 2, 3, 4, 5, 4, 3, 2, 1, 0, 5, 1, 1, 2, 2, 3};
    Tape tape;
    Tensor loss = model->forward_train(batch, tape);
    tape.backward(loss);
    std::vector<const Tensor*> grads;
    for (Parameter& p : model->parameters()) {
        grads.push_back(tape.grad(p.value));
    }
    auto loss_value = [&]() {
        Tape t;
        return model->forward_train(batch, t).item();
    };
    Rng pick(7);
    double worst_e2e = 0.0;
    for (int probe = 0; probe < 50; ++probe) {
        auto& params = model->parameters();
        const size_t pi = pick.below(params.size());
        const auto e = static_cast<int64_t>(pick.below(static_cast<uint64_t>(params[pi].value.size())));
        const double h = 1e-6;
        double* slot = params[pi].value.data() + e;
        const double saved = *slot;
        *slot = saved + h;
        const double up = loss_value();
        *slot = saved - h;
        const double down = loss_value();
        *slot = saved;
        const double fd = (up - down) / (2 * h);
        const double a = grads[pi]->data()[e];
        worst_e2e = std::max(worst_e2e, std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)}));
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    CriterionResult r{1, worst_primitive < 1e-4 && worst_e2e < 1e-3 && secs < 60.0, ""};
    r.detail = fmt("primitive max rel err %.3g (< 1e-4), end-to-end %.3g (< 1e-3), %.1f s (< 60 s)",
                   worst_primitive, worst_e2e, secs);
    return r;
}

// ---------------------------------------------------------------------------
// criterion 2: exactness identities on 50 random small models
// ---------------------------------------------------------------------------
CriterionResult criterion2() {
    double worst_mass = 0.0, worst_identity = 0.0, worst_split = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const int64_t vocab = 2 + trial % 4;    // 2..5
        const int64_t length = 2 + (trial / 4) % 4;  // 2..5
        FunctionModel m = testing::random_row_model(vocab, length, 1000 + trial);
        const SequenceCodec codec{vocab, length};
        testing::DenseRandom target = testing::DenseRandom::make(codec, 500 + trial);

        const CachedNextTokenModel cache = CachedNextTokenModel::from(m);
        std::vector<int32_t> seq(static_cast<size_t>(length));
        double mass = 0.0;
        for (uint64_t id = 0; id < codec.total(); ++id) {
            codec.decode(id, seq);
            mass += cache.joint(seq);
        }
        worst_mass = std::max(worst_mass, std::abs(mass - 1.0));

        const double h_target = target.entropy();
        const KlResult kl = kl_divergence(target, m);
        const KlResult ce = full_cross_entropy(target, m);
        worst_identity = std::max(worst_identity, std::abs(ce.nats - (h_target + kl.nats)));

        const SplitEntropy split = split_entropy(m, target);
        worst_split = std::max(
            worst_split, std::abs(split.sparse_part + split.nonsparse_part - model_entropy(m)));
    }

    // |V|=2, n=2 hand-rolled 4-term sum, exact agreement
    FunctionModel m = testing::random_row_model(2, 2, 77);
    std::vector<double> r_root(2), r0(2), r1(2);
    m.next_dist(std::vector<int32_t>{}, r_root);
    m.next_dist(std::vector<int32_t>{0}, r0);
    m.next_dist(std::vector<int32_t>{1}, r1);
    const double q[4] = {r_root[0] * r0[0], r_root[0] * r0[1], r_root[1] * r1[0],
                         r_root[1] * r1[1]};
    double hand = 0.0;
    for (double x : q) {
        hand -= x * std::log(x);
    }
    const bool exact = model_entropy(m) == hand;

    CriterionResult r{2,
                      worst_mass < 1e-9 && worst_identity < 1e-9 && worst_split < 1e-9 && exact,
                      ""};
    r.detail = fmt("sum-to-1 err %.3g, H+KL=CE err %.3g, split err %.3g (all < 1e-9), "
                   "4-term oracle %s",
                   worst_mass, worst_identity, worst_split, exact ? "exact" : "MISMATCH");
    return r;
}

// ---------------------------------------------------------------------------
// criterion 3: target entropy oracle
// ---------------------------------------------------------------------------
CriterionResult criterion3() {
    struct Case {
        std::vector<double> pattern;
        double per_step;
    };
    const Case cases[] = {{{0.8, 0.2}, 0.500402}, {{0.9, 0.1}, 0.325083},
                          {{0.6, 0.3, 0.1}, 0.897946}};
    double worst_closed = 0.0, worst_enum = 0.0, worst_sample = 0.0;
    std::string entropies;
    for (const Case& c : cases) {
        worst_closed = std::max(worst_closed, std::abs(entropy_nats(c.pattern) - c.per_step));
        TargetSpec spec{5, 5, c.pattern, kTargetSeed};
        TargetDistribution t = TargetDistribution::build(spec);
        double brute = 0.0;
        for (uint64_t id = 0; id < t.codec().total(); ++id) {
            const double p = t.probability(id);
            if (p > 0.0) {
                brute -= p * std::log(p);
            }
        }
        worst_enum = std::max(worst_enum, std::abs(brute - t.analytic_entropy()));

        Dataset d = sample_dataset(t, 65536, kSampleSeed);
        EmpiricalDistribution emp = EmpiricalDistribution::from(d);
        worst_sample = std::max(worst_sample, std::abs(emp.entropy() - t.analytic_entropy()));
        entropies += fmt(" %.3f", t.analytic_entropy());
    }
    CriterionResult r{3, worst_closed < 5e-7 && worst_enum < 1e-12 && worst_sample < 0.02, ""};
    r.detail = fmt("closed-form err %.2g, enumeration err %.2g (< 1e-12), sampled-vs-analytic "
                   "%.4f (< 0.02); generated entropies:%s",
                   worst_closed, worst_enum, worst_sample, entropies.c_str());
    return r;
}

// ---------------------------------------------------------------------------
// criteria 4-9 over full-scale runs
// ---------------------------------------------------------------------------
CriterionResult criterion4(const RunPool& pool) {
    int hits = 0;
    std::string detail;
    for (int s = 0; s < 3; ++s) {
        const RunArtifacts& tf = pool.get("tf_d64_L5_s" + std::to_string(s + 1));
        const RunArtifacts& lstm = pool.get("lstm_d64_s" + std::to_string(s + 1));
        const double h = tf.summary.empirical_entropy;
        const bool tf_low = tf.summary.tail_entropy <= h - 0.05;
        const bool lstm_near = std::abs(lstm.summary.tail_entropy - h) <= 0.15;
        hits += (tf_low && lstm_near) ? 1 : 0;
        detail += fmt(" s%d[tf %.3f%s lstm %.3f%s H %.3f]", s + 1, tf.summary.tail_entropy,
                      tf_low ? "*" : "", lstm.summary.tail_entropy, lstm_near ? "*" : "", h);
    }
    CriterionResult r{4, hits >= 2, ""};
    r.detail = fmt("%d/3 seeds:%s", hits, detail.c_str());
    return r;
}

CriterionResult criterion5(const RunPool& pool) {
    int hits = 0;
    std::string detail;
    for (int s = 0; s < 3; ++s) {
        const std::string suffix = "_s" + std::to_string(s + 1);
        const double ao = pool.get("ao_d64" + suffix).summary.tail_entropy;
        const double am = pool.get("am_d64" + suffix).summary.tail_entropy;
        const double fm = pool.get("fm_d64" + suffix).summary.tail_entropy;
        const double h = pool.get("ao_d64" + suffix).summary.empirical_entropy;
        const bool ok = ao >= am && am >= fm && ao >= h && fm <= h;
        hits += ok ? 1 : 0;
        detail += fmt(" s%d[ao %.3f am %.3f fm %.3f H %.3f%s]", s + 1, ao, am, fm, h,
                      ok ? " *" : "");
    }
    CriterionResult r{5, hits >= 2, ""};
    r.detail = fmt("%d/3 seeds:%s", hits, detail.c_str());
    return r;
}

double residual_top_bin(const RunArtifacts& a) {
    const auto& mass = a.histograms.at("router").at("residual").at("mass");
    return mass.back().get<double>();
}

CriterionResult criterion6(const RunPool& pool) {
    int hits = 0;
    std::string detail;
    for (int s = 0; s < 3; ++s) {
        const std::string suffix = "_s" + std::to_string(s + 1);
        const double big = residual_top_bin(pool.get("routed_d64" + suffix));
        const double small = residual_top_bin(pool.get("routed_d8" + suffix));
        const bool ok = big >= 0.15 && small <= 0.05;
        hits += ok ? 1 : 0;
        detail += fmt(" s%d[d64 %.3f d8 %.3f%s]", s + 1, big, small, ok ? " *" : "");
    }
    CriterionResult r{6, hits >= 2, ""};
    r.detail = fmt("top-bin residual mass, %d/3 seeds:%s", hits, detail.c_str());
    return r;
}

CriterionResult criterion7(const RunPool& pool) {
    int hits = 0;
    std::string detail;
    for (int s = 0; s < 3; ++s) {
        const std::string suffix = "_s" + std::to_string(s + 1);
        const RunArtifacts& big = pool.get("adam_d64_L8" + suffix);
        const RunArtifacts& small = pool.get("tf_d8_L8" + suffix);
        const bool ok = big.summary.final_dead >= 0.05 &&
                        big.summary.final_active_fraction <= 0.25 &&
                        small.summary.final_active_fraction >= 0.35;
        hits += ok ? 1 : 0;
        detail += fmt(" s%d[d64 dead %.3f act %.3f; d8 act %.3f%s]", s + 1,
                      big.summary.final_dead, big.summary.final_active_fraction,
                      small.summary.final_active_fraction, ok ? " *" : "");
    }
    CriterionResult r{7, hits >= 2, ""};
    r.detail = fmt("%d/3 seeds:%s", hits, detail.c_str());
    return r;
}

CriterionResult criterion8(const RunPool& pool) {
    int hits = 0;
    std::string detail;
    for (int s = 0; s < 3; ++s) {
        const std::string suffix = "_s" + std::to_string(s + 1);
        const RunArtifacts& sgd = pool.get("sgd_d64_L8" + suffix);
        const RunArtifacts& adam = pool.get("adam_d64_L8" + suffix);
        const bool sgd_quiet =
            sgd.summary.spikes.spikes.empty() && sgd.summary.spikes.jumps.empty();
        bool adam_paired = !adam.summary.spikes.spikes.empty();
        for (int64_t p : adam.summary.spikes.paired_spike) {
            adam_paired = adam_paired && p >= 0;
        }
        const bool ok = sgd_quiet && adam_paired;
        hits += ok ? 1 : 0;
        detail += fmt(" s%d[sgd %zu/%zu adam %zu spikes %zu jumps%s]", s + 1,
                      sgd.summary.spikes.spikes.size(), sgd.summary.spikes.jumps.size(),
                      adam.summary.spikes.spikes.size(), adam.summary.spikes.jumps.size(),
                      ok ? " *" : "");
    }
    const RunArtifacts& rms = pool.get("rmsprop_d64_L8_s1");
    const RunArtifacts& a2 = pool.get("adam2nd_d64_L8_s1");
    CriterionResult r{8, hits >= 2, ""};
    r.detail = fmt("%d/3 seeds:%s | reported: rmsprop %zu spikes/%zu jumps, adam_2nd %zu/%zu",
                   hits, detail.c_str(), rms.summary.spikes.spikes.size(),
                   rms.summary.spikes.jumps.size(), a2.summary.spikes.spikes.size(),
                   a2.summary.spikes.jumps.size());
    return r;
}

CriterionResult criterion9(const RunPool& pool, const std::vector<std::string>& sweep_names) {
    std::vector<double> kl, ce, loss;
    for (const std::string& name : sweep_names) {
        const RunArtifacts& a = pool.get(name);
        kl.push_back(a.summary.tail_kl);
        ce.push_back(a.summary.tail_cross_entropy);
        loss.push_back(a.summary.tail_loss);
    }
    const double r_ce = pearson(kl, ce);
    const double r_loss = pearson(kl, loss);
    CriterionResult r{9, r_ce >= 0.9, ""};
    r.detail = fmt("%zu configs, pearson(KL, seq cross-entropy) = %.4f (>= 0.9); "
                   "pearson(KL, token loss) = %.4f",
                   sweep_names.size(), r_ce, r_loss);
    return r;
}

CriterionResult criterion10(const Options& o) {
    RunConfig a = base_config(o, "determinism_a");
    a.model.family = Family::transformer;
    a.model.d = 8;
    a.model.layers = 5;
    a.model.seed = 1;
    a.shuffle_seed = 101;
    RunConfig b = a;
    b.output_dir = (fs::path(o.runs_dir) / "determinism_b").string();

    fs::remove_all(a.output_dir);
    fs::remove_all(b.output_dir);
    run_experiment(a);
    run_experiment(b);

    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    const std::string ma = slurp(fs::path(a.output_dir) / "metrics.csv");
    const std::string mb = slurp(fs::path(b.output_dir) / "metrics.csv");
    CriterionResult r{10, !ma.empty() && ma == mb, ""};
    r.detail = fmt("two fresh paper-default runs (d=8, L=5): metrics.csv %s (%zu bytes)",
                   r.pass ? "byte-identical" : "DIFFER", ma.size());
    return r;
}

}  // namespace

int main(int argc, char** argv) {
    const Options opts = parse_args(argc, argv);
    auto want = [&](int k) { return opts.only < 0 || opts.only == k; };

    std::vector<CriterionResult> results;
    if (want(1)) {
        results.push_back(criterion1());
    }
    if (want(2)) {
        results.push_back(criterion2());
    }
    if (want(3)) {
        results.push_back(criterion3());
    }

    const bool heavy = want(4) || want(5) || want(6) || want(7) || want(8) || want(9);
    if (heavy) {
        RunPool pool(opts);
        std::vector<std::string> sweep_names;
        for (int s = 0; s < 3; ++s) {
            const std::string i = std::to_string(s + 1);
            if (want(4) || want(9)) {
                pool.add(tf_config(opts, "tf_d64_L5_s" + i, 64, 5, Variant::full, false, "adam", s));
                pool.add(rnn_config(opts, "lstm_d64_s" + i, Family::lstm, 64, s));
            }
            if (want(5)) {
                pool.add(tf_config(opts, "ao_d64_s" + i, 64, 5, Variant::attention_only, false,
                                   "adam", s));
                pool.add(tf_config(opts, "am_d64_s" + i, 64, 5, Variant::attention_main, false,
                                   "adam", s));
                pool.add(tf_config(opts, "fm_d64_s" + i, 64, 5, Variant::ffn_main, false, "adam",
                                   s));
            }
            if (want(6)) {
                pool.add(tf_config(opts, "routed_d64_s" + i, 64, 8, Variant::full, true, "adam", s));
                pool.add(tf_config(opts, "routed_d8_s" + i, 8, 8, Variant::full, true, "adam", s));
            }
            if (want(7) || want(8) || want(9)) {
                pool.add(tf_config(opts, "adam_d64_L8_s" + i, 64, 8, Variant::full, false, "adam",
                                   s));
            }
            if (want(7)) {
                pool.add(tf_config(opts, "tf_d8_L8_s" + i, 8, 8, Variant::full, false, "adam", s));
            }
            if (want(8)) {
                pool.add(tf_config(opts, "sgd_d64_L8_s" + i, 64, 8, Variant::full, false,
                                   "sgd_momentum", s));
            }
        }
        if (want(8)) {
            pool.add(tf_config(opts, "rmsprop_d64_L8_s1", 64, 8, Variant::full, false, "rmsprop",
                               0));
            pool.add(tf_config(opts, "adam2nd_d64_L8_s1", 64, 8, Variant::full, false, "adam_2nd",
                               0));
        }
        if (want(9)) {
            for (int64_t d : {16, 32}) {
                for (int64_t layers : {3, 5, 8}) {
                    const std::string name =
                        "sweep_d" + std::to_string(d) + "_L" + std::to_string(layers);
                    pool.add(tf_config(opts, name, d, layers, Variant::full, false, "adam", 0));
                    sweep_names.push_back(name);
                }
            }
            sweep_names.push_back("tf_d64_L5_s1");
            sweep_names.push_back("adam_d64_L8_s1");
        }

        pool.execute();

        if (want(4)) {
            results.push_back(criterion4(pool));
        }
        if (want(5)) {
            results.push_back(criterion5(pool));
        }
        if (want(6)) {
            results.push_back(criterion6(pool));
        }
        if (want(7)) {
            results.push_back(criterion7(pool));
        }
        if (want(8)) {
            results.push_back(criterion8(pool));
        }
        if (want(9)) {
            results.push_back(criterion9(pool, sweep_names));
        }
    }

    if (want(10)) {
        results.push_back(criterion10(opts));
    }

    std::sort(results.begin(), results.end(),
              [](const CriterionResult& a, const CriterionResult& b) { return a.id < b.id; });
    bool all_pass = true;
    std::printf("\n");
    for (const CriterionResult& r : results) {
        std::printf("CRITERION %2d: %s — %s\n", r.id, r.pass ? "PASS" : "FAIL", r.detail.c_str());
        all_pass = all_pass && r.pass;
    }
    std::printf("\n%s\n", all_pass ? "acceptance: all criteria PASS" : "acceptance: FAILURES present");
    return all_pass ? 0 : 1;
}
