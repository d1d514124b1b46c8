#pragma once

// Measurement machinery over trained models: exhaustive neuron census and
// router-weight collection across the full input space, dead-neuron
// statistics, loss-spike and sparsity-jump detection with pairing, series
// smoothing, and spike-excluded tail averages.
//
// "Activated" means a strictly positive FFN preactivation (x.k_i + b_i > 0);
// exact zeros count as inactive.

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "complab/model.hpp"
#include "complab/sequence.hpp"

namespace complab {

constexpr double kSpikeRiseNats = 0.3;
constexpr int64_t kSpikeLookback = 3;
constexpr double kJumpThreshold = 0.01;
constexpr int64_t kPairWindow = 3;
constexpr int64_t kTailEpochs = 15;
constexpr int64_t kSmoothWindow = 3;

struct ActivationLedger {
    std::vector<int64_t> layer_ids;   // architectural indices of FFN layers
    int64_t neurons_per_layer = 0;
    int64_t n_max = 0;                // token positions traversed
    std::vector<int64_t> counts;      // [layer][neuron], layer-major

    int64_t total_neurons() const {
        return static_cast<int64_t>(layer_ids.size()) * neurons_per_layer;
    }
    int64_t dead_count() const {
        int64_t dead = 0;
        for (int64_t c : counts) {
            dead += c == 0 ? 1 : 0;
        }
        return dead;
    }
    std::span<const int64_t> layer_counts(size_t layer_pos) const {
        return {counts.data() + static_cast<int64_t>(layer_pos) * neurons_per_layer,
                static_cast<size_t>(neurons_per_layer)};
    }
};

inline double dead_proportion(const ActivationLedger& ledger) {
    const int64_t total = ledger.total_neurons();
    if (total == 0) {
        return 0.0;  // models without FFN neurons report no dead mass
    }
    return static_cast<double>(ledger.dead_count()) / static_cast<double>(total);
}

struct Histogram {
    std::vector<double> bin_edges;  // bins+1 edges
    std::vector<double> mass;
};

// Equal-width bins over (0, n_max]; zero-count neurons are excluded and
// reported through dead_proportion, so the histogram mass plus the dead
// proportion partitions 1. Count c lands in bin ceil(c*bins/n_max)-1.
inline Histogram activation_histogram(const ActivationLedger& ledger, int64_t bins = 20) {
    require(bins >= 1, Errc::parameter, "bins must be >= 1");
    Histogram h;
    h.bin_edges.resize(static_cast<size_t>(bins) + 1);
    for (int64_t i = 0; i <= bins; ++i) {
        h.bin_edges[static_cast<size_t>(i)] =
            static_cast<double>(i) * static_cast<double>(ledger.n_max) / static_cast<double>(bins);
    }
    h.mass.assign(static_cast<size_t>(bins), 0.0);
    const int64_t total = ledger.total_neurons();
    if (total == 0) {
        return h;
    }
    const double w = 1.0 / static_cast<double>(total);
    for (int64_t c : ledger.counts) {
        if (c == 0) {
            continue;
        }
        int64_t bin = (c * bins + ledger.n_max - 1) / ledger.n_max - 1;  // ceil(c*bins/n_max)-1
        bin = std::min(bin, bins - 1);
        h.mass[static_cast<size_t>(bin)] += w;
    }
    return h;
}

// 30-bin histogram over [0,1] for routing-weight samples
inline Histogram weight_histogram(std::span<const double> weights, int64_t bins = 30) {
    require(bins >= 1, Errc::parameter, "bins must be >= 1");
    Histogram h;
    h.bin_edges.resize(static_cast<size_t>(bins) + 1);
    for (int64_t i = 0; i <= bins; ++i) {
        h.bin_edges[static_cast<size_t>(i)] = static_cast<double>(i) / static_cast<double>(bins);
    }
    h.mass.assign(static_cast<size_t>(bins), 0.0);
    if (weights.empty()) {
        return h;
    }
    const double w = 1.0 / static_cast<double>(weights.size());
    for (double x : weights) {
        auto bin = static_cast<int64_t>(x * static_cast<double>(bins));
        bin = std::clamp<int64_t>(bin, 0, bins - 1);
        h.mass[static_cast<size_t>(bin)] += w;
    }
    return h;
}

namespace detail {

// Accumulates activation counts and per-sequence active-neuron unions from
// FFN preactivation taps during a batched traversal.
class CensusSink final : public TapSink {
public:
    explicit CensusSink(int64_t tokens_per_row) : tokens_per_row_(tokens_per_row) {}

    void begin_chunk(int64_t rows) {
        chunk_rows_ = rows;
        chunk_layers_ = 0;
        union_.assign(static_cast<size_t>(rows) * layer_capacity_ * neuron_capacity_, 0);
    }

    void ffn_preact(int64_t layer, const Tensor& pre) override {
        const int64_t dh = pre.dim(1);
        if (neuron_capacity_ == 0) {
            neuron_capacity_ = dh;
            union_.assign(static_cast<size_t>(chunk_rows_) * layer_capacity_ * neuron_capacity_, 0);
        }
        size_t layer_pos = 0;
        for (; layer_pos < layer_ids_.size(); ++layer_pos) {
            if (layer_ids_[layer_pos] == layer) {
                break;
            }
        }
        if (layer_pos == layer_ids_.size()) {
            layer_ids_.push_back(layer);
            counts_.resize(layer_ids_.size() * static_cast<size_t>(dh), 0);
            if (layer_ids_.size() > static_cast<size_t>(layer_capacity_)) {
                grow_layers();
            }
        }
        chunk_layers_ = std::max<int64_t>(chunk_layers_, static_cast<int64_t>(layer_pos) + 1);

        int64_t* counts = counts_.data() + static_cast<int64_t>(layer_pos) * dh;
        const double* p = pre.data();
        const int64_t rows = pre.dim(0);
        for (int64_t r = 0; r < rows; ++r) {
            const int64_t seq = r / tokens_per_row_;
            uint8_t* u = union_.data() +
                         (seq * layer_capacity_ + static_cast<int64_t>(layer_pos)) * neuron_capacity_;
            const double* row = p + r * dh;
            for (int64_t j = 0; j < dh; ++j) {
                if (row[j] > 0.0) {
                    ++counts[j];
                    u[j] = 1;
                }
            }
        }
        tokens_seen_ += rows;
    }

    void end_chunk() {
        const int64_t per_seq = static_cast<int64_t>(layer_ids_.size()) * neuron_capacity_;
        if (per_seq == 0) {
            return;
        }
        for (int64_t s = 0; s < chunk_rows_; ++s) {
            int64_t active = 0;
            for (size_t lp = 0; lp < layer_ids_.size(); ++lp) {
                const uint8_t* u = union_.data() +
                                   (s * layer_capacity_ + static_cast<int64_t>(lp)) * neuron_capacity_;
                for (int64_t j = 0; j < neuron_capacity_; ++j) {
                    active += u[j];
                }
            }
            active_fraction_sum_ +=
                static_cast<double>(active) / static_cast<double>(per_seq);
        }
    }

    ActivationLedger ledger() const {
        ActivationLedger l;
        l.layer_ids = layer_ids_;
        l.neurons_per_layer = neuron_capacity_;
        l.counts = counts_;
        l.n_max = tokens_seen_ / std::max<int64_t>(1, static_cast<int64_t>(layer_ids_.size()));
        return l;
    }

    double active_fraction_sum() const { return active_fraction_sum_; }
    bool saw_ffn() const { return !layer_ids_.empty(); }

private:
    void grow_layers() {
        const int64_t new_cap = layer_capacity_ * 2;
        std::vector<uint8_t> bigger(static_cast<size_t>(chunk_rows_) * new_cap * neuron_capacity_, 0);
        for (int64_t s = 0; s < chunk_rows_; ++s) {
            for (int64_t lp = 0; lp < layer_capacity_; ++lp) {
                std::copy_n(union_.data() + (s * layer_capacity_ + lp) * neuron_capacity_,
                            neuron_capacity_,
                            bigger.data() + (s * new_cap + lp) * neuron_capacity_);
            }
        }
        union_ = std::move(bigger);
        layer_capacity_ = new_cap;
    }

    int64_t tokens_per_row_;
    int64_t chunk_rows_ = 0;
    int64_t chunk_layers_ = 0;
    int64_t layer_capacity_ = 16;
    int64_t neuron_capacity_ = 0;
    std::vector<int64_t> layer_ids_;
    std::vector<int64_t> counts_;
    std::vector<uint8_t> union_;
    int64_t tokens_seen_ = 0;
    double active_fraction_sum_ = 0.0;
};

inline TokenBatch space_chunk(const ModelConfig& cfg, uint64_t first_id, int64_t rows) {
    const SequenceCodec codec{cfg.vocab_size, cfg.length};
    TokenBatch b;
    b.rows = rows;
    b.cols = cfg.length;
    b.tokens.resize(static_cast<size_t>(rows * cfg.length));
    std::vector<int32_t> seq(static_cast<size_t>(cfg.length));
    for (int64_t r = 0; r < rows; ++r) {
        codec.decode(first_id + static_cast<uint64_t>(r), seq);
        int32_t* row = b.tokens.data() + r * cfg.length;
        row[0] = cfg.start_token();
        for (int64_t j = 0; j + 1 < cfg.length; ++j) {
            row[j + 1] = seq[static_cast<size_t>(j)];
        }
    }
    return b;
}

}  // namespace detail

struct CensusResult {
    ActivationLedger ledger;
    double mean_active_fraction = 0.0;
    int64_t sequences = 0;
};

// Exhaustive activation census: one eval-mode forward pass per sequence of
// the full space, batched in chunks.
inline CensusResult neuron_census(Model& model, int64_t batch_rows = 512,
                                  int64_t cap = kDefaultEnumerationCap) {
    require(model.mode() == Mode::eval, Errc::conformance, "census requires eval mode");
    const ModelConfig& cfg = model.config();
    const uint64_t total = enumeration_total(cfg.vocab_size, cfg.length, cap);

    detail::CensusSink sink(cfg.length);
    for (uint64_t first = 0; first < total; first += static_cast<uint64_t>(batch_rows)) {
        const int64_t rows = static_cast<int64_t>(
            std::min<uint64_t>(static_cast<uint64_t>(batch_rows), total - first));
        TokenBatch chunk = detail::space_chunk(cfg, first, rows);
        sink.begin_chunk(rows);
        model.forward_rows_eval(chunk, &sink);
        sink.end_chunk();
    }

    CensusResult r;
    r.ledger = sink.ledger();
    r.sequences = static_cast<int64_t>(total);
    r.mean_active_fraction =
        sink.saw_ffn() ? sink.active_fraction_sum() / static_cast<double>(total) : 0.0;
    // full-space traversal: every FFN layer sees n * |V|^n token positions
    r.ledger.n_max = cfg.length * static_cast<int64_t>(total);
    return r;
}

// fraction of all FFN neurons activated at least once along one sequence
inline double per_sequence_active_fraction(Model& model, std::span<const int32_t> seq) {
    require(model.mode() == Mode::eval, Errc::conformance, "probe requires eval mode");
    const ModelConfig& cfg = model.config();
    require(static_cast<int64_t>(seq.size()) == cfg.length, Errc::range, "sequence length mismatch");
    detail::CensusSink sink(cfg.length);
    TokenBatch b;
    b.rows = 1;
    b.cols = cfg.length;
    b.tokens.push_back(cfg.start_token());
    for (size_t i = 0; i + 1 < seq.size(); ++i) {
        b.tokens.push_back(seq[i]);
    }
    sink.begin_chunk(1);
    model.forward_rows_eval(b, &sink);
    sink.end_chunk();
    return sink.saw_ffn() ? sink.active_fraction_sum() : 0.0;
}

struct RouterStats {
    int64_t paths = 0;
    std::vector<double> all_weights;       // every (token, layer, path) weight
    std::vector<double> residual_weights;  // path h+1 subsample
};

// Collects every routing weight over all tokens of all sequences.
inline RouterStats router_census(Model& model, int64_t batch_rows = 512,
                                 int64_t cap = kDefaultEnumerationCap) {
    require(model.mode() == Mode::eval, Errc::conformance, "census requires eval mode");
    require(model.config().routed, Errc::unsupported_probe,
            "router census requires a routed model");
    const ModelConfig& cfg = model.config();
    const uint64_t total = enumeration_total(cfg.vocab_size, cfg.length, cap);

    struct Sink final : TapSink {
        RouterStats stats;
        void router_weights(int64_t, const Tensor& w) override {
            const int64_t rows = w.dim(0), paths = w.dim(1);
            stats.paths = paths;
            const double* p = w.data();
            for (int64_t r = 0; r < rows; ++r) {
                for (int64_t c = 0; c < paths; ++c) {
                    stats.all_weights.push_back(p[r * paths + c]);
                }
                stats.residual_weights.push_back(p[r * paths + paths - 1]);
            }
        }
    } sink;

    for (uint64_t first = 0; first < total; first += static_cast<uint64_t>(batch_rows)) {
        const int64_t rows = static_cast<int64_t>(
            std::min<uint64_t>(static_cast<uint64_t>(batch_rows), total - first));
        TokenBatch chunk = detail::space_chunk(cfg, first, rows);
        model.forward_rows_eval(chunk, &sink);
    }
    return sink.stats;
}

// epoch t spikes when loss_t - min(loss over previous `lookback` epochs)
// rises by at least `rise` nats
inline std::vector<int64_t> detect_spikes(std::span<const double> loss, double rise = kSpikeRiseNats,
                                          int64_t lookback = kSpikeLookback) {
    require(static_cast<int64_t>(loss.size()) > lookback, Errc::parameter,
            "series shorter than lookback");
    std::vector<int64_t> spikes;
    for (int64_t t = lookback; t < static_cast<int64_t>(loss.size()); ++t) {
        double prev_min = loss[static_cast<size_t>(t - lookback)];
        for (int64_t i = t - lookback + 1; i < t; ++i) {
            prev_min = std::min(prev_min, loss[static_cast<size_t>(i)]);
        }
        if (loss[static_cast<size_t>(t)] - prev_min >= rise) {
            spikes.push_back(t);
        }
    }
    return spikes;
}

inline std::vector<int64_t> detect_sparsity_jumps(std::span<const double> dead,
                                                  double threshold = kJumpThreshold) {
    require(dead.size() >= 2, Errc::parameter, "series too short");
    std::vector<int64_t> jumps;
    for (size_t t = 1; t < dead.size(); ++t) {
        if (dead[t] - dead[t - 1] >= threshold) {
            jumps.push_back(static_cast<int64_t>(t));
        }
    }
    return jumps;
}

struct SpikeReport {
    std::vector<int64_t> spikes;
    std::vector<int64_t> jumps;
    // one entry per jump: the nearest spike within the window, or -1
    std::vector<int64_t> paired_spike;
};

inline SpikeReport build_spike_report(std::span<const double> loss, std::span<const double> dead,
                                      double rise = kSpikeRiseNats, int64_t lookback = kSpikeLookback,
                                      double jump_threshold = kJumpThreshold,
                                      int64_t window = kPairWindow) {
    SpikeReport r;
    r.spikes = detect_spikes(loss, rise, lookback);
    r.jumps = detect_sparsity_jumps(dead, jump_threshold);
    for (int64_t j : r.jumps) {
        int64_t best = -1;
        int64_t best_dist = window + 1;
        for (int64_t s : r.spikes) {
            const int64_t dist = std::abs(s - j);
            if (dist < best_dist) {
                best_dist = dist;
                best = s;
            }
        }
        r.paired_spike.push_back(best_dist <= window ? best : -1);
    }
    return r;
}

// centered moving average with truncated windows at the edges
inline std::vector<double> smooth_series(std::span<const double> series,
                                         int64_t window = kSmoothWindow) {
    require(window >= 1 && window % 2 == 1, Errc::parameter, "window must be odd and positive");
    std::vector<double> out(series.size());
    const int64_t half = window / 2;
    const auto n = static_cast<int64_t>(series.size());
    for (int64_t i = 0; i < n; ++i) {
        const int64_t lo = std::max<int64_t>(0, i - half);
        const int64_t hi = std::min<int64_t>(n - 1, i + half);
        double sum = 0.0;
        for (int64_t j = lo; j <= hi; ++j) {
            sum += series[static_cast<size_t>(j)];
        }
        out[static_cast<size_t>(i)] = sum / static_cast<double>(hi - lo + 1);
    }
    return out;
}

// Mean over the final `tail` epochs, excluding spike epochs and the epoch
// immediately after each spike.
inline double tail_average(std::span<const double> series, int64_t tail,
                           std::span<const int64_t> spike_epochs) {
    const auto n = static_cast<int64_t>(series.size());
    require(tail >= 1 && tail <= n, Errc::parameter, "tail must fit the series");
    std::vector<bool> excluded(static_cast<size_t>(n), false);
    for (int64_t s : spike_epochs) {
        if (s >= 0 && s < n) {
            excluded[static_cast<size_t>(s)] = true;
        }
        if (s + 1 < n) {
            excluded[static_cast<size_t>(s + 1)] = true;
        }
    }
    double sum = 0.0;
    int64_t kept = 0;
    for (int64_t i = n - tail; i < n; ++i) {
        if (!excluded[static_cast<size_t>(i)]) {
            sum += series[static_cast<size_t>(i)];
            ++kept;
        }
    }
    require(kept > 0, Errc::empty_tail, "every tail epoch was excluded");
    return sum / static_cast<double>(kept);
}

}  // namespace complab
