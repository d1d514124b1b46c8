#pragma once

// Model zoo scaffolding: configuration, the trainable-model base class, and
// the parameter checkpoint container.

#include <cstdint>
#include <istream>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "complab/exact.hpp"
#include "complab/ops.hpp"
#include "complab/tensor.hpp"

namespace complab {

enum class Family { transformer, gru, lstm };
enum class Variant { full, attention_only, attention_main, ffn_main };
enum class Mode { train, eval };

inline Family family_from_string(const std::string& s) {
    if (s == "transformer") {
        return Family::transformer;
    }
    if (s == "gru") {
        return Family::gru;
    }
    if (s == "lstm") {
        return Family::lstm;
    }
    fail(Errc::config, "unknown model family: " + s);
}

inline std::string to_string(Family f) {
    switch (f) {
        case Family::transformer: return "transformer";
        case Family::gru: return "gru";
        case Family::lstm: return "lstm";
    }
    return "?";
}

inline Variant variant_from_string(const std::string& s) {
    if (s == "full") {
        return Variant::full;
    }
    if (s == "attention_only") {
        return Variant::attention_only;
    }
    if (s == "attention_main") {
        return Variant::attention_main;
    }
    if (s == "ffn_main") {
        return Variant::ffn_main;
    }
    if (s == "ffn_only") {
        fail(Errc::unsupported_variant, "ffn_only cannot model sequences and is not supported");
    }
    fail(Errc::config, "unknown variant: " + s);
}

inline std::string to_string(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::attention_only: return "attention_only";
        case Variant::attention_main: return "attention_main";
        case Variant::ffn_main: return "ffn_main";
    }
    return "?";
}

struct ModelConfig {
    Family family = Family::transformer;
    int64_t d = 64;
    int64_t layers = 5;
    int64_t heads = 4;
    int64_t d_hidden = 0;  // 0 -> 4d
    Variant variant = Variant::full;
    bool routed = false;
    double dropout_rate = 0.1;
    int64_t vocab_size = 5;  // excludes '#'
    int64_t length = 5;
    uint64_t seed = 1;

    int64_t hidden() const { return d_hidden > 0 ? d_hidden : 4 * d; }
    int64_t vocab_in() const { return vocab_size + 1; }
    int64_t vocab_out() const { return vocab_size; }
    int64_t max_len() const { return length + 1; }
    int32_t start_token() const { return static_cast<int32_t>(vocab_size); }

    void validate() const {
        require(d >= 1 && layers >= 1 && vocab_size >= 1 && length >= 1, Errc::config,
                "model dimensions must be positive");
        require(dropout_rate >= 0.0 && dropout_rate < 1.0, Errc::config, "dropout must be in [0,1)");
        if (family == Family::transformer) {
            require(heads >= 1 && d % heads == 0, Errc::config, "d must be divisible by heads");
        } else {
            require(layers == 1, Errc::config, "RNNs use a single-layer configuration");
            require(variant == Variant::full, Errc::config, "variants apply to transformers only");
            require(!routed, Errc::config, "routing applies to transformers only");
        }
    }
};

struct TokenBatch {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<int32_t> tokens;  // rows * cols, row-major

    int32_t at(int64_t r, int64_t c) const { return tokens[static_cast<size_t>(r * cols + c)]; }
};

// Instrumentation taps surfaced during a forward pass.
struct TapSink {
    virtual ~TapSink() = default;
    // FFN preactivations (before ReLU), shape [rows*T, d_hidden]
    virtual void ffn_preact(int64_t layer, const Tensor& pre) { (void)layer, (void)pre; }
    // router weights, shape [rows*T, heads+1]
    virtual void router_weights(int64_t layer, const Tensor& w) { (void)layer, (void)w; }
};

struct Parameter {
    std::string name;
    Tensor value;
};

class Model {
public:
    virtual ~Model() = default;

    const ModelConfig& config() const { return cfg_; }
    std::vector<Parameter>& parameters() { return params_; }
    const std::vector<Parameter>& parameters() const { return params_; }

    int64_t parameter_count() const {
        int64_t n = 0;
        for (const Parameter& p : params_) {
            n += p.value.size();
        }
        return n;
    }

    Parameter* find_param(const std::string& name) {
        for (Parameter& p : params_) {
            if (p.name == name) {
                return &p;
            }
        }
        return nullptr;
    }

    void set_mode(Mode m) { mode_ = m; }
    Mode mode() const { return mode_; }

    // total sequence rows pushed through forward passes (census accounting)
    int64_t forward_rows() const { return forward_rows_; }

    // Teacher-forced loss over a [B, n+1] batch whose rows start with '#'.
    // Returns the per-token mean cross-entropy in nats, recorded on `tape`.
    Tensor forward_train(const TokenBatch& batch, Tape& tape, TapSink* taps = nullptr) {
        require(mode_ == Mode::train, Errc::conformance, "forward_train requires train mode");
        require(batch.cols == cfg_.length + 1, Errc::conformance,
                "training batch must hold length+1 tokens per row");
        for (int64_t r = 0; r < batch.rows; ++r) {
            require(batch.at(r, 0) == cfg_.start_token(), Errc::conformance,
                    "training rows must start with '#'");
        }
        TokenBatch inputs;
        inputs.rows = batch.rows;
        inputs.cols = cfg_.length;
        inputs.tokens.resize(static_cast<size_t>(inputs.rows * inputs.cols));
        std::vector<int64_t> targets(static_cast<size_t>(inputs.rows * inputs.cols));
        for (int64_t r = 0; r < batch.rows; ++r) {
            for (int64_t c = 0; c < cfg_.length; ++c) {
                inputs.tokens[static_cast<size_t>(r * cfg_.length + c)] = batch.at(r, c);
                targets[static_cast<size_t>(r * cfg_.length + c)] = batch.at(r, c + 1);
            }
        }
        Tensor logits = forward_logits(inputs, &tape, taps);
        return cross_entropy_mean(logits, targets, &tape);
    }

    // Conditional rows at every input position (eval mode), [rows*cols, V].
    Tensor forward_rows_eval(const TokenBatch& inputs, TapSink* taps = nullptr) {
        require(mode_ == Mode::eval, Errc::conformance, "forward_rows_eval requires eval mode");
        Tensor logits = forward_logits(inputs, nullptr, taps);
        return softmax_lastdim(logits, nullptr);
    }

    // Next-token distribution for one prefix (eval mode, deterministic).
    void next_dist(std::span<const int32_t> prefix, std::span<double> out) {
        require(mode_ == Mode::eval, Errc::conformance, "next_dist requires eval mode");
        require(static_cast<int64_t>(prefix.size()) <= cfg_.length - 1, Errc::range,
                "prefix too long");
        for (int32_t c : prefix) {
            require(c >= 0 && c < cfg_.vocab_size, Errc::range, "prefix character out of range");
        }
        TokenBatch b;
        b.rows = 1;
        b.cols = static_cast<int64_t>(prefix.size()) + 1;
        b.tokens.push_back(cfg_.start_token());
        b.tokens.insert(b.tokens.end(), prefix.begin(), prefix.end());
        Tensor rows = forward_rows_eval(b);
        const int64_t last = b.cols - 1;
        for (int64_t c = 0; c < cfg_.vocab_out(); ++c) {
            out[static_cast<size_t>(c)] = rows.at({last, c});
        }
    }

    // --- checkpoint container (bit-exact round trip) ---------------------
    void save_checkpoint(std::ostream& os) const {
        const char magic[] = "complab-ckpt-v1\n";
        os.write(magic, sizeof(magic) - 1);
        write_u64(os, params_.size());
        for (const Parameter& p : params_) {
            write_u64(os, p.name.size());
            os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
            write_u64(os, static_cast<uint64_t>(p.value.ndim()));
            for (int64_t i = 0; i < p.value.ndim(); ++i) {
                write_u64(os, static_cast<uint64_t>(p.value.dim(i)));
            }
            os.write(reinterpret_cast<const char*>(p.value.data()),
                     static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(p.value.size())));
        }
        require(os.good(), Errc::io, "checkpoint write failed");
    }

    void load_checkpoint(std::istream& is) {
        char magic[16];
        is.read(magic, 16);
        require(is.good() && std::string(magic, 16) == "complab-ckpt-v1\n", Errc::io,
                "bad checkpoint header");
        const uint64_t count = read_u64(is);
        require(count == params_.size(), Errc::conformance, "checkpoint parameter count mismatch");
        for (Parameter& p : params_) {
            const uint64_t name_len = read_u64(is);
            std::string name(name_len, '\0');
            is.read(name.data(), static_cast<std::streamsize>(name_len));
            require(name == p.name, Errc::conformance, "checkpoint key mismatch: " + name);
            const uint64_t ndim = read_u64(is);
            require(ndim == static_cast<uint64_t>(p.value.ndim()), Errc::conformance,
                    "checkpoint rank mismatch for " + name);
            for (int64_t i = 0; i < p.value.ndim(); ++i) {
                require(read_u64(is) == static_cast<uint64_t>(p.value.dim(i)), Errc::conformance,
                        "checkpoint shape mismatch for " + name);
            }
            is.read(reinterpret_cast<char*>(p.value.data()),
                    static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(p.value.size())));
            require(is.good(), Errc::io, "checkpoint truncated at " + name);
        }
    }

protected:
    explicit Model(const ModelConfig& cfg)
        : cfg_(cfg), init_rng_(cfg.seed), dropout_rng_(derive_seed(cfg.seed, 0xd70u)) {
        cfg_.validate();
    }

    // computes [rows*cols, vocab_out] logits for a [rows, cols] token batch
    virtual Tensor forward_logits(const TokenBatch& inputs, Tape* tape, TapSink* taps) = 0;

    enum class Init { fan_in_uniform, zeros, ones };

    Tensor& add_param(const std::string& name, Shape shape, Init init) {
        Tensor t;
        switch (init) {
            case Init::fan_in_uniform: {
                const double bound = 1.0 / std::sqrt(static_cast<double>(shape[0]));
                t = Tensor::uniform(std::move(shape), -bound, bound, init_rng_);
                break;
            }
            case Init::zeros:
                t = Tensor::zeros(std::move(shape));
                break;
            case Init::ones:
                t = Tensor::full(std::move(shape), 1.0);
                break;
        }
        t.requires_grad = true;
        params_.push_back(Parameter{name, std::move(t)});
        return params_.back().value;
    }

    uint64_t next_dropout_seed() { return dropout_rng_.next_u64(); }
    void count_rows(int64_t rows) { forward_rows_ += rows; }

    std::vector<int64_t> flat_ids(const TokenBatch& b) const {
        std::vector<int64_t> ids(b.tokens.size());
        for (size_t i = 0; i < b.tokens.size(); ++i) {
            const int32_t t = b.tokens[i];
            require(t >= 0 && t < cfg_.vocab_in(), Errc::conformance, "token out of range");
            ids[i] = t;
        }
        return ids;
    }

    ModelConfig cfg_;
    std::vector<Parameter> params_;
    Mode mode_ = Mode::train;
    Rng init_rng_;
    Rng dropout_rng_;
    int64_t forward_rows_ = 0;

private:
    static void write_u64(std::ostream& os, uint64_t v) {
        os.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    static uint64_t read_u64(std::istream& is) {
        uint64_t v = 0;
        is.read(reinterpret_cast<char*>(&v), sizeof(v));
        require(is.good(), Errc::io, "checkpoint truncated");
        return v;
    }
};

// eval-mode adapter onto the exact evaluator's query surface
class ModelEvalView final : public NextTokenModel {
public:
    explicit ModelEvalView(Model& m) : model_(&m) {}
    int64_t vocab_size() const override { return model_->config().vocab_out(); }
    int64_t seq_length() const override { return model_->config().length; }
    void next_dist(std::span<const int32_t> prefix, std::span<double> out) const override {
        model_->next_dist(prefix, out);
    }

private:
    Model* model_;
};

}  // namespace complab
