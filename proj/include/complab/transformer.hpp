#pragma once

// Decoder-only transformer with post-LN sublayers, fixed sinusoidal position
// encoding, optional routed attention, and the ablation variants that prune
// whole sublayers at build time.
//
// Attention follows the per-head form
//   Head_k(x_i) = P_k W_V^k X softmax((W_K X)^T W_Q x_i / sqrt(d) + m_i)
// with the per-head output projections packed row-wise into one d-by-d
// matrix. The routed path replaces the residual-plus-attention sum with
//   sum_k f_k(x) Head_k(x) + f_{h+1}(x) x,   f = softmax(W2 relu(W1 x)),
// and post-LN is applied to the combination unchanged.

#include <map>
#include <utility>
#include <vector>

#include "complab/model.hpp"

namespace complab {

// Routed path combination: sum_k f_k * Head_k + f_{h+1} * x. `route_weights`
// is [N, h+1] on the simplex; `ones_row` is a constant [1, d] used to tile
// each weight column across the feature axis.
inline Tensor routed_combine(std::span<const Tensor> head_outputs, const Tensor& x,
                             const Tensor& route_weights, const Tensor& ones_row, Tape* tape) {
    (void)ones_row;
    const auto h = static_cast<int64_t>(head_outputs.size());
    require(route_weights.dim(1) == h + 1, Errc::conformance, "route weight width mismatch");
    const int64_t n = x.dim(0), d = x.dim(1);
    // stack paths to [N, h+1, d] and contract with [N, 1, h+1] per token
    std::vector<Tensor> paths;
    paths.reserve(static_cast<size_t>(h) + 1);
    for (const Tensor& head : head_outputs) {
        paths.push_back(reshape(head, {n, 1, d}, tape));
    }
    paths.push_back(reshape(x, {n, 1, d}, tape));
    Tensor stacked = concat(paths, 1, tape);
    Tensor weights3 = reshape(route_weights, {n, 1, h + 1}, tape);
    return reshape(matmul(weights3, stacked, tape), {n, d}, tape);
}

class TransformerModel final : public Model {
public:
    explicit TransformerModel(const ModelConfig& cfg) : Model(cfg) {
        require(cfg_.family == Family::transformer, Errc::config, "not a transformer config");

        embed_ = add_param("embed.weight", {cfg_.vocab_in(), cfg_.d}, Init::fan_in_uniform);

        const int64_t d = cfg_.d;
        const int64_t dh = cfg_.hidden();
        for (int64_t l = 0; l < cfg_.layers; ++l) {
            const std::string base = "layers." + std::to_string(l) + ".";
            LayerSlots s;
            if (has_attn(l)) {
                s.wq = add_param(base + "attn.wq", {d, d}, Init::fan_in_uniform);
                s.wk = add_param(base + "attn.wk", {d, d}, Init::fan_in_uniform);
                s.wv = add_param(base + "attn.wv", {d, d}, Init::fan_in_uniform);
                s.proj = add_param(base + "attn.proj", {d, d}, Init::fan_in_uniform);
                if (cfg_.routed) {
                    s.router_w1 = add_param(base + "router.w1", {d, d}, Init::fan_in_uniform);
                    s.router_w2 = add_param(base + "router.w2", {d, cfg_.heads + 1},
                                            Init::fan_in_uniform);
                }
                s.attn_gain = add_param(base + "attn_norm.gain", {d}, Init::ones);
                s.attn_bias = add_param(base + "attn_norm.bias", {d}, Init::zeros);
            }
            if (has_ffn(l)) {
                s.w1 = add_param(base + "ffn.w1", {d, dh}, Init::fan_in_uniform);
                s.b1 = add_param(base + "ffn.b1", {dh}, Init::zeros);
                s.w2 = add_param(base + "ffn.w2", {dh, d}, Init::fan_in_uniform);
                s.b2 = add_param(base + "ffn.b2", {d}, Init::zeros);
                s.ffn_gain = add_param(base + "ffn_norm.gain", {d}, Init::ones);
                s.ffn_bias = add_param(base + "ffn_norm.bias", {d}, Init::zeros);
            }
            slots_.push_back(s);
        }
        head_w_ = add_param("head.weight", {d, cfg_.vocab_out()}, Init::fan_in_uniform);
        head_b_ = add_param("head.bias", {cfg_.vocab_out()}, Init::zeros);

        pos_enc_ = build_positional(cfg_.max_len(), d);
    }

    bool has_attn(int64_t layer) const {
        return cfg_.variant != Variant::ffn_main || layer == 0;
    }

    bool has_ffn(int64_t layer) const {
        switch (cfg_.variant) {
            case Variant::full:
            case Variant::ffn_main:
                return true;
            case Variant::attention_only:
                return false;
            case Variant::attention_main:
                return layer == cfg_.layers - 1;
        }
        return false;
    }

    // layers that carry FFN parameters, in architectural order
    std::vector<int64_t> ffn_layers() const {
        std::vector<int64_t> out;
        for (int64_t l = 0; l < cfg_.layers; ++l) {
            if (has_ffn(l)) {
                out.push_back(l);
            }
        }
        return out;
    }

protected:
    Tensor forward_logits(const TokenBatch& inputs, Tape* tape, TapSink* taps) override {
        const int64_t b = inputs.rows, t = inputs.cols;
        require(t >= 1 && t <= cfg_.length, Errc::conformance, "input length out of range");
        count_rows(b);

        const auto ids = flat_ids(inputs);
        Tensor x = embedding_lookup(p(embed_), ids, tape);
        x = add(x, pe_tile(b, t), tape);
        for (int64_t l = 0; l < cfg_.layers; ++l) {
            if (has_attn(l)) {
                x = attn_block(x, b, t, l, tape, taps);
            }
            if (has_ffn(l)) {
                x = ffn_block(x, l, tape, taps);
            }
        }
        return add(matmul(x, p(head_w_), tape), p(head_b_), tape);
    }

private:
    struct LayerSlots {
        size_t wq = npos, wk = npos, wv = npos, proj = npos;
        size_t router_w1 = npos, router_w2 = npos;
        size_t attn_gain = npos, attn_bias = npos;
        size_t w1 = npos, b1 = npos, w2 = npos, b2 = npos;
        size_t ffn_gain = npos, ffn_bias = npos;
    };
    static constexpr size_t npos = static_cast<size_t>(-1);

    // registration helper returning a stable index into params_
    size_t add_param(const std::string& name, Shape shape, Init init) {
        Model::add_param(name, std::move(shape), init);
        return params_.size() - 1;
    }

    Tensor& p(size_t idx) { return params_[idx].value; }

    Tensor attn_block(const Tensor& x, int64_t b, int64_t t, int64_t layer, Tape* tape,
                      TapSink* taps) {
        const LayerSlots& s = slots_[static_cast<size_t>(layer)];
        const int64_t d = cfg_.d, h = cfg_.heads, dh = d / h;
        static constexpr int64_t perm_bhtd[] = {0, 2, 1, 3};
        static constexpr int64_t perm_bhdt[] = {0, 2, 3, 1};

        Tensor q = matmul(x, p(s.wq), tape);
        Tensor k = matmul(x, p(s.wk), tape);
        Tensor v = matmul(x, p(s.wv), tape);
        Tensor q4 = transpose(reshape(q, {b, t, h, dh}, tape), perm_bhtd, tape);
        Tensor k4 = transpose(reshape(k, {b, t, h, dh}, tape), perm_bhdt, tape);
        Tensor v4 = transpose(reshape(v, {b, t, h, dh}, tape), perm_bhtd, tape);

        Tensor scores = scalar_mul(matmul(q4, k4, tape), 1.0 / std::sqrt(static_cast<double>(d)),
                                   tape);
        scores = add(scores, causal_mask(b, t), tape);
        Tensor attw = softmax_lastdim(scores, tape);
        Tensor ctx = reshape(transpose(matmul(attw, v4, tape), perm_bhtd, tape), {b * t, d}, tape);

        if (!cfg_.routed) {
            Tensor out = matmul(ctx, p(s.proj), tape);
            return layernorm_lastdim(add(x, out, tape), p(s.attn_gain), p(s.attn_bias), tape);
        }

        Tensor rh = relu(matmul(x, p(s.router_w1), tape), tape);
        Tensor rw = softmax_lastdim(matmul(rh, p(s.router_w2), tape), tape);
        if (taps) {
            taps->router_weights(layer, rw);
        }
        std::vector<Tensor> head_outputs;
        head_outputs.reserve(static_cast<size_t>(h));
        for (int64_t head = 0; head < h; ++head) {
            Tensor ctx_h = slice(ctx, 1, head * dh, (head + 1) * dh, tape);
            Tensor proj_h = slice(p(s.proj), 0, head * dh, (head + 1) * dh, tape);
            head_outputs.push_back(matmul(ctx_h, proj_h, tape));
        }
        Tensor combined = routed_combine(head_outputs, x, rw, ones_row(), tape);
        return layernorm_lastdim(combined, p(s.attn_gain), p(s.attn_bias), tape);
    }

    Tensor ffn_block(const Tensor& x, int64_t layer, Tape* tape, TapSink* taps) {
        const LayerSlots& s = slots_[static_cast<size_t>(layer)];
        Tensor pre = add(matmul(x, p(s.w1), tape), p(s.b1), tape);
        if (taps) {
            taps->ffn_preact(layer, pre);
        }
        Tensor hidden = relu(pre, tape);
        Tensor out = add(matmul(hidden, p(s.w2), tape), p(s.b2), tape);
        if (mode_ == Mode::train && cfg_.dropout_rate > 0.0) {
            out = dropout(out, cfg_.dropout_rate, true, next_dropout_seed(), tape);
        }
        return layernorm_lastdim(add(x, out, tape), p(s.ffn_gain), p(s.ffn_bias), tape);
    }

    static Tensor build_positional(int64_t max_len, int64_t d) {
        Tensor pe = Tensor::zeros({max_len, d});
        for (int64_t pos = 0; pos < max_len; ++pos) {
            for (int64_t i = 0; i < d; i += 2) {
                const double angle =
                    static_cast<double>(pos) /
                    std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
                pe.at({pos, i}) = std::sin(angle);
                if (i + 1 < d) {
                    pe.at({pos, i + 1}) = std::cos(angle);
                }
            }
        }
        return pe;
    }

    const Tensor& pe_tile(int64_t b, int64_t t) {
        const auto key = std::make_pair(b, t);
        auto it = pe_tiles_.find(key);
        if (it == pe_tiles_.end()) {
            Tensor tile = Tensor::uninit({b * t, cfg_.d});
            for (int64_t r = 0; r < b; ++r) {
                std::memcpy(tile.data() + r * t * cfg_.d, pos_enc_.data(),
                            sizeof(double) * static_cast<size_t>(t * cfg_.d));
            }
            it = pe_tiles_.emplace(key, std::move(tile)).first;
        }
        return it->second;
    }

    const Tensor& causal_mask(int64_t b, int64_t t) {
        const auto key = std::make_pair(b, t);
        auto it = masks_.find(key);
        if (it == masks_.end()) {
            Tensor m = Tensor::uninit({b, cfg_.heads, t, t});
            double* mp = m.data();
            const int64_t plane = t * t;
            for (int64_t s = 0; s < b * cfg_.heads; ++s) {
                for (int64_t i = 0; i < t; ++i) {
                    for (int64_t j = 0; j < t; ++j) {
                        mp[s * plane + i * t + j] = j <= i ? 0.0 : kMaskValue;
                    }
                }
            }
            it = masks_.emplace(key, std::move(m)).first;
        }
        return it->second;
    }

    const Tensor& ones_row() {
        if (!ones_row_.defined()) {
            ones_row_ = Tensor::full({1, cfg_.d}, 1.0);
        }
        return ones_row_;
    }

    size_t embed_ = npos, head_w_ = npos, head_b_ = npos;
    std::vector<LayerSlots> slots_;
    Tensor pos_enc_;
    Tensor ones_row_;
    std::map<std::pair<int64_t, int64_t>, Tensor> pe_tiles_;
    std::map<std::pair<int64_t, int64_t>, Tensor> masks_;
};

}  // namespace complab
