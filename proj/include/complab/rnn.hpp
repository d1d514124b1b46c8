#pragma once

// Single-layer GRU and LSTM character models with the standard gate
// equations and the same projection-head-plus-softmax output as the
// transformer. Gate blocks follow the usual packed layout: GRU [r, z, n],
// LSTM [i, f, g, o]. Hidden size defaults to 4d.

#include <vector>

#include "complab/model.hpp"

namespace complab {

class RnnModel final : public Model {
public:
    explicit RnnModel(const ModelConfig& cfg) : Model(cfg) {
        require(cfg_.family == Family::gru || cfg_.family == Family::lstm, Errc::config,
                "not an RNN config");
        const int64_t d = cfg_.d;
        const int64_t hidden = cfg_.hidden();
        const int64_t gates = cfg_.family == Family::gru ? 3 : 4;

        embed_ = add_param("embed.weight", {cfg_.vocab_in(), d}, Init::fan_in_uniform);
        w_ih_ = add_param("rnn.w_ih", {d, gates * hidden}, Init::fan_in_uniform);
        b_ih_ = add_param("rnn.b_ih", {gates * hidden}, Init::zeros);
        w_hh_ = add_param("rnn.w_hh", {hidden, gates * hidden}, Init::fan_in_uniform);
        b_hh_ = add_param("rnn.b_hh", {gates * hidden}, Init::zeros);
        head_w_ = add_param("head.weight", {hidden, cfg_.vocab_out()}, Init::fan_in_uniform);
        head_b_ = add_param("head.bias", {cfg_.vocab_out()}, Init::zeros);
    }

protected:
    Tensor forward_logits(const TokenBatch& inputs, Tape* tape, TapSink* taps) override {
        (void)taps;  // no FFN neurons or routers to expose
        const int64_t b = inputs.rows, t = inputs.cols;
        require(t >= 1 && t <= cfg_.length, Errc::conformance, "input length out of range");
        count_rows(b);
        const int64_t hidden = cfg_.hidden();

        const auto ids = flat_ids(inputs);
        Tensor emb = embedding_lookup(p(embed_), ids, tape);       // [b*t, d]
        Tensor xg = add(matmul(emb, p(w_ih_), tape), p(b_ih_), tape);
        const int64_t gates_width = xg.dim(1);
        Tensor xg3 = reshape(xg, {b, t, gates_width}, tape);

        Tensor h = Tensor::zeros({b, hidden});
        Tensor c = Tensor::zeros({b, hidden});
        Tensor ones = Tensor::full({b, hidden}, 1.0);

        std::vector<Tensor> steps;
        steps.reserve(static_cast<size_t>(t));
        for (int64_t step = 0; step < t; ++step) {
            Tensor xg_t = reshape(slice(xg3, 1, step, step + 1, tape), {b, gates_width}, tape);
            Tensor hg = add(matmul(h, p(w_hh_), tape), p(b_hh_), tape);
            if (cfg_.family == Family::lstm) {
                Tensor g = add(xg_t, hg, tape);
                Tensor i_gate = sigmoid(slice(g, 1, 0, hidden, tape), tape);
                Tensor f_gate = sigmoid(slice(g, 1, hidden, 2 * hidden, tape), tape);
                Tensor g_gate = tanh_op(slice(g, 1, 2 * hidden, 3 * hidden, tape), tape);
                Tensor o_gate = sigmoid(slice(g, 1, 3 * hidden, 4 * hidden, tape), tape);
                c = add(elementwise_mul(f_gate, c, tape), elementwise_mul(i_gate, g_gate, tape),
                        tape);
                h = elementwise_mul(o_gate, tanh_op(c, tape), tape);
            } else {
                // r = sig(xr + hr); z = sig(xz + hz); n = tanh(xn + r*hn)
                Tensor xr = slice(xg_t, 1, 0, hidden, tape);
                Tensor xz = slice(xg_t, 1, hidden, 2 * hidden, tape);
                Tensor xn = slice(xg_t, 1, 2 * hidden, 3 * hidden, tape);
                Tensor hr = slice(hg, 1, 0, hidden, tape);
                Tensor hz = slice(hg, 1, hidden, 2 * hidden, tape);
                Tensor hn = slice(hg, 1, 2 * hidden, 3 * hidden, tape);
                Tensor r = sigmoid(add(xr, hr, tape), tape);
                Tensor z = sigmoid(add(xz, hz, tape), tape);
                Tensor n = tanh_op(add(xn, elementwise_mul(r, hn, tape), tape), tape);
                Tensor one_minus_z = add(scalar_mul(z, -1.0, tape), ones, tape);
                h = add(elementwise_mul(one_minus_z, n, tape), elementwise_mul(z, h, tape), tape);
            }
            steps.push_back(reshape(h, {b, 1, hidden}, tape));
        }

        Tensor hs = concat(steps, 1, tape);                        // [b, t, hidden]
        Tensor flat = reshape(hs, {b * t, hidden}, tape);
        if (mode_ == Mode::train && cfg_.dropout_rate > 0.0) {
            flat = dropout(flat, cfg_.dropout_rate, true, next_dropout_seed(), tape);
        }
        return add(matmul(flat, p(head_w_), tape), p(head_b_), tape);
    }

private:
    size_t add_param(const std::string& name, Shape shape, Init init) {
        Model::add_param(name, std::move(shape), init);
        return params_.size() - 1;
    }

    Tensor& p(size_t idx) { return params_[idx].value; }

    size_t embed_ = 0, w_ih_ = 0, b_ih_ = 0, w_hh_ = 0, b_hh_ = 0, head_w_ = 0, head_b_ = 0;
};

}  // namespace complab
