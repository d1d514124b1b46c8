#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <sstream>

#include "complab/exact.hpp"
#include "complab/modelzoo.hpp"

using namespace complab;

namespace {

ModelConfig small_tf(Variant variant = Variant::full, bool routed = false, int64_t d = 8,
                     int64_t layers = 2) {
    ModelConfig cfg;
    cfg.family = Family::transformer;
    cfg.d = d;
    cfg.layers = layers;
    cfg.heads = 4;
    cfg.variant = variant;
    cfg.routed = routed;
    cfg.dropout_rate = 0.0;
    cfg.vocab_size = 5;
    cfg.length = 5;
    cfg.seed = 42;
    return cfg;
}

TokenBatch train_batch(const ModelConfig& cfg, std::vector<std::vector<int32_t>> seqs) {
    TokenBatch b;
    b.rows = static_cast<int64_t>(seqs.size());
    b.cols = cfg.length + 1;
    for (const auto& s : seqs) {
        b.tokens.push_back(cfg.start_token());
        b.tokens.insert(b.tokens.end(), s.begin(), s.end());
    }
    return b;
}

int64_t expected_tf_params(int64_t v, int64_t d, int64_t layers, Variant variant, bool routed,
                           int64_t heads) {
    const int64_t dh = 4 * d;
    const int64_t attn = 4 * d * d + (routed ? d * d + d * (heads + 1) : 0) + 2 * d;
    const int64_t ffn = d * dh + dh + dh * d + d + 2 * d;
    int64_t attn_layers = variant == Variant::ffn_main ? 1 : layers;
    int64_t ffn_layers = layers;
    if (variant == Variant::attention_only) {
        ffn_layers = 0;
    } else if (variant == Variant::attention_main) {
        ffn_layers = 1;
    }
    return (v + 1) * d + attn_layers * attn + ffn_layers * ffn + d * v + v;
}

}  // namespace

TEST_CASE("transformer parameter counts match the hand formula") {
    {
        ModelConfig cfg = small_tf(Variant::full, false, 64, 5);
        auto m = build_model(cfg);
        CHECK(m->parameter_count() == expected_tf_params(5, 64, 5, Variant::full, false, 4));
        CHECK(m->parameter_count() == 249349);
    }
    for (Variant v : {Variant::attention_only, Variant::attention_main, Variant::ffn_main}) {
        ModelConfig cfg = small_tf(v, false, 16, 3);
        auto m = build_model(cfg);
        CHECK(m->parameter_count() == expected_tf_params(5, 16, 3, v, false, 4));
    }
    {
        ModelConfig cfg = small_tf(Variant::full, true, 16, 3);
        auto m = build_model(cfg);
        CHECK(m->parameter_count() == expected_tf_params(5, 16, 3, Variant::full, true, 4));
    }
}

TEST_CASE("variant pruning removes whole sublayers") {
    auto names_of = [](Model& m) {
        std::vector<std::string> names;
        for (const Parameter& p : m.parameters()) {
            names.push_back(p.name);
        }
        return names;
    };

    auto ao = build_model(small_tf(Variant::attention_only, false, 8, 3));
    for (const std::string& n : names_of(*ao)) {
        CHECK(n.find(".ffn") == std::string::npos);
    }

    auto am = build_model(small_tf(Variant::attention_main, false, 8, 3));
    for (const std::string& n : names_of(*am)) {
        if (n.find(".ffn") != std::string::npos) {
            CHECK(n.find("layers.2.") == 0);
        }
    }

    auto fm = build_model(small_tf(Variant::ffn_main, false, 8, 3));
    for (const std::string& n : names_of(*fm)) {
        if (n.find(".attn") != std::string::npos || n.find(".router") != std::string::npos) {
            CHECK(n.find("layers.0.") == 0);
        }
    }
}

TEST_CASE("config validation") {
    ModelConfig gru2;
    gru2.family = Family::gru;
    gru2.layers = 2;
    CHECK_THROWS_MATCHES(build_model(gru2), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == Errc::config; }));

    ModelConfig bad_heads = small_tf();
    bad_heads.d = 10;  // not divisible by 4
    CHECK_THROWS_MATCHES(build_model(bad_heads), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == Errc::config; }));

    CHECK_THROWS_MATCHES(variant_from_string("ffn_only"), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.code() == Errc::unsupported_variant;
                         }));
}

TEST_CASE("fresh model loss is near ln V") {
    for (Family f : {Family::transformer, Family::gru, Family::lstm}) {
        ModelConfig cfg = small_tf();
        cfg.family = f;
        if (f != Family::transformer) {
            cfg.layers = 1;
        }
        auto m = build_model(cfg);
        TokenBatch batch = train_batch(cfg, {{0, 1, 2, 3, 4}, {1, 1, 2, 0, 3}, {4, 2, 0, 1, 2}});
        Tape tape;
        const double loss = m->forward_train(batch, tape).item();
        CHECK(std::abs(loss - std::log(5.0)) < 0.3);
    }
}

TEST_CASE("batch of identical rows matches the single-row loss") {
    ModelConfig cfg = small_tf();
    auto m1 = build_model(cfg);
    auto m4 = build_model(cfg);

    TokenBatch one = train_batch(cfg, {{2, 0, 1, 4, 3}});
    TokenBatch four = train_batch(cfg, {{2, 0, 1, 4, 3}, {2, 0, 1, 4, 3}, {2, 0, 1, 4, 3},
                                        {2, 0, 1, 4, 3}});
    Tape t1, t4;
    const double l1 = m1->forward_train(one, t1).item();
    const double l4 = m4->forward_train(four, t4).item();
    CHECK(l1 == Catch::Approx(l4).margin(1e-14));
}

TEST_CASE("causal invariance: future tokens cannot move earlier rows") {
    for (bool routed : {false, true}) {
        ModelConfig cfg = small_tf(Variant::full, routed);
        auto m = build_model(cfg);
        m->set_mode(Mode::eval);

        TokenBatch a;
        a.rows = 1;
        a.cols = 5;
        a.tokens = {cfg.start_token(), 0, 1, 2, 3};
        TokenBatch b = a;
        b.tokens[4] = 4;  // perturb position 4 of the input

        Tensor ra = m->forward_rows_eval(a);
        Tensor rb = m->forward_rows_eval(b);
        // rows 0..3 must be bit-identical
        CHECK(std::memcmp(ra.data(), rb.data(), sizeof(double) * 4 * 5) == 0);
        // row 4 must differ (the perturbation is visible there)
        CHECK(std::memcmp(ra.data() + 4 * 5, rb.data() + 4 * 5, sizeof(double) * 5) != 0);
    }
}

TEST_CASE("next_dist rows are normalized, positive, deterministic") {
    ModelConfig cfg = small_tf();
    auto m = build_model(cfg);
    m->set_mode(Mode::eval);

    // all 781 prefixes of the 5^5 space
    std::vector<double> row(5), row2(5);
    std::vector<int32_t> prefix;
    int64_t checked = 0;
    for (int64_t len = 0; len <= 4; ++len) {
        int64_t count = 1;
        for (int64_t i = 0; i < len; ++i) {
            count *= 5;
        }
        for (int64_t value = 0; value < count; ++value) {
            prefix.assign(static_cast<size_t>(len), 0);
            int64_t v = value;
            for (int64_t i = len; i-- > 0;) {
                prefix[static_cast<size_t>(i)] = static_cast<int32_t>(v % 5);
                v /= 5;
            }
            m->next_dist(prefix, row);
            double sum = 0.0;
            for (double p : row) {
                CHECK(p > 0.0);
                sum += p;
            }
            CHECK(std::abs(sum - 1.0) <= 1e-9);
            ++checked;
        }
    }
    CHECK(checked == 781);

    prefix = {3, 1};
    m->next_dist(prefix, row);
    m->next_dist(prefix, row2);
    CHECK(std::memcmp(row.data(), row2.data(), sizeof(double) * 5) == 0);

    const std::vector<int32_t> too_long = {0, 1, 2, 3, 4};
    CHECK_THROWS_MATCHES(m->next_dist(too_long, row), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == Errc::range; }));
}

TEST_CASE("zeroed projection head yields uniform rows") {
    ModelConfig cfg = small_tf();
    auto m = build_model(cfg);
    for (const char* name : {"head.weight", "head.bias"}) {
        Parameter* p = m->find_param(name);
        REQUIRE(p != nullptr);
        std::fill(p->value.data(), p->value.data() + p->value.size(), 0.0);
    }
    m->set_mode(Mode::eval);
    std::vector<double> row(5);
    m->next_dist(std::vector<int32_t>{2, 4}, row);
    for (double p : row) {
        CHECK(p == Catch::Approx(0.2).margin(1e-15));
    }
}

TEST_CASE("routed combination: synthetic weights") {
    const int64_t n = 3, d = 4, h = 2;
    Rng rng(5);
    std::vector<Tensor> heads;
    for (int64_t k = 0; k < h; ++k) {
        heads.push_back(Tensor::uniform({n, d}, -1, 1, rng));
    }
    Tensor x = Tensor::uniform({n, d}, -1, 1, rng);
    Tensor ones = Tensor::full({1, d}, 1.0);

    // residual weight forced to 1: output is exactly x
    Tensor rw = Tensor::zeros({n, h + 1});
    for (int64_t r = 0; r < n; ++r) {
        rw.at({r, h}) = 1.0;
    }
    Tensor out = routed_combine(heads, x, rw, ones, nullptr);
    CHECK(std::memcmp(out.data(), x.data(), sizeof(double) * static_cast<size_t>(x.size())) == 0);

    // equal weights: the plain mean of heads and residual
    Tensor eq = Tensor::full({n, h + 1}, 1.0 / 3.0);
    Tensor mix = routed_combine(heads, x, eq, ones, nullptr);
    for (int64_t r = 0; r < n; ++r) {
        for (int64_t c = 0; c < d; ++c) {
            const double expect =
                (heads[0].at({r, c}) + heads[1].at({r, c}) + x.at({r, c})) / 3.0;
            CHECK(mix.at({r, c}) == Catch::Approx(expect).margin(1e-15));
        }
    }
}

TEST_CASE("zeroed router output layer emits exactly 1/(h+1) everywhere") {
    ModelConfig cfg = small_tf(Variant::full, true);
    auto m = build_model(cfg);
    for (int64_t l = 0; l < cfg.layers; ++l) {
        Parameter* p = m->find_param("layers." + std::to_string(l) + ".router.w2");
        REQUIRE(p != nullptr);
        std::fill(p->value.data(), p->value.data() + p->value.size(), 0.0);
    }
    m->set_mode(Mode::eval);

    struct Sink : TapSink {
        std::vector<Tensor> weights;
        void router_weights(int64_t, const Tensor& w) override { weights.push_back(w); }
    } sink;

    TokenBatch b;
    b.rows = 2;
    b.cols = 5;
    b.tokens = {5, 0, 1, 2, 3, 5, 4, 3, 2, 1};
    m->forward_rows_eval(b, &sink);
    REQUIRE(sink.weights.size() == 2);
    for (const Tensor& w : sink.weights) {
        for (double v : w.values()) {
            CHECK(v == 0.2);
        }
    }
}

TEST_CASE("router weights lie on the simplex for every token") {
    ModelConfig cfg = small_tf(Variant::full, true);
    auto m = build_model(cfg);
    m->set_mode(Mode::eval);

    struct Sink : TapSink {
        double worst = 0.0;
        double min_w = 1.0;
        void router_weights(int64_t, const Tensor& w) override {
            const int64_t paths = w.dim(1);
            for (int64_t r = 0; r < w.dim(0); ++r) {
                double sum = 0.0;
                for (int64_t c = 0; c < paths; ++c) {
                    min_w = std::min(min_w, w.at({r, c}));
                    sum += w.at({r, c});
                }
                worst = std::max(worst, std::abs(sum - 1.0));
            }
        }
    } sink;

    TokenBatch b;
    b.rows = 4;
    b.cols = 5;
    b.tokens = {5, 0, 1, 2, 3, 5, 4, 3, 2, 1, 5, 0, 0, 0, 0, 5, 4, 4, 4, 4};
    m->forward_rows_eval(b, &sink);
    CHECK(sink.worst <= 1e-12);
    CHECK(sink.min_w >= 0.0);
}

TEST_CASE("FFN key-value sum equals the two-matrix form") {
    ModelConfig cfg = small_tf();
    auto m = build_model(cfg);
    Tensor& w1 = m->find_param("layers.0.ffn.w1")->value;   // [d, dh]
    Tensor& b1 = m->find_param("layers.0.ffn.b1")->value;   // [dh]
    Tensor& w2 = m->find_param("layers.0.ffn.w2")->value;   // [dh, d]
    Tensor& b2 = m->find_param("layers.0.ffn.b2")->value;   // [d]

    Rng rng(9);
    const int64_t n = 6, d = cfg.d, dh = cfg.hidden();
    Tensor x = Tensor::uniform({n, d}, -2, 2, rng);

    Tensor matrix_form = add(matmul(relu(add(matmul(x, w1, nullptr), b1, nullptr), nullptr), w2,
                                    nullptr), b2, nullptr);

    // key-value route: sum_i max(x.k_i + b1_i, 0) v_i + b2
    for (int64_t r = 0; r < n; ++r) {
        for (int64_t c = 0; c < d; ++c) {
            double acc = b2.at({c});
            for (int64_t i = 0; i < dh; ++i) {
                double pre = b1.at({i});
                for (int64_t j = 0; j < d; ++j) {
                    pre += x.at({r, j}) * w1.at({j, i});
                }
                acc += std::max(pre, 0.0) * w2.at({i, c});
            }
            CHECK(std::abs(acc - matrix_form.at({r, c})) < 1e-12);
        }
    }
}

TEST_CASE("end-to-end gradients match finite differences") {
    struct Case {
        Family family;
        bool routed;
        int layers;
    };
    for (const Case tc : {Case{Family::transformer, false, 2}, Case{Family::transformer, true, 2},
                          Case{Family::gru, false, 1}, Case{Family::lstm, false, 1}}) {
        ModelConfig cfg = small_tf(Variant::full, tc.routed, 8, tc.layers);
        cfg.family = tc.family;
        auto m = build_model(cfg);

        TokenBatch batch = train_batch(cfg, {{0, 1, 2, 3, 4}, {4, 3, 2, 1, 0}, {1, 1, 1, 1, 1}});
        Tape tape;
        Tensor loss = m->forward_train(batch, tape);
        tape.backward(loss);

        // collect before any further forward re-watches the leaves
        std::vector<const Tensor*> grads;
        for (Parameter& p : m->parameters()) {
            grads.push_back(tape.grad(p.value));
        }

        auto loss_value = [&]() {
            Tape t2;
            return m->forward_train(batch, t2).item();
        };

        Rng pick(77);
        double worst = 0.0;
        for (int probe = 0; probe < 50; ++probe) {
            auto& params = m->parameters();
            const size_t pi = pick.below(params.size());
            Parameter& p = params[pi];
            const int64_t e = static_cast<int64_t>(pick.below(static_cast<uint64_t>(p.value.size())));
            const Tensor* g = grads[pi];
            REQUIRE(g != nullptr);

            const double h = 1e-6;
            const double saved = p.value.data()[e];
            p.value.data()[e] = saved + h;
            const double up = loss_value();
            p.value.data()[e] = saved - h;
            const double down = loss_value();
            p.value.data()[e] = saved;
            const double fd = (up - down) / (2 * h);
            const double a = g->data()[e];
            worst = std::max(worst, std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)}));
        }
        INFO("family " << static_cast<int>(tc.family) << " routed " << tc.routed);
        CHECK(worst < 1e-3);
    }
}

TEST_CASE("checkpoint round trip is bit exact") {
    ModelConfig cfg = small_tf(Variant::full, true);
    auto m = build_model(cfg);
    std::stringstream ss;
    m->save_checkpoint(ss);

    // wreck the weights, then restore
    auto m2 = build_model(cfg);
    for (Parameter& p : m2->parameters()) {
        std::fill(p.value.data(), p.value.data() + p.value.size(), 7.5);
    }
    m2->load_checkpoint(ss);
    for (size_t i = 0; i < m->parameters().size(); ++i) {
        const Tensor& a = m->parameters()[i].value;
        const Tensor& b = m2->parameters()[i].value;
        CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<size_t>(a.size())) == 0);
    }

    // wrong architecture fails closed
    auto m3 = build_model(small_tf(Variant::full, false));
    std::stringstream ss2;
    m->save_checkpoint(ss2);
    CHECK_THROWS_AS(m3->load_checkpoint(ss2), Error);
}

TEST_CASE("training forwards expose taps") {
    ModelConfig cfg = small_tf(Variant::full, true);
    cfg.dropout_rate = 0.1;
    auto m = build_model(cfg);

    struct Sink : TapSink {
        int64_t preacts = 0;
        int64_t routers = 0;
        void ffn_preact(int64_t, const Tensor& pre) override {
            preacts += 1;
            CHECK(pre.dim(1) == 32);  // d_hidden = 4d
        }
        void router_weights(int64_t, const Tensor& w) override {
            routers += 1;
            CHECK(w.dim(1) == 5);  // h+1 paths
        }
    } sink;

    TokenBatch batch = train_batch(cfg, {{0, 1, 2, 3, 4}, {4, 3, 2, 1, 0}});
    Tape tape;
    m->forward_train(batch, tape, &sink);
    CHECK(sink.preacts == cfg.layers);
    CHECK(sink.routers == cfg.layers);
}

TEST_CASE("forward row counter tracks sequences") {
    ModelConfig cfg = small_tf();
    auto m = build_model(cfg);
    m->set_mode(Mode::eval);
    TokenBatch b;
    b.rows = 3;
    b.cols = 5;
    b.tokens.assign(15, 0);
    for (int64_t r = 0; r < 3; ++r) {
        b.tokens[static_cast<size_t>(r * 5)] = cfg.start_token();
    }
    const int64_t before = m->forward_rows();
    m->forward_rows_eval(b);
    CHECK(m->forward_rows() - before == 3);
}
