#include <catch2/catch_amalgamated.hpp>

#include <cstring>

#include "complab/modelzoo.hpp"
#include "complab/optim.hpp"

using namespace complab;

namespace {

std::vector<Parameter> one_param(std::vector<double> values) {
    Tensor t = Tensor::from_vector({static_cast<int64_t>(values.size())}, values);
    t.requires_grad = true;
    return {Parameter{"p", t}};
}

std::vector<Tensor> grad_of(std::vector<double> values) {
    return {Tensor::from_vector({static_cast<int64_t>(values.size())}, values)};
}

}  // namespace

TEST_CASE("optimizer presets carry the published hyperparameters") {
    OptimizerConfig adam = OptimizerConfig::preset("adam");
    CHECK(adam.kind == OptKind::adam);
    CHECK(adam.lr == 0.001);
    CHECK(adam.beta1 == 0.9);
    CHECK(adam.beta2 == 0.999);
    CHECK(adam.weight_decay == 0.0);

    OptimizerConfig adam2 = OptimizerConfig::preset("adam_2nd");
    CHECK(adam2.lr == 0.0005);
    CHECK(adam2.beta1 == 0.01);
    CHECK(adam2.beta2 == 0.999);

    OptimizerConfig sgd = OptimizerConfig::preset("sgd_momentum");
    CHECK(sgd.lr == 0.001);
    CHECK(sgd.momentum == 0.9);

    OptimizerConfig rms = OptimizerConfig::preset("rmsprop");
    CHECK(rms.lr == 0.0001);
    CHECK(rms.alpha == 0.99);
    CHECK(rms.weight_decay == 0.01);

    OptimizerConfig adamw = OptimizerConfig::preset("adamw");
    CHECK(adamw.kind == OptKind::adamw);
    CHECK(adamw.lr == 0.001);
    CHECK(adamw.beta1 == 0.9);
    CHECK(adamw.weight_decay == 0.01);

    // the appendix lists beta1 = 0.01 for AdamW; both presets are exposed
    OptimizerConfig adamw_app = OptimizerConfig::preset("adamw_appendix");
    CHECK(adamw_app.beta1 == 0.01);
    CHECK(adamw_app.weight_decay == 0.01);

    CHECK_THROWS_MATCHES(OptimizerConfig::preset("sgd"), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == Errc::config; }));
}

TEST_CASE("SGD momentum first step moves by -lr * g") {
    auto params = one_param({1.0, -2.0});
    Optimizer opt(OptimizerConfig::preset("sgd_momentum"), params);
    opt.step(params, grad_of({0.5, -0.25}));
    CHECK(params[0].value.values()[0] == Catch::Approx(1.0 - 0.001 * 0.5).margin(1e-15));
    CHECK(params[0].value.values()[1] == Catch::Approx(-2.0 + 0.001 * 0.25).margin(1e-15));
}

TEST_CASE("Adam first step fully bias-corrects") {
    auto params = one_param({0.0, 0.0});
    OptimizerConfig cfg = OptimizerConfig::preset("adam");
    Optimizer opt(cfg, params);
    const double g0 = 3.0, g1 = -0.5;
    opt.step(params, grad_of({g0, g1}));
    // m_hat = g, v_hat = g^2 -> delta = -lr * g / (|g| + eps)
    CHECK(params[0].value.values()[0] ==
          Catch::Approx(-cfg.lr * g0 / (std::abs(g0) + cfg.eps)).margin(1e-15));
    CHECK(params[0].value.values()[1] ==
          Catch::Approx(-cfg.lr * g1 / (std::abs(g1) + cfg.eps)).margin(1e-15));
    CHECK(opt.step_count() == 1);
}

TEST_CASE("AdamW with zero gradients is pure decoupled decay") {
    auto params = one_param({2.0});
    OptimizerConfig cfg = OptimizerConfig::preset("adamw");
    Optimizer opt(cfg, params);
    double expect = 2.0;
    for (int i = 0; i < 5; ++i) {
        opt.step(params, grad_of({0.0}));
        expect *= 1.0 - cfg.lr * cfg.weight_decay;
    }
    CHECK(params[0].value.values()[0] == Catch::Approx(expect).margin(1e-15));
}

TEST_CASE("Adam and AdamW agree exactly at zero weight decay") {
    OptimizerConfig a = OptimizerConfig::preset("adam");
    OptimizerConfig w = OptimizerConfig::preset("adamw");
    w.weight_decay = 0.0;

    auto pa = one_param({0.3, -1.2, 0.9});
    auto pw = one_param({0.3, -1.2, 0.9});
    Optimizer oa(a, pa), ow(w, pw);
    Rng rng(3);
    for (int step = 0; step < 10; ++step) {
        std::vector<double> g = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        oa.step(pa, grad_of(g));
        ow.step(pw, grad_of(g));
    }
    CHECK(std::memcmp(pa[0].value.data(), pw[0].value.data(), 3 * sizeof(double)) == 0);
}

TEST_CASE("RMSprop keeps eps inside the root and decays decoupled") {
    OptimizerConfig cfg = OptimizerConfig::preset("rmsprop");
    auto params = one_param({1.0});
    Optimizer opt(cfg, params);
    const double g = 0.2;
    opt.step(params, grad_of({g}));
    const double decayed = 1.0 * (1.0 - cfg.lr * cfg.weight_decay);
    const double acc = (1.0 - cfg.alpha) * g * g;
    const double expect = decayed - cfg.lr * g / std::sqrt(acc + cfg.eps);
    CHECK(params[0].value.values()[0] == Catch::Approx(expect).margin(1e-15));
}

TEST_CASE("NaN gradients poison the step") {
    auto params = one_param({1.0});
    Optimizer opt(OptimizerConfig::preset("adam"), params);
    CHECK_THROWS_MATCHES(opt.step(params, grad_of({std::nan("")})), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == Errc::poisoned_state; }));
}

TEST_CASE("invalid coefficients are rejected") {
    OptimizerConfig bad = OptimizerConfig::preset("adam");
    bad.beta2 = 1.0;
    CHECK_THROWS_MATCHES(bad.validate(), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == Errc::config; }));
    bad = OptimizerConfig::preset("adam");
    bad.lr = 0.0;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("identical seeds give bit-identical training trajectories") {
    auto run = [](const std::string& preset) {
        ModelConfig mc;
        mc.family = Family::transformer;
        mc.d = 8;
        mc.layers = 2;
        mc.heads = 4;
        mc.dropout_rate = 0.1;
        mc.vocab_size = 5;
        mc.length = 5;
        mc.seed = 11;
        auto model = build_model(mc);
        Optimizer opt(OptimizerConfig::preset(preset), model->parameters());
        Rng data_rng(99);
        for (int step = 0; step < 4; ++step) {
            TokenBatch b;
            b.rows = 16;
            b.cols = 6;
            for (int64_t r = 0; r < 16; ++r) {
                b.tokens.push_back(mc.start_token());
                for (int j = 0; j < 5; ++j) {
                    b.tokens.push_back(static_cast<int32_t>(data_rng.below(5)));
                }
            }
            Tape tape;
            Tensor loss = model->forward_train(b, tape);
            tape.backward(loss);
            std::vector<Tensor> grads;
            for (Parameter& p : model->parameters()) {
                const Tensor* g = tape.grad(p.value);
                grads.push_back(g ? *g : Tensor());
            }
            opt.step(model->parameters(), grads);
        }
        std::vector<double> flat;
        for (const Parameter& p : model->parameters()) {
            flat.insert(flat.end(), p.value.values().begin(), p.value.values().end());
        }
        return flat;
    };
    for (const char* preset : {"adam", "sgd_momentum", "rmsprop", "adamw"}) {
        const auto a = run(preset);
        const auto b = run(preset);
        CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
    }
}
