#pragma once

// The optimizer ablation set: SGD+momentum, RMSprop, Adam, AdamW, plus the
// Adam_2nd and appendix-AdamW presets. Weight decay, where configured, is
// decoupled (applied directly to parameters). Bias correction is 1-indexed:
// the first step fully corrects.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "complab/model.hpp"
#include "complab/tensor.hpp"

namespace complab {

enum class OptKind { sgd_momentum, rmsprop, adam, adamw };

inline std::string to_string(OptKind k) {
    switch (k) {
        case OptKind::sgd_momentum: return "sgd_momentum";
        case OptKind::rmsprop: return "rmsprop";
        case OptKind::adam: return "adam";
        case OptKind::adamw: return "adamw";
    }
    return "?";
}

struct OptimizerConfig {
    OptKind kind = OptKind::adam;
    double lr = 1e-3;
    double beta1 = 0.9;      // adam family first moment
    double beta2 = 0.999;    // adam family second moment
    double momentum = 0.9;   // sgd
    double alpha = 0.99;     // rmsprop smoothing
    double eps = 1e-8;
    double weight_decay = 0.0;

    void validate() const {
        require(lr > 0.0, Errc::config, "learning rate must be positive");
        auto coeff = [](double v) { return v >= 0.0 && v < 1.0; };
        require(coeff(beta1) && coeff(beta2) && coeff(momentum) && coeff(alpha), Errc::config,
                "decay/averaging coefficients must lie in [0,1)");
        require(eps > 0.0, Errc::config, "eps must be positive");
        require(weight_decay >= 0.0, Errc::config, "weight decay must be nonnegative");
    }

    // named presets used throughout the optimizer comparison
    static OptimizerConfig preset(const std::string& name) {
        OptimizerConfig c;
        if (name == "adam") {
            c.kind = OptKind::adam;
            c.lr = 1e-3;
            c.beta1 = 0.9;
            c.beta2 = 0.999;
        } else if (name == "adam_2nd") {
            c.kind = OptKind::adam;
            c.lr = 5e-4;
            c.beta1 = 0.01;
            c.beta2 = 0.999;
        } else if (name == "sgd_momentum") {
            c.kind = OptKind::sgd_momentum;
            c.lr = 1e-3;
            c.momentum = 0.9;
        } else if (name == "rmsprop") {
            c.kind = OptKind::rmsprop;
            c.lr = 1e-4;
            c.alpha = 0.99;
            c.weight_decay = 0.01;
        } else if (name == "adamw") {
            c.kind = OptKind::adamw;
            c.lr = 1e-3;
            c.beta1 = 0.9;
            c.beta2 = 0.999;
            c.weight_decay = 0.01;
        } else if (name == "adamw_appendix") {
            c.kind = OptKind::adamw;
            c.lr = 1e-3;
            c.beta1 = 0.01;
            c.beta2 = 0.999;
            c.weight_decay = 0.01;
        } else {
            fail(Errc::config, "unknown optimizer preset: " + name);
        }
        return c;
    }
};

class Optimizer {
public:
    Optimizer(OptimizerConfig cfg, const std::vector<Parameter>& params) : cfg_(cfg) {
        cfg_.validate();
        slot1_.reserve(params.size());
        slot2_.reserve(params.size());
        for (const Parameter& p : params) {
            slot1_.push_back(Tensor::zeros(p.value.shape()));
            slot2_.push_back(Tensor::zeros(p.value.shape()));
        }
    }

    int64_t step_count() const { return step_count_; }
    const OptimizerConfig& config() const { return cfg_; }

    // Applies one update in place. `grads[i]` pairs with `params[i]`; an
    // undefined grad counts as zero.
    void step(std::vector<Parameter>& params, const std::vector<Tensor>& grads) {
        require(params.size() == grads.size() && params.size() == slot1_.size(), Errc::conformance,
                "parameter/gradient table mismatch");
        for (size_t i = 0; i < grads.size(); ++i) {
            if (!grads[i].defined()) {
                continue;
            }
            require(grads[i].shape() == params[i].value.shape(), Errc::conformance,
                    "gradient shape mismatch for " + params[i].name);
            const double* g = grads[i].data();
            for (int64_t e = 0; e < grads[i].size(); ++e) {
                if (!std::isfinite(g[e])) {
                    fail(Errc::poisoned_state,
                         "non-finite gradient for " + params[i].name + " at step " +
                             std::to_string(step_count_ + 1));
                }
            }
        }
        ++step_count_;
        const auto t = static_cast<double>(step_count_);

        for (size_t i = 0; i < params.size(); ++i) {
            Tensor& p = params[i].value;
            const int64_t n = p.size();
            double* pd = p.data();
            static const Tensor kEmpty;
            const Tensor& gt = grads[i].defined() ? grads[i] : kEmpty;
            // decoupled decay first, against the pre-update parameter
            if (cfg_.weight_decay > 0.0) {
                const double shrink = 1.0 - cfg_.lr * cfg_.weight_decay;
                for (int64_t e = 0; e < n; ++e) {
                    pd[e] *= shrink;
                }
            }
            if (!gt.defined()) {
                continue;
            }
            const double* gd = gt.data();
            switch (cfg_.kind) {
                case OptKind::sgd_momentum: {
                    double* buf = slot1_[i].data();
                    for (int64_t e = 0; e < n; ++e) {
                        buf[e] = cfg_.momentum * buf[e] + gd[e];
                        pd[e] -= cfg_.lr * buf[e];
                    }
                    break;
                }
                case OptKind::rmsprop: {
                    double* acc = slot2_[i].data();
                    for (int64_t e = 0; e < n; ++e) {
                        acc[e] = cfg_.alpha * acc[e] + (1.0 - cfg_.alpha) * gd[e] * gd[e];
                        pd[e] -= cfg_.lr * gd[e] / std::sqrt(acc[e] + cfg_.eps);
                    }
                    break;
                }
                case OptKind::adam:
                case OptKind::adamw: {
                    double* m = slot1_[i].data();
                    double* v = slot2_[i].data();
                    const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
                    const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
                    for (int64_t e = 0; e < n; ++e) {
                        m[e] = cfg_.beta1 * m[e] + (1.0 - cfg_.beta1) * gd[e];
                        v[e] = cfg_.beta2 * v[e] + (1.0 - cfg_.beta2) * gd[e] * gd[e];
                        const double mhat = m[e] / bc1;
                        const double vhat = v[e] / bc2;
                        pd[e] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
                    }
                    break;
                }
            }
        }
    }

private:
    OptimizerConfig cfg_;
    int64_t step_count_ = 0;
    std::vector<Tensor> slot1_;  // momentum / first moment
    std::vector<Tensor> slot2_;  // second moment / rmsprop accumulator
};

}  // namespace complab
