#pragma once

#include <memory>

#include "complab/model.hpp"
#include "complab/rnn.hpp"
#include "complab/transformer.hpp"

namespace complab {

inline std::unique_ptr<Model> build_model(const ModelConfig& cfg) {
    cfg.validate();
    require(cfg.variant == Variant::full || cfg.family == Family::transformer, Errc::config,
            "variants other than full require the transformer family");
    if (cfg.family == Family::transformer) {
        return std::make_unique<TransformerModel>(cfg);
    }
    return std::make_unique<RnnModel>(cfg);
}

}  // namespace complab
