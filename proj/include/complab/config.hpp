#pragma once

// Flat key-value run configuration with dotted section names. Parsing is
// strict: unknown keys are rejected rather than ignored, so a typo cannot
// silently revert a field to its default. Unspecified fields take the
// defaults baked in below (65,536 samples, batch 512, 100 epochs, dropout
// 0.1, Adam preset).

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "complab/model.hpp"
#include "complab/optim.hpp"
#include "complab/probes.hpp"
#include "complab/target.hpp"

namespace complab {

struct RunConfig {
    TargetSpec target;                     // vocab 5, length 5, pattern .8/.2, seed 0
    int64_t sample_count = 65536;
    uint64_t sample_seed = 1;
    ModelConfig model;                     // transformer d=64 L=5 h=4 full
    std::string optimizer_preset = "adam";
    OptimizerConfig optimizer = OptimizerConfig::preset("adam");
    int64_t epochs = 100;
    int64_t batch_size = 512;
    uint64_t shuffle_seed = 1;
    int64_t checkpoint_every = 0;          // 0: final checkpoint only
    int64_t census_every = 1;
    double spike_rise = kSpikeRiseNats;
    int64_t spike_lookback = kSpikeLookback;
    double jump_threshold = kJumpThreshold;
    int64_t pair_window = kPairWindow;
    int64_t tail_epochs = kTailEpochs;
    int64_t smooth_window = kSmoothWindow;
    int64_t enumeration_cap = kDefaultEnumerationCap;
    std::string output_dir = "run";

    void validate() const {
        target.validate();
        ModelConfig m = model;
        m.vocab_size = target.vocab_size;
        m.length = target.length;
        m.validate();
        optimizer.validate();
        require(sample_count >= 1, Errc::config, "dataset.sample_count must be >= 1");
        require(epochs >= 1, Errc::config, "training.epochs must be >= 1");
        require(batch_size >= 1, Errc::config, "training.batch_size must be >= 1");
        require(census_every >= 1, Errc::config, "probes.census_every must be >= 1");
        require(tail_epochs >= 1 && tail_epochs <= epochs, Errc::config,
                "probes.tail_epochs must fit the training run");
        require(smooth_window >= 1 && smooth_window % 2 == 1, Errc::config,
                "probes.smooth_window must be odd");
        require(!output_dir.empty(), Errc::config, "output.dir must be set");
    }

    // model config with the vocabulary/length filled in from the target
    ModelConfig resolved_model() const {
        ModelConfig m = model;
        m.vocab_size = target.vocab_size;
        m.length = target.length;
        return m;
    }
};

namespace detail {

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string trim(const std::string& s) {
    const size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) {
        return "";
    }
    const size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

struct ConfigReader {
    std::map<std::string, std::string> kv;

    bool take(const std::string& key, std::string& out) {
        const auto it = kv.find(key);
        if (it == kv.end()) {
            return false;
        }
        out = it->second;
        kv.erase(it);
        return true;
    }

    template <class T>
    void integer(const std::string& key, T& out) {
        std::string v;
        if (!take(key, v)) {
            return;
        }
        try {
            if constexpr (std::is_unsigned_v<T>) {
                out = static_cast<T>(std::stoull(v));
            } else {
                out = static_cast<T>(std::stoll(v));
            }
        } catch (const std::exception&) {
            fail(Errc::config, "bad integer for " + key + ": " + v);
        }
    }

    void real(const std::string& key, double& out) {
        std::string v;
        if (!take(key, v)) {
            return;
        }
        try {
            out = std::stod(v);
        } catch (const std::exception&) {
            fail(Errc::config, "bad real for " + key + ": " + v);
        }
    }

    void boolean(const std::string& key, bool& out) {
        std::string v;
        if (!take(key, v)) {
            return;
        }
        if (v == "true" || v == "1") {
            out = true;
        } else if (v == "false" || v == "0") {
            out = false;
        } else {
            fail(Errc::config, "bad boolean for " + key + ": " + v);
        }
    }

    void text(const std::string& key, std::string& out) { take(key, out); }

    void real_list(const std::string& key, std::vector<double>& out) {
        std::string v;
        if (!take(key, v)) {
            return;
        }
        out.clear();
        std::string item;
        std::istringstream ss(v);
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty()) {
                continue;
            }
            try {
                out.push_back(std::stod(item));
            } catch (const std::exception&) {
                fail(Errc::config, "bad list entry for " + key + ": " + item);
            }
        }
        require(!out.empty(), Errc::config, "empty list for " + key);
    }
};

}  // namespace detail

inline RunConfig parse_config(std::istream& is) {
    detail::ConfigReader r;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        line = detail::trim(line);
        if (line.empty()) {
            continue;
        }
        const size_t eq = line.find('=');
        require(eq != std::string::npos, Errc::strict_parse,
                "line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        require(!key.empty() && !value.empty(), Errc::strict_parse,
                "line " + std::to_string(line_no) + ": empty key or value");
        require(r.kv.find(key) == r.kv.end(), Errc::strict_parse, "duplicate key: " + key);
        r.kv[key] = value;
    }

    RunConfig c;
    r.integer("target.vocab_size", c.target.vocab_size);
    r.integer("target.length", c.target.length);
    r.real_list("target.pattern", c.target.pattern);
    r.integer("target.seed", c.target.seed);
    r.integer("dataset.sample_count", c.sample_count);
    r.integer("dataset.sample_seed", c.sample_seed);

    std::string family, variant;
    r.text("model.family", family);
    if (!family.empty()) {
        c.model.family = family_from_string(family);
    }
    r.integer("model.d", c.model.d);
    r.integer("model.layers", c.model.layers);
    r.integer("model.heads", c.model.heads);
    r.integer("model.d_hidden", c.model.d_hidden);
    r.text("model.variant", variant);
    if (!variant.empty()) {
        c.model.variant = variant_from_string(variant);
    }
    r.boolean("model.routed", c.model.routed);
    r.real("model.dropout", c.model.dropout_rate);
    r.integer("model.seed", c.model.seed);

    std::string preset;
    r.text("optimizer.preset", preset);
    if (!preset.empty()) {
        c.optimizer_preset = preset;
        c.optimizer = OptimizerConfig::preset(preset);
    }
    r.real("optimizer.lr", c.optimizer.lr);
    r.real("optimizer.beta1", c.optimizer.beta1);
    r.real("optimizer.beta2", c.optimizer.beta2);
    r.real("optimizer.momentum", c.optimizer.momentum);
    r.real("optimizer.alpha", c.optimizer.alpha);
    r.real("optimizer.eps", c.optimizer.eps);
    r.real("optimizer.weight_decay", c.optimizer.weight_decay);

    r.integer("training.epochs", c.epochs);
    r.integer("training.batch_size", c.batch_size);
    r.integer("training.shuffle_seed", c.shuffle_seed);
    r.integer("training.checkpoint_every", c.checkpoint_every);

    r.integer("probes.census_every", c.census_every);
    const bool tail_given = r.kv.count("probes.tail_epochs") > 0;
    r.real("probes.spike_rise", c.spike_rise);
    r.integer("probes.spike_lookback", c.spike_lookback);
    r.real("probes.jump_threshold", c.jump_threshold);
    r.integer("probes.pair_window", c.pair_window);
    r.integer("probes.tail_epochs", c.tail_epochs);
    r.integer("probes.smooth_window", c.smooth_window);
    r.integer("probes.enumeration_cap", c.enumeration_cap);

    r.text("output.dir", c.output_dir);

    // the default tail shrinks to fit short runs; explicit values are strict
    if (!tail_given && c.epochs < c.tail_epochs) {
        c.tail_epochs = c.epochs;
    }

    if (!r.kv.empty()) {
        fail(Errc::strict_parse, "unknown key: " + r.kv.begin()->first);
    }
    c.validate();
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), Errc::io, "cannot open config: " + path);
    return parse_config(in);
}

// Writes every effective key so the stored copy reruns bit-exactly.
inline void write_config(const RunConfig& c, std::ostream& os) {
    os << "target.vocab_size = " << c.target.vocab_size << "\n";
    os << "target.length = " << c.target.length << "\n";
    os << "target.pattern = ";
    for (size_t i = 0; i < c.target.pattern.size(); ++i) {
        os << detail::fmt_double(c.target.pattern[i]) << (i + 1 < c.target.pattern.size() ? "," : "");
    }
    os << "\n";
    os << "target.seed = " << c.target.seed << "\n";
    os << "dataset.sample_count = " << c.sample_count << "\n";
    os << "dataset.sample_seed = " << c.sample_seed << "\n";
    os << "model.family = " << to_string(c.model.family) << "\n";
    os << "model.d = " << c.model.d << "\n";
    os << "model.layers = " << c.model.layers << "\n";
    os << "model.heads = " << c.model.heads << "\n";
    os << "model.d_hidden = " << c.model.d_hidden << "\n";
    os << "model.variant = " << to_string(c.model.variant) << "\n";
    os << "model.routed = " << (c.model.routed ? "true" : "false") << "\n";
    os << "model.dropout = " << detail::fmt_double(c.model.dropout_rate) << "\n";
    os << "model.seed = " << c.model.seed << "\n";
    os << "optimizer.preset = " << c.optimizer_preset << "\n";
    os << "optimizer.lr = " << detail::fmt_double(c.optimizer.lr) << "\n";
    os << "optimizer.beta1 = " << detail::fmt_double(c.optimizer.beta1) << "\n";
    os << "optimizer.beta2 = " << detail::fmt_double(c.optimizer.beta2) << "\n";
    os << "optimizer.momentum = " << detail::fmt_double(c.optimizer.momentum) << "\n";
    os << "optimizer.alpha = " << detail::fmt_double(c.optimizer.alpha) << "\n";
    os << "optimizer.eps = " << detail::fmt_double(c.optimizer.eps) << "\n";
    os << "optimizer.weight_decay = " << detail::fmt_double(c.optimizer.weight_decay) << "\n";
    os << "training.epochs = " << c.epochs << "\n";
    os << "training.batch_size = " << c.batch_size << "\n";
    os << "training.shuffle_seed = " << c.shuffle_seed << "\n";
    os << "training.checkpoint_every = " << c.checkpoint_every << "\n";
    os << "probes.census_every = " << c.census_every << "\n";
    os << "probes.spike_rise = " << detail::fmt_double(c.spike_rise) << "\n";
    os << "probes.spike_lookback = " << c.spike_lookback << "\n";
    os << "probes.jump_threshold = " << detail::fmt_double(c.jump_threshold) << "\n";
    os << "probes.pair_window = " << c.pair_window << "\n";
    os << "probes.tail_epochs = " << c.tail_epochs << "\n";
    os << "probes.smooth_window = " << c.smooth_window << "\n";
    os << "probes.enumeration_cap = " << c.enumeration_cap << "\n";
    os << "output.dir = " << c.output_dir << "\n";
}

inline std::string config_text(const RunConfig& c) {
    std::ostringstream ss;
    write_config(c, ss);
    return ss.str();
}

}  // namespace complab
