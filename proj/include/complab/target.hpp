#pragma once

// Seeded sparse target distributions over short token sequences.
//
// The first-step conditional is a probability vector drawn uniformly from
// the simplex (exponential spacings). Every later conditional places the
// fixed pattern probabilities on characters chosen uniformly without
// replacement, all other characters at exactly zero, so the joint support
// has exactly |V| * k^(n-1) sequences for a k-entry pattern.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "complab/common.hpp"
#include "complab/sequence.hpp"

namespace complab {

struct TargetSpec {
    int64_t vocab_size = 5;
    int64_t length = 5;
    std::vector<double> pattern = {0.8, 0.2};
    uint64_t seed = 0;

    void validate() const {
        require(vocab_size >= 1, Errc::spec, "vocab_size must be positive");
        require(length >= 1, Errc::spec, "length must be positive");
        require(!pattern.empty(), Errc::spec, "pattern must be nonempty");
        require(static_cast<int64_t>(pattern.size()) <= vocab_size, Errc::spec,
                "pattern longer than vocabulary");
        double sum = 0.0;
        for (double p : pattern) {
            require(p > 0.0, Errc::spec, "pattern entries must be strictly positive");
            sum += p;
        }
        require(std::abs(sum - 1.0) <= 1e-12, Errc::spec, "pattern must sum to 1");
    }
};

class TargetDistribution final : public SequenceDistribution {
public:
    static TargetDistribution build(const TargetSpec& spec) {
        spec.validate();
        TargetDistribution t;
        t.spec_ = spec;
        const int64_t v = spec.vocab_size;
        const auto k = static_cast<int64_t>(spec.pattern.size());
        Rng rng(spec.seed);

        // uniform simplex draw for the first step
        t.first_step_.resize(static_cast<size_t>(v));
        double total = 0.0;
        for (double& p : t.first_step_) {
            p = rng.exponential();
            total += p;
        }
        for (double& p : t.first_step_) {
            p /= total;
        }

        // level 1..n-1 reachable prefixes, processed in ascending key order
        t.level_offset_.assign(static_cast<size_t>(spec.length) + 1, 0);
        uint64_t pw = 1;
        for (int64_t l = 1; l <= spec.length; ++l) {
            t.level_offset_[static_cast<size_t>(l)] = t.level_offset_[static_cast<size_t>(l - 1)] + pw;
            pw *= static_cast<uint64_t>(v);
        }

        std::vector<uint64_t> frontier;  // prefix values at the current level
        for (int64_t c = 0; c < v; ++c) {
            frontier.push_back(static_cast<uint64_t>(c));
        }
        std::vector<int64_t> perm(static_cast<size_t>(v));
        for (int64_t level = 1; level < spec.length; ++level) {
            std::vector<uint64_t> next;
            next.reserve(frontier.size() * static_cast<size_t>(k));
            for (uint64_t value : frontier) {
                for (int64_t i = 0; i < v; ++i) {
                    perm[static_cast<size_t>(i)] = i;
                }
                // seeded Fisher-Yates prefix: first k entries are the chosen characters
                for (int64_t i = 0; i < k; ++i) {
                    const auto j = i + static_cast<int64_t>(rng.below(static_cast<uint64_t>(v - i)));
                    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
                }
                std::vector<double> row(static_cast<size_t>(v), 0.0);
                for (int64_t i = 0; i < k; ++i) {
                    row[static_cast<size_t>(perm[static_cast<size_t>(i)])] =
                        spec.pattern[static_cast<size_t>(i)];
                    next.push_back(value * static_cast<uint64_t>(v) +
                                   static_cast<uint64_t>(perm[static_cast<size_t>(i)]));
                }
                t.row_index_[t.level_offset_[static_cast<size_t>(level)] + value] =
                    static_cast<uint32_t>(t.rows_.size());
                t.rows_.push_back(std::move(row));
            }
            std::sort(next.begin(), next.end());
            frontier = std::move(next);
        }
        return t;
    }

    const TargetSpec& spec() const { return spec_; }
    std::span<const double> first_step() const { return first_step_; }

    int64_t support_count() const {
        int64_t n = spec_.vocab_size;
        for (int64_t i = 1; i < spec_.length; ++i) {
            n *= static_cast<int64_t>(spec_.pattern.size());
        }
        return n;
    }

    // Conditional next-character distribution given a (possibly empty)
    // prefix. Returns nullopt for prefixes outside the support.
    std::optional<std::span<const double>> conditional(std::span<const int32_t> prefix) const {
        require(static_cast<int64_t>(prefix.size()) < spec_.length, Errc::range,
                "prefix length must be < sequence length");
        if (prefix.empty()) {
            return std::span<const double>(first_step_);
        }
        uint64_t value = 0;
        for (int32_t c : prefix) {
            require(c >= 0 && c < spec_.vocab_size, Errc::range, "character out of vocabulary");
            value = value * static_cast<uint64_t>(spec_.vocab_size) + static_cast<uint64_t>(c);
        }
        const auto it = row_index_.find(level_offset_[prefix.size()] + value);
        if (it == row_index_.end()) {
            return std::nullopt;
        }
        return std::span<const double>(rows_[it->second]);
    }

    // exact joint probability of a full sequence under the generator
    double sequence_probability(std::span<const int32_t> seq) const {
        require(static_cast<int64_t>(seq.size()) == spec_.length, Errc::range,
                "sequence length mismatch");
        double p = first_step_[static_cast<size_t>(seq[0])];
        for (size_t i = 1; i < seq.size() && p > 0.0; ++i) {
            const auto row = conditional(seq.subspan(0, i));
            p *= row ? (*row)[static_cast<size_t>(seq[i])] : 0.0;
        }
        return p;
    }

    // H(first_step) + (n-1) H(pattern); equals the enumeration entropy of
    // the joint because every reachable conditional carries the same
    // pattern entropy.
    double analytic_entropy() const {
        return entropy_nats(first_step_) +
               static_cast<double>(spec_.length - 1) * entropy_nats(spec_.pattern);
    }

    // SequenceDistribution surface
    SequenceCodec codec() const override { return {spec_.vocab_size, spec_.length}; }

    double probability(uint64_t id) const override {
        std::vector<int32_t> seq(static_cast<size_t>(spec_.length));
        codec().decode(id, seq);
        return sequence_probability(seq);
    }

    void for_each_support(const std::function<void(uint64_t, double)>& fn) const override {
        std::vector<int32_t> seq;
        walk_support(seq, 1.0, 0, fn);
    }

    double entropy() const override { return analytic_entropy(); }

    // --- line-oriented text serialization -------------------------------
    void save(std::ostream& os) const {
        char buf[64];
        auto fmt = [&buf](double x) {
            std::snprintf(buf, sizeof(buf), "%.17g", x);
            return std::string(buf);
        };
        os << "complab-target v1\n";
        os << "vocab_size " << spec_.vocab_size << "\n";
        os << "length " << spec_.length << "\n";
        os << "pattern";
        for (double p : spec_.pattern) {
            os << ' ' << fmt(p);
        }
        os << "\nseed " << spec_.seed << "\n";
        os << "first_step";
        for (double p : first_step_) {
            os << ' ' << fmt(p);
        }
        os << "\n";
        // ascending (level, value) order
        std::map<uint64_t, uint32_t> ordered(row_index_.begin(), row_index_.end());
        for (const auto& [key, idx] : ordered) {
            size_t level = 0;
            while (level + 1 < level_offset_.size() && level_offset_[level + 1] <= key) {
                ++level;
            }
            uint64_t value = key - level_offset_[level];
            std::vector<int32_t> prefix(level);
            for (size_t i = level; i-- > 0;) {
                prefix[i] = static_cast<int32_t>(value % static_cast<uint64_t>(spec_.vocab_size));
                value /= static_cast<uint64_t>(spec_.vocab_size);
            }
            os << "transition " << level;
            for (int32_t c : prefix) {
                os << ' ' << c;
            }
            for (double p : rows_[idx]) {
                os << ' ' << fmt(p);
            }
            os << "\n";
        }
        os << "end\n";
    }

    static TargetDistribution load(std::istream& is) {
        std::string line;
        auto next_line = [&]() {
            require(static_cast<bool>(std::getline(is, line)), Errc::io, "truncated target file");
            return std::istringstream(line);
        };
        {
            auto ls = next_line();
            std::string magic, version;
            ls >> magic >> version;
            require(magic == "complab-target" && version == "v1", Errc::io, "bad target header");
        }
        TargetDistribution t;
        auto expect_key = [](std::istringstream& ls, const char* key) {
            std::string k;
            ls >> k;
            require(k == key, Errc::io, std::string("expected key ") + key);
        };
        {
            auto ls = next_line();
            expect_key(ls, "vocab_size");
            ls >> t.spec_.vocab_size;
        }
        {
            auto ls = next_line();
            expect_key(ls, "length");
            ls >> t.spec_.length;
        }
        {
            auto ls = next_line();
            expect_key(ls, "pattern");
            t.spec_.pattern.clear();
            double p;
            while (ls >> p) {
                t.spec_.pattern.push_back(p);
            }
        }
        {
            auto ls = next_line();
            expect_key(ls, "seed");
            ls >> t.spec_.seed;
        }
        {
            auto ls = next_line();
            expect_key(ls, "first_step");
            t.first_step_.clear();
            double p;
            while (ls >> p) {
                t.first_step_.push_back(p);
            }
            require(static_cast<int64_t>(t.first_step_.size()) == t.spec_.vocab_size, Errc::io,
                    "first_step width mismatch");
        }
        t.level_offset_.assign(static_cast<size_t>(t.spec_.length) + 1, 0);
        uint64_t pw = 1;
        for (int64_t l = 1; l <= t.spec_.length; ++l) {
            t.level_offset_[static_cast<size_t>(l)] = t.level_offset_[static_cast<size_t>(l - 1)] + pw;
            pw *= static_cast<uint64_t>(t.spec_.vocab_size);
        }
        for (;;) {
            auto ls = next_line();
            std::string key;
            ls >> key;
            if (key == "end") {
                break;
            }
            require(key == "transition", Errc::io, "unexpected key in target file");
            size_t level = 0;
            ls >> level;
            uint64_t value = 0;
            for (size_t i = 0; i < level; ++i) {
                int32_t c = 0;
                ls >> c;
                value = value * static_cast<uint64_t>(t.spec_.vocab_size) + static_cast<uint64_t>(c);
            }
            std::vector<double> row(static_cast<size_t>(t.spec_.vocab_size));
            for (double& p : row) {
                require(static_cast<bool>(ls >> p), Errc::io, "short transition row");
            }
            t.row_index_[t.level_offset_[level] + value] = static_cast<uint32_t>(t.rows_.size());
            t.rows_.push_back(std::move(row));
        }
        return t;
    }

private:
    void walk_support(std::vector<int32_t>& seq, double p, int64_t depth,
                      const std::function<void(uint64_t, double)>& fn) const {
        if (depth == spec_.length) {
            fn(codec().encode(seq), p);
            return;
        }
        const auto row = conditional(seq);
        if (!row) {
            return;
        }
        for (int32_t c = 0; c < spec_.vocab_size; ++c) {
            const double pc = (*row)[static_cast<size_t>(c)];
            if (pc > 0.0) {
                seq.push_back(c);
                walk_support(seq, p * pc, depth + 1, fn);
                seq.pop_back();
            }
        }
    }

    TargetSpec spec_;
    std::vector<double> first_step_;
    std::vector<std::vector<double>> rows_;
    std::unordered_map<uint64_t, uint32_t> row_index_;
    std::vector<uint64_t> level_offset_;
};

struct Dataset {
    int64_t vocab_size = 0;
    int64_t length = 0;
    int64_t count = 0;
    std::vector<int32_t> tokens;  // count * length, row-major

    std::span<const int32_t> row(int64_t i) const {
        return {tokens.data() + i * length, static_cast<size_t>(length)};
    }

    void save(std::ostream& os) const {
        os << "complab-dataset v1\n";
        os << "vocab_size " << vocab_size << "\n";
        os << "length " << length << "\n";
        os << "count " << count << "\n";
        for (int64_t i = 0; i < count; ++i) {
            const auto r = row(i);
            for (size_t j = 0; j < r.size(); ++j) {
                os << r[j] << (j + 1 < r.size() ? ' ' : '\n');
            }
        }
    }

    static Dataset load(std::istream& is) {
        std::string line;
        auto next_line = [&]() {
            require(static_cast<bool>(std::getline(is, line)), Errc::io, "truncated dataset file");
            return std::istringstream(line);
        };
        {
            auto ls = next_line();
            std::string magic, version;
            ls >> magic >> version;
            require(magic == "complab-dataset" && version == "v1", Errc::io, "bad dataset header");
        }
        Dataset d;
        std::string key;
        {
            auto ls = next_line();
            ls >> key >> d.vocab_size;
            require(key == "vocab_size", Errc::io, "expected vocab_size");
        }
        {
            auto ls = next_line();
            ls >> key >> d.length;
            require(key == "length", Errc::io, "expected length");
        }
        {
            auto ls = next_line();
            ls >> key >> d.count;
            require(key == "count", Errc::io, "expected count");
        }
        d.tokens.reserve(static_cast<size_t>(d.count * d.length));
        for (int64_t i = 0; i < d.count; ++i) {
            auto ls = next_line();
            for (int64_t j = 0; j < d.length; ++j) {
                int32_t c = 0;
                require(static_cast<bool>(ls >> c), Errc::io, "short dataset row");
                d.tokens.push_back(c);
            }
        }
        return d;
    }
};

// i.i.d. ancestral sampling by inverse CDF over ascending character order.
inline Dataset sample_dataset(const TargetDistribution& target, int64_t count, uint64_t seed) {
    require(count >= 1, Errc::parameter, "sample count must be >= 1");
    const TargetSpec& spec = target.spec();
    Rng rng(seed);
    Dataset d;
    d.vocab_size = spec.vocab_size;
    d.length = spec.length;
    d.count = count;
    d.tokens.resize(static_cast<size_t>(count * spec.length));

    auto draw = [&](std::span<const double> row) {
        const double u = rng.uniform01();
        double cum = 0.0;
        int32_t last_positive = 0;
        for (int32_t c = 0; c < spec.vocab_size; ++c) {
            const double p = row[static_cast<size_t>(c)];
            if (p > 0.0) {
                last_positive = c;
                cum += p;
                if (u < cum) {
                    return c;
                }
            }
        }
        return last_positive;  // guards rounding at u ~ 1
    };

    std::vector<int32_t> seq;
    seq.reserve(static_cast<size_t>(spec.length));
    for (int64_t i = 0; i < count; ++i) {
        seq.clear();
        seq.push_back(draw(target.first_step()));
        for (int64_t j = 1; j < spec.length; ++j) {
            const auto row = target.conditional(seq);
            require(row.has_value(), Errc::spec, "sampled prefix left the support");
            seq.push_back(draw(*row));
        }
        std::copy(seq.begin(), seq.end(), d.tokens.begin() + i * spec.length);
    }
    return d;
}

// Relative frequencies of the sampled sequences; the measurement reference
// for KL and cross-entropy throughout.
class EmpiricalDistribution final : public SequenceDistribution {
public:
    static EmpiricalDistribution from(const Dataset& dataset) {
        require(dataset.count >= 1, Errc::parameter, "dataset is empty");
        EmpiricalDistribution e;
        e.codec_ = {dataset.vocab_size, dataset.length};
        std::unordered_map<uint64_t, int64_t> counts;
        for (int64_t i = 0; i < dataset.count; ++i) {
            counts[e.codec_.encode(dataset.row(i))] += 1;
        }
        e.support_.assign(counts.begin(), counts.end());
        std::sort(e.support_.begin(), e.support_.end());
        e.total_ = dataset.count;
        return e;
    }

    int64_t sample_count() const { return total_; }
    int64_t support_size() const { return static_cast<int64_t>(support_.size()); }

    SequenceCodec codec() const override { return codec_; }

    double probability(uint64_t id) const override {
        const auto it = std::lower_bound(support_.begin(), support_.end(),
                                         std::pair<uint64_t, int64_t>(id, 0));
        if (it == support_.end() || it->first != id) {
            return 0.0;
        }
        return static_cast<double>(it->second) / static_cast<double>(total_);
    }

    void for_each_support(const std::function<void(uint64_t, double)>& fn) const override {
        for (const auto& [id, c] : support_) {
            fn(id, static_cast<double>(c) / static_cast<double>(total_));
        }
    }

    double entropy() const override {
        double h = 0.0;
        for (const auto& [id, c] : support_) {
            const double p = static_cast<double>(c) / static_cast<double>(total_);
            h -= p * std::log(p);
        }
        return h;
    }

private:
    SequenceCodec codec_;
    std::vector<std::pair<uint64_t, int64_t>> support_;
    int64_t total_ = 0;
};

}  // namespace complab
