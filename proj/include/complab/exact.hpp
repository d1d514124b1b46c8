#pragma once

// Exact, enumeration-based measurement of next-token models: joint
// probabilities, entropy, KL divergence and cross-entropy against a known
// sequence distribution, and the sparse/non-sparse entropy split. All sums
// run in ascending sequence-id order so results are bit-reproducible.

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "complab/common.hpp"
#include "complab/sequence.hpp"

namespace complab {

constexpr int64_t kDefaultEnumerationCap = 10'000'000;

// Query surface over learned conditionals: a (possibly empty) prefix,
// implicitly preceded by the start symbol, maps to a probability row over
// the vocabulary.
class NextTokenModel {
public:
    virtual ~NextTokenModel() = default;
    virtual int64_t vocab_size() const = 0;
    virtual int64_t seq_length() const = 0;
    virtual void next_dist(std::span<const int32_t> prefix, std::span<double> out) const = 0;
};

// V^n with the enumeration cap enforced.
inline uint64_t enumeration_total(int64_t vocab_size, int64_t length,
                                  int64_t cap = kDefaultEnumerationCap) {
    require(vocab_size >= 1 && length >= 1, Errc::conformance, "degenerate sequence space");
    uint64_t total = 1;
    for (int64_t i = 0; i < length; ++i) {
        total *= static_cast<uint64_t>(vocab_size);
        require(total <= static_cast<uint64_t>(cap), Errc::enumeration_too_large,
                "sequence space exceeds enumeration cap");
    }
    return total;
}

namespace detail {

inline void check_model_row(std::span<const double> row) {
    double sum = 0.0;
    for (double p : row) {
        require(p >= 0.0, Errc::model_contract, "model returned a negative probability");
        sum += p;
    }
    require(std::abs(sum - 1.0) <= 1e-9, Errc::model_contract,
            "model row does not sum to 1 within 1e-9");
}

}  // namespace detail

// Dense table of every conditional row of a model over its finite prefix
// space. Rows are validated once at build time; queries afterwards are
// lookups, which keeps full-space enumeration cheap.
class CachedNextTokenModel final : public NextTokenModel {
public:
    static CachedNextTokenModel from(const NextTokenModel& model,
                                     int64_t cap = kDefaultEnumerationCap) {
        CachedNextTokenModel c;
        c.vocab_ = model.vocab_size();
        c.length_ = model.seq_length();
        enumeration_total(c.vocab_, c.length_, cap);

        c.level_offset_.assign(static_cast<size_t>(c.length_) + 1, 0);
        uint64_t pw = 1;
        for (int64_t l = 1; l <= c.length_; ++l) {
            c.level_offset_[static_cast<size_t>(l)] = c.level_offset_[static_cast<size_t>(l - 1)] + pw;
            pw *= static_cast<uint64_t>(c.vocab_);
        }
        c.rows_.resize(c.level_offset_.back() * static_cast<uint64_t>(c.vocab_));

        std::vector<int32_t> prefix;
        std::vector<double> row(static_cast<size_t>(c.vocab_));
        pw = 1;
        for (int64_t level = 0; level < c.length_; ++level) {
            for (uint64_t value = 0; value < pw; ++value) {
                prefix.resize(static_cast<size_t>(level));
                uint64_t v = value;
                for (int64_t i = level; i-- > 0;) {
                    prefix[static_cast<size_t>(i)] = static_cast<int32_t>(v % static_cast<uint64_t>(c.vocab_));
                    v /= static_cast<uint64_t>(c.vocab_);
                }
                model.next_dist(prefix, row);
                detail::check_model_row(row);
                double* dst =
                    c.rows_.data() +
                    (c.level_offset_[static_cast<size_t>(level)] + value) * static_cast<uint64_t>(c.vocab_);
                std::copy(row.begin(), row.end(), dst);
            }
            pw *= static_cast<uint64_t>(c.vocab_);
        }
        return c;
    }

    int64_t vocab_size() const override { return vocab_; }
    int64_t seq_length() const override { return length_; }

    void next_dist(std::span<const int32_t> prefix, std::span<double> out) const override {
        const std::span<const double> row = row_of(prefix);
        std::copy(row.begin(), row.end(), out.begin());
    }

    std::span<const double> row_of(std::span<const int32_t> prefix) const {
        require(static_cast<int64_t>(prefix.size()) < length_, Errc::range, "prefix too long");
        uint64_t value = 0;
        for (int32_t c : prefix) {
            value = value * static_cast<uint64_t>(vocab_) + static_cast<uint64_t>(c);
        }
        const double* p =
            rows_.data() + (level_offset_[prefix.size()] + value) * static_cast<uint64_t>(vocab_);
        return {p, static_cast<size_t>(vocab_)};
    }

    // joint probability of a full sequence by chain rule
    double joint(std::span<const int32_t> seq) const {
        double p = 1.0;
        for (size_t i = 0; i < seq.size(); ++i) {
            p *= row_of(seq.subspan(0, i))[static_cast<size_t>(seq[i])];
        }
        return p;
    }

private:
    int64_t vocab_ = 0;
    int64_t length_ = 0;
    std::vector<double> rows_;
    std::vector<uint64_t> level_offset_;
};

// chain-rule product of the model's conditionals along one sequence
inline double joint_probability(const NextTokenModel& model, uint64_t id,
                                int64_t cap = kDefaultEnumerationCap) {
    const SequenceCodec codec{model.vocab_size(), model.seq_length()};
    require(id < enumeration_total(codec.vocab_size, codec.length, cap), Errc::range,
            "sequence id out of range");
    std::vector<int32_t> seq(static_cast<size_t>(codec.length));
    codec.decode(id, seq);
    std::vector<double> row(static_cast<size_t>(codec.vocab_size));
    double p = 1.0;
    for (size_t i = 0; i < seq.size(); ++i) {
        model.next_dist(std::span<const int32_t>(seq).subspan(0, i), row);
        detail::check_model_row(row);
        p *= row[static_cast<size_t>(seq[i])];
    }
    return p;
}

struct KlResult {
    bool finite = true;
    double nats = 0.0;
};

struct EvalReport {
    double entropy_nats = 0.0;
    double kl_nats = 0.0;
    double cross_entropy_nats = 0.0;
    double sparse_part_entropy = 0.0;
    double nonsparse_part_entropy = 0.0;
    bool kl_finite = true;
};

// -sum_s p(s) ln p(s) over the full sequence space
inline double model_entropy(const NextTokenModel& model, int64_t cap = kDefaultEnumerationCap) {
    const CachedNextTokenModel cache = CachedNextTokenModel::from(model, cap);
    const SequenceCodec codec = {cache.vocab_size(), cache.seq_length()};
    const uint64_t total = enumeration_total(codec.vocab_size, codec.length, cap);
    std::vector<int32_t> seq(static_cast<size_t>(codec.length));
    double h = 0.0;
    for (uint64_t id = 0; id < total; ++id) {
        codec.decode(id, seq);
        const double p = cache.joint(seq);
        if (p > 0.0) {
            h -= p * std::log(p);
        }
    }
    return h;
}

// KL(target || model) over the target support; infinite when the model puts
// zero mass on a supported sequence.
inline KlResult kl_divergence(const SequenceDistribution& target, const NextTokenModel& model,
                              int64_t cap = kDefaultEnumerationCap) {
    const CachedNextTokenModel cache = CachedNextTokenModel::from(model, cap);
    const SequenceCodec codec{cache.vocab_size(), cache.seq_length()};
    KlResult r;
    std::vector<int32_t> seq(static_cast<size_t>(codec.length));
    target.for_each_support([&](uint64_t id, double p) {
        codec.decode(id, seq);
        const double q = cache.joint(seq);
        if (q <= 0.0) {
            r.finite = false;
            return;
        }
        r.nats += p * (std::log(p) - std::log(q));
    });
    if (!r.finite) {
        r.nats = 0.0;
    }
    return r;
}

// -sum_s p_tgt(s) ln p_model(s) over the target support (sequence-level)
inline KlResult full_cross_entropy(const SequenceDistribution& target, const NextTokenModel& model,
                                   int64_t cap = kDefaultEnumerationCap) {
    const CachedNextTokenModel cache = CachedNextTokenModel::from(model, cap);
    KlResult r;
    const SequenceCodec codec{cache.vocab_size(), cache.seq_length()};
    std::vector<int32_t> seq(static_cast<size_t>(codec.length));
    target.for_each_support([&](uint64_t id, double p) {
        codec.decode(id, seq);
        const double q = cache.joint(seq);
        if (q <= 0.0) {
            r.finite = false;
            return;
        }
        r.nats -= p * std::log(q);
    });
    if (!r.finite) {
        r.nats = 0.0;
    }
    return r;
}

// Partition of the model entropy sum by target support: sequences with zero
// target probability form the sparse part, the rest the non-sparse part.
struct SplitEntropy {
    double sparse_part = 0.0;
    double nonsparse_part = 0.0;
};

inline SplitEntropy split_entropy(const NextTokenModel& model, const SequenceDistribution& target,
                                  int64_t cap = kDefaultEnumerationCap) {
    const CachedNextTokenModel cache = CachedNextTokenModel::from(model, cap);
    const SequenceCodec codec{cache.vocab_size(), cache.seq_length()};
    const uint64_t total = enumeration_total(codec.vocab_size, codec.length, cap);
    std::vector<int32_t> seq(static_cast<size_t>(codec.length));
    SplitEntropy s;
    for (uint64_t id = 0; id < total; ++id) {
        codec.decode(id, seq);
        const double p = cache.joint(seq);
        const double term = p > 0.0 ? -p * std::log(p) : 0.0;
        if (target.probability(id) == 0.0) {
            s.sparse_part += term;
        } else {
            s.nonsparse_part += term;
        }
    }
    return s;
}

// One pass computing every report field from a single cached model table.
inline EvalReport evaluate_model(const NextTokenModel& model, const SequenceDistribution& target,
                                 int64_t cap = kDefaultEnumerationCap) {
    const CachedNextTokenModel cache = CachedNextTokenModel::from(model, cap);
    const SequenceCodec codec{cache.vocab_size(), cache.seq_length()};
    const uint64_t total = enumeration_total(codec.vocab_size, codec.length, cap);
    std::vector<int32_t> seq(static_cast<size_t>(codec.length));

    EvalReport rep;
    for (uint64_t id = 0; id < total; ++id) {
        codec.decode(id, seq);
        const double p = cache.joint(seq);
        const double term = p > 0.0 ? -p * std::log(p) : 0.0;
        if (target.probability(id) == 0.0) {
            rep.sparse_part_entropy += term;
        } else {
            rep.nonsparse_part_entropy += term;
        }
    }
    rep.entropy_nats = rep.sparse_part_entropy + rep.nonsparse_part_entropy;

    target.for_each_support([&](uint64_t id, double p) {
        codec.decode(id, seq);
        const double q = cache.joint(seq);
        if (q <= 0.0) {
            rep.kl_finite = false;
            return;
        }
        rep.kl_nats += p * (std::log(p) - std::log(q));
        rep.cross_entropy_nats -= p * std::log(q);
    });
    if (!rep.kl_finite) {
        rep.kl_nats = 0.0;
        rep.cross_entropy_nats = 0.0;
    }
    return rep;
}

// Adapts any per-prefix row function to the model query surface; used to
// evaluate the generator itself and synthetic models in tests.
class FunctionModel final : public NextTokenModel {
public:
    using RowFn = std::function<void(std::span<const int32_t>, std::span<double>)>;

    FunctionModel(int64_t vocab, int64_t length, RowFn fn)
        : vocab_(vocab), length_(length), fn_(std::move(fn)) {}

    int64_t vocab_size() const override { return vocab_; }
    int64_t seq_length() const override { return length_; }
    void next_dist(std::span<const int32_t> prefix, std::span<double> out) const override {
        fn_(prefix, out);
    }

private:
    int64_t vocab_;
    int64_t length_;
    RowFn fn_;
};

}  // namespace complab
