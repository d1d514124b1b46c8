#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "complab/common.hpp"

namespace complab {

// Fixed-length sequences over a vocabulary of size V are identified with
// integers in [0, V^n): base-V digits, most significant digit first.
struct SequenceCodec {
    int64_t vocab_size = 0;
    int64_t length = 0;

    uint64_t total() const {
        uint64_t t = 1;
        for (int64_t i = 0; i < length; ++i) {
            t *= static_cast<uint64_t>(vocab_size);
        }
        return t;
    }

    uint64_t encode(std::span<const int32_t> seq) const {
        require(static_cast<int64_t>(seq.size()) == length, Errc::range, "sequence length mismatch");
        uint64_t id = 0;
        for (int32_t c : seq) {
            require(c >= 0 && c < vocab_size, Errc::range, "character out of vocabulary");
            id = id * static_cast<uint64_t>(vocab_size) + static_cast<uint64_t>(c);
        }
        return id;
    }

    void decode(uint64_t id, std::span<int32_t> out) const {
        require(static_cast<int64_t>(out.size()) == length, Errc::range, "decode buffer mismatch");
        for (int64_t i = length; i-- > 0;) {
            out[static_cast<size_t>(i)] = static_cast<int32_t>(id % static_cast<uint64_t>(vocab_size));
            id /= static_cast<uint64_t>(vocab_size);
        }
    }
};

// A known distribution over length-n sequences, queryable by sequence id.
// Implemented by the generator and by empirical sample frequencies; the
// exact evaluator measures models against this interface.
class SequenceDistribution {
public:
    virtual ~SequenceDistribution() = default;
    virtual SequenceCodec codec() const = 0;
    virtual double probability(uint64_t id) const = 0;
    // visits support in ascending id order
    virtual void for_each_support(const std::function<void(uint64_t, double)>& fn) const = 0;
    virtual double entropy() const = 0;
};

inline double entropy_nats(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs) {
        if (p > 0.0) {
            h -= p * std::log(p);
        }
    }
    return h;
}

}  // namespace complab
