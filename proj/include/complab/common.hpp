#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace complab {

// Error categories surfaced by the library. Tests match on the code, not the
// message text.
enum class Errc {
    invalid_shape,
    conformance,
    parameter,
    invalid_root,
    spec,
    range,
    enumeration_too_large,
    model_contract,
    unsupported_variant,
    unsupported_probe,
    config,
    strict_parse,
    poisoned_state,
    empty_tail,
    io,
};

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    Errc code() const { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) {
    throw Error(code, msg);
}

inline void require(bool ok, Errc code, const std::string& msg) {
    if (!ok) {
        fail(code, msg);
    }
}

// Deterministic random stream. Wraps std::mt19937_64 but derives doubles and
// bounded integers from raw 64-bit draws so that sequences are bit-identical
// across standard library implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // uniform on [0, 1) with 53-bit resolution
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform on (0, 1), never exactly 0 or 1
    double uniform01_open() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // standard exponential, strictly positive
    double exponential() { return -std::log(uniform01_open()); }

    // uniform integer in [0, n), bitmask rejection
    uint64_t below(uint64_t n) {
        if (n <= 1) {
            return 0;
        }
        uint64_t mask = ~uint64_t{0} >> __builtin_clzll(n - 1 | 1);
        for (;;) {
            uint64_t r = next_u64() & mask;
            if (r < n) {
                return r;
            }
        }
    }

private:
    std::mt19937_64 gen_;
};

// splitmix64 step; used to derive independent stream seeds from one base seed
inline uint64_t derive_seed(uint64_t base, uint64_t stream) {
    uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace complab
