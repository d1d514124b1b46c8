#pragma once

// Generic primitive dispatch plus the finite-difference gradient checker.
// The checker is the library-level oracle for every PrimitiveKind: analytic
// tape gradients are compared against central differences (step 1e-6) on
// seeded random inputs.

#include <cstdint>
#include <span>
#include <vector>

#include "complab/ops.hpp"

namespace complab {

// Static arguments for primitives whose signature is not just tensors.
struct OpArgs {
    double scalar = 2.0;               // scalar_mul
    double rate = 0.3;                 // dropout
    bool train = true;                 // dropout
    uint64_t seed = 0;                 // dropout mask
    double eps = kLayerNormEps;        // layernorm
    std::vector<int64_t> indices;      // embedding_lookup
    std::vector<int64_t> targets;      // cross_entropy
    int64_t axis = 0;                  // concat/slice
    int64_t start = 0, stop = 0;       // slice
    std::vector<int64_t> perm;         // transpose
    Shape shape;                       // reshape
};

inline Tensor apply(PrimitiveKind kind, std::span<const Tensor> in, const OpArgs& args, Tape* tape) {
    auto arity = [&](size_t n) {
        require(in.size() == n, Errc::conformance, "wrong input count for primitive");
    };
    switch (kind) {
        case PrimitiveKind::matmul:
            arity(2);
            return matmul(in[0], in[1], tape);
        case PrimitiveKind::add:
            arity(2);
            return add(in[0], in[1], tape);
        case PrimitiveKind::scalar_mul:
            arity(1);
            return scalar_mul(in[0], args.scalar, tape);
        case PrimitiveKind::elementwise_mul:
            arity(2);
            return elementwise_mul(in[0], in[1], tape);
        case PrimitiveKind::relu:
            arity(1);
            return relu(in[0], tape);
        case PrimitiveKind::sigmoid:
            arity(1);
            return sigmoid(in[0], tape);
        case PrimitiveKind::tanh:
            arity(1);
            return tanh_op(in[0], tape);
        case PrimitiveKind::softmax:
            arity(1);
            return softmax_lastdim(in[0], tape);
        case PrimitiveKind::layernorm:
            arity(3);
            return layernorm_lastdim(in[0], in[1], in[2], tape, args.eps);
        case PrimitiveKind::embedding_lookup:
            arity(1);
            return embedding_lookup(in[0], args.indices, tape);
        case PrimitiveKind::dropout:
            arity(1);
            return dropout(in[0], args.rate, args.train, args.seed, tape);
        case PrimitiveKind::cross_entropy:
            arity(1);
            return cross_entropy_mean(in[0], args.targets, tape);
        case PrimitiveKind::concat:
            return concat(in, args.axis, tape);
        case PrimitiveKind::slice:
            arity(1);
            return slice(in[0], args.axis, args.start, args.stop, tape);
        case PrimitiveKind::transpose:
            arity(1);
            return transpose(in[0], args.perm, tape);
        case PrimitiveKind::reshape:
            arity(1);
            return reshape(in[0], args.shape, tape);
    }
    fail(Errc::parameter, "unknown primitive kind");
}

namespace detail {

struct GradCheckCase {
    std::vector<Tensor> inputs;
    OpArgs args;
};

inline GradCheckCase make_case(PrimitiveKind kind, Rng& rng, uint64_t trial_seed) {
    auto dim = [&](int64_t lo, int64_t hi) {
        return lo + static_cast<int64_t>(rng.below(static_cast<uint64_t>(hi - lo + 1)));
    };
    auto rand_tensor = [&](Shape shape, double lo, double hi) {
        Tensor t = Tensor::uniform(std::move(shape), lo, hi, rng);
        t.requires_grad = true;
        return t;
    };

    GradCheckCase c;
    switch (kind) {
        case PrimitiveKind::matmul: {
            const int64_t m = dim(1, 4), k = dim(1, 4), n = dim(1, 4);
            if (rng.below(2) == 0) {
                c.inputs = {rand_tensor({m, k}, -2, 2), rand_tensor({k, n}, -2, 2)};
            } else {
                const int64_t b = dim(2, 3);
                c.inputs = {rand_tensor({b, m, k}, -2, 2), rand_tensor({b, k, n}, -2, 2)};
            }
            break;
        }
        case PrimitiveKind::add: {
            const int64_t r = dim(1, 4), d = dim(1, 4);
            if (rng.below(2) == 0) {
                c.inputs = {rand_tensor({r, d}, -2, 2), rand_tensor({r, d}, -2, 2)};
            } else {
                c.inputs = {rand_tensor({r, d}, -2, 2), rand_tensor({d}, -2, 2)};
            }
            break;
        }
        case PrimitiveKind::scalar_mul:
            c.inputs = {rand_tensor({dim(1, 4), dim(1, 4)}, -2, 2)};
            c.args.scalar = rng.uniform(-2, 2);
            break;
        case PrimitiveKind::elementwise_mul: {
            const int64_t r = dim(1, 4), d = dim(1, 4);
            c.inputs = {rand_tensor({r, d}, -2, 2), rand_tensor({r, d}, -2, 2)};
            break;
        }
        case PrimitiveKind::relu: {
            // keep inputs off the kink so central differences are valid
            Tensor t = rand_tensor({dim(1, 4), dim(1, 4)}, -2, 2);
            for (int64_t i = 0; i < t.size(); ++i) {
                double& x = t.data()[i];
                if (std::abs(x) < 1e-3) {
                    x += x >= 0.0 ? 2e-3 : -2e-3;
                }
            }
            c.inputs = {t};
            break;
        }
        case PrimitiveKind::sigmoid:
        case PrimitiveKind::tanh:
            c.inputs = {rand_tensor({dim(1, 4), dim(1, 4)}, -3, 3)};
            break;
        case PrimitiveKind::softmax:
            c.inputs = {rand_tensor({dim(1, 4), dim(2, 5)}, -3, 3)};
            break;
        case PrimitiveKind::layernorm: {
            const int64_t d = dim(2, 6);
            c.inputs = {rand_tensor({dim(1, 4), d}, -2, 2), rand_tensor({d}, 0.5, 1.5),
                        rand_tensor({d}, -0.5, 0.5)};
            break;
        }
        case PrimitiveKind::embedding_lookup: {
            const int64_t v = dim(3, 6);
            c.inputs = {rand_tensor({v, dim(2, 4)}, -2, 2)};
            const int64_t n = dim(2, 6);
            for (int64_t i = 0; i < n; ++i) {
                c.args.indices.push_back(static_cast<int64_t>(rng.below(static_cast<uint64_t>(v))));
            }
            break;
        }
        case PrimitiveKind::dropout:
            c.inputs = {rand_tensor({dim(2, 4), dim(2, 4)}, -2, 2)};
            c.args.rate = 0.3;
            c.args.train = true;
            c.args.seed = trial_seed;
            break;
        case PrimitiveKind::cross_entropy: {
            const int64_t n = dim(1, 5), v = dim(2, 5);
            c.inputs = {rand_tensor({n, v}, -2, 2)};
            for (int64_t i = 0; i < n; ++i) {
                c.args.targets.push_back(static_cast<int64_t>(rng.below(static_cast<uint64_t>(v))));
            }
            break;
        }
        case PrimitiveKind::concat: {
            const int64_t parts = dim(2, 3), r = dim(1, 3), d = dim(1, 3);
            c.args.axis = static_cast<int64_t>(rng.below(2));
            for (int64_t p = 0; p < parts; ++p) {
                Shape s = {r, d};
                s[static_cast<size_t>(c.args.axis)] = dim(1, 3);
                c.inputs.push_back(rand_tensor(std::move(s), -2, 2));
            }
            break;
        }
        case PrimitiveKind::slice: {
            const int64_t r = dim(2, 5), d = dim(2, 5);
            c.inputs = {rand_tensor({r, d}, -2, 2)};
            c.args.axis = static_cast<int64_t>(rng.below(2));
            const int64_t extent = c.args.axis == 0 ? r : d;
            c.args.start = dim(0, extent - 1);
            c.args.stop = dim(c.args.start + 1, extent);
            break;
        }
        case PrimitiveKind::transpose: {
            const int64_t nd = dim(2, 4);
            Shape s;
            for (int64_t i = 0; i < nd; ++i) {
                s.push_back(dim(1, 3));
            }
            c.inputs = {rand_tensor(s, -2, 2)};
            for (int64_t i = 0; i < nd; ++i) {
                c.args.perm.push_back(i);
            }
            for (int64_t i = nd - 1; i > 0; --i) {
                std::swap(c.args.perm[static_cast<size_t>(i)],
                          c.args.perm[rng.below(static_cast<uint64_t>(i + 1))]);
            }
            break;
        }
        case PrimitiveKind::reshape: {
            const int64_t r = dim(1, 4), d = dim(1, 4);
            c.inputs = {rand_tensor({r, d}, -2, 2)};
            c.args.shape = rng.below(2) == 0 ? Shape{r * d} : Shape{1, r, d};
            break;
        }
    }
    return c;
}

}  // namespace detail

// Worst relative error between tape gradients and central finite differences
// over `trial_count` seeded random cases of one primitive.
inline double grad_check(PrimitiveKind kind, int trial_count, uint64_t seed) {
    require(trial_count >= 1, Errc::parameter, "trial_count must be >= 1");
    constexpr double kStep = 1e-6;
    double worst = 0.0;

    for (int trial = 0; trial < trial_count; ++trial) {
        const uint64_t trial_seed = derive_seed(seed, static_cast<uint64_t>(trial));
        Rng rng(trial_seed);
        detail::GradCheckCase c = detail::make_case(kind, rng, trial_seed);

        // fixed random projection to a scalar
        Tensor probe_out = apply(kind, c.inputs, c.args, nullptr);
        Tensor w = Tensor::uniform({probe_out.size(), 1}, -1.0, 1.0, rng);

        auto scalar_of = [&](std::span<const Tensor> inputs) {
            Tensor out = apply(kind, inputs, c.args, nullptr);
            double s = 0.0;
            const double* op = out.data();
            const double* wp = w.data();
            for (int64_t i = 0; i < out.size(); ++i) {
                s += op[i] * wp[i];
            }
            return s;
        };

        Tape tape;
        Tensor out = apply(kind, c.inputs, c.args, &tape);
        Tensor flat = reshape(out, {1, out.size()}, &tape);
        Tensor root = matmul(flat, w, &tape);
        tape.backward(root);

        for (Tensor& input : c.inputs) {
            const Tensor* analytic = tape.grad(input);
            Tensor zero;
            if (!analytic) {
                zero = Tensor::zeros(input.shape());
                analytic = &zero;
            }
            for (int64_t e = 0; e < input.size(); ++e) {
                const double saved = input.data()[e];
                input.data()[e] = saved + kStep;
                const double up = scalar_of(c.inputs);
                input.data()[e] = saved - kStep;
                const double down = scalar_of(c.inputs);
                input.data()[e] = saved;
                const double fd = (up - down) / (2.0 * kStep);
                const double a = analytic->data()[e];
                const double denom = std::max({1.0, std::abs(a), std::abs(fd)});
                worst = std::max(worst, std::abs(a - fd) / denom);
            }
        }
    }
    return worst;
}

inline std::span<const PrimitiveKind> all_primitive_kinds() {
    static constexpr PrimitiveKind kinds[] = {
        PrimitiveKind::matmul,        PrimitiveKind::add,
        PrimitiveKind::scalar_mul,    PrimitiveKind::elementwise_mul,
        PrimitiveKind::relu,          PrimitiveKind::sigmoid,
        PrimitiveKind::tanh,          PrimitiveKind::softmax,
        PrimitiveKind::layernorm,     PrimitiveKind::embedding_lookup,
        PrimitiveKind::dropout,       PrimitiveKind::cross_entropy,
        PrimitiveKind::concat,        PrimitiveKind::slice,
        PrimitiveKind::transpose,     PrimitiveKind::reshape,
    };
    return kinds;
}

}  // namespace complab
