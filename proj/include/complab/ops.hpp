#pragma once

// Reverse-mode tensor primitives. Every op computes its forward value and,
// when a tape is supplied and some input requires gradients, records a
// backward closure. Backward runs in reverse recording order, which is a
// valid topological order by construction, and visits each node once.
//
// Numeric domains: softmax and cross-entropy subtract the row max before
// exponentiating; entries more than ~708 below the row max underflow to
// exactly 0 (the causal mask relies on this). Layernorm stabilizes the
// zero-variance case with its epsilon.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <span>
#include <vector>

#include "complab/common.hpp"
#include "complab/tensor.hpp"

namespace complab {

enum class PrimitiveKind {
    matmul,
    add,
    scalar_mul,
    elementwise_mul,
    relu,
    sigmoid,
    tanh,
    softmax,
    layernorm,
    embedding_lookup,
    dropout,
    cross_entropy,
    concat,
    slice,
    transpose,
    reshape,
};

constexpr double kLayerNormEps = 1e-5;
// Additive causal-mask sentinel. After max subtraction, exp() of a masked
// entry underflows to exactly 0, so masked positions carry exactly zero
// attention weight and zero gradient.
constexpr double kMaskValue = -1e30;

class Tape {
public:
    Tape() : id_(next_id()) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    int64_t id() const { return id_; }
    size_t node_count() const { return nodes_.size(); }

    // Registers `t` as a leaf of this tape (idempotent).
    int32_t watch(const Tensor& t) {
        if (t.tape_id == id_ && t.node >= 0) {
            return t.node;
        }
        t.tape_id = id_;
        t.node = alloc_node(PrimitiveKind::reshape, nullptr);
        return t.node;
    }

    // Node id of `t` for gradient flow; -1 when no gradient is wanted.
    int32_t node_of(const Tensor& t) {
        if (!t.requires_grad) {
            return -1;
        }
        return watch(t);
    }

    int32_t record(PrimitiveKind kind, std::function<void(Tape&, const Tensor&)> back) {
        return alloc_node(kind, std::move(back));
    }

    // Adds `g` into the gradient accumulator of `node`. The first
    // contribution may be stored by reference; later contributions mutate the
    // stored buffer in place, which is safe because any tensor sharing it is
    // an already-consumed interior gradient.
    void accum(int32_t node, Tensor g) {
        if (node < 0) {
            return;
        }
        Tensor& slot = grads_[static_cast<size_t>(node)];
        if (!slot.defined()) {
            slot = std::move(g);
            return;
        }
        double* a = slot.data();
        const double* b = g.data();
        const int64_t n = slot.size();
        for (int64_t i = 0; i < n; ++i) {
            a[i] += b[i];
        }
    }

    // Runs reverse-mode accumulation from a scalar root. Interior gradients
    // and closures are released as soon as they have been consumed.
    void backward(const Tensor& root) {
        require(root.size() == 1, Errc::invalid_root, "backward root must be a scalar");
        require(root.tape_id == id_ && root.node >= 0, Errc::invalid_root,
                "backward root was not produced through this tape");
        grads_[static_cast<size_t>(root.node)] = Tensor::scalar(1.0);
        for (size_t i = nodes_.size(); i-- > 0;) {
            Node& nd = nodes_[i];
            Tensor& g = grads_[i];
            if (!g.defined()) {
                nd.back = nullptr;
                continue;
            }
            if (nd.back) {
                nd.back(*this, g);
                nd.back = nullptr;
                g = Tensor();  // leaf grads stay, interior grads are dropped
            }
        }
    }

    // Gradient of a watched leaf after backward(); nullptr when none flowed.
    // The lookup uses the leaf's tape linkage, so collect gradients before
    // recording the same leaf on another tape.
    const Tensor* grad(const Tensor& leaf) const {
        if (leaf.tape_id != id_ || leaf.node < 0) {
            return nullptr;
        }
        const Tensor& g = grads_[static_cast<size_t>(leaf.node)];
        return g.defined() ? &g : nullptr;
    }

private:
    struct Node {
        PrimitiveKind kind;
        std::function<void(Tape&, const Tensor&)> back;
    };

    int32_t alloc_node(PrimitiveKind kind, std::function<void(Tape&, const Tensor&)> back) {
        nodes_.push_back(Node{kind, std::move(back)});
        grads_.emplace_back();
        return static_cast<int32_t>(nodes_.size() - 1);
    }

    static int64_t next_id() {
        static std::atomic<int64_t> counter{1};
        return counter.fetch_add(1);
    }

    int64_t id_;
    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
};

namespace detail {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

// c[M,N] (+)= a[M,K] * b[K,N]
inline void gemm_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
                    bool accumulate) {
    MMap cm(c, m, n);
    if (accumulate) {
        cm.noalias() += CMap(a, m, k) * CMap(b, k, n);
    } else {
        cm.noalias() = CMap(a, m, k) * CMap(b, k, n);
    }
}

// c[M,K] (+)= g[M,N] * b[K,N]^T
inline void gemm_nt(const double* g, const double* b, double* c, int64_t m, int64_t k, int64_t n,
                    bool accumulate) {
    MMap cm(c, m, k);
    if (accumulate) {
        cm.noalias() += CMap(g, m, n) * CMap(b, k, n).transpose();
    } else {
        cm.noalias() = CMap(g, m, n) * CMap(b, k, n).transpose();
    }
}

// c[K,N] (+)= a[M,K]^T * g[M,N]
inline void gemm_tn(const double* a, const double* g, double* c, int64_t m, int64_t k, int64_t n,
                    bool accumulate) {
    MMap cm(c, k, n);
    if (accumulate) {
        cm.noalias() += CMap(a, m, k).transpose() * CMap(g, m, n);
    } else {
        cm.noalias() = CMap(a, m, k).transpose() * CMap(g, m, n);
    }
}

// Small hand kernels for batched slices (attention-sized problems) where
// per-call overhead of the full gemm path would dominate.
inline void small_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            crow[j] = 0.0;
        }
        const double* arow = a + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

inline void small_nt_acc(const double* g, const double* b, double* c, int64_t m, int64_t k,
                         int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        double* crow = c + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double s = 0.0;
            for (int64_t j = 0; j < n; ++j) {
                s += grow[j] * brow[j];
            }
            crow[p] += s;
        }
    }
}

inline void small_tn_acc(const double* a, const double* g, double* c, int64_t m, int64_t k,
                         int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* grow = g + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            double* crow = c + p * n;
            for (int64_t j = 0; j < n; ++j) {
                crow[j] += av * grow[j];
            }
        }
    }
}

constexpr int64_t kSmallGemmFlops = 1 << 16;

inline void check_matmul_shapes(const Tensor& a, const Tensor& b) {
    require(a.ndim() >= 2 && b.ndim() >= 2, Errc::conformance, "matmul inputs must have ndim >= 2");
    require(a.ndim() == b.ndim(), Errc::conformance, "matmul inputs must have equal ndim");
    for (int64_t i = 0; i + 2 < a.ndim(); ++i) {
        require(a.dim(i) == b.dim(i), Errc::conformance,
                "matmul batch dims mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    require(a.dim(a.ndim() - 1) == b.dim(b.ndim() - 2), Errc::conformance,
            "matmul inner dims mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// primitives
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape) {
    detail::check_matmul_shapes(a, b);
    const int64_t nd = a.ndim();
    const int64_t m = a.dim(nd - 2), k = a.dim(nd - 1), n = b.dim(nd - 1);
    int64_t batch = 1;
    Shape out_shape;
    for (int64_t i = 0; i + 2 < nd; ++i) {
        batch *= a.dim(i);
        out_shape.push_back(a.dim(i));
    }
    out_shape.push_back(m);
    out_shape.push_back(n);
    Tensor out = Tensor::uninit(out_shape);

    const bool small = m * k * n < detail::kSmallGemmFlops && batch > 1;
    for (int64_t s = 0; s < batch; ++s) {
        const double* ap = a.data() + s * m * k;
        const double* bp = b.data() + s * k * n;
        double* cp = out.data() + s * m * n;
        if (small) {
            detail::small_nn(ap, bp, cp, m, k, n);
        } else {
            detail::gemm_nn(ap, bp, cp, m, k, n, false);
        }
    }

    out.requires_grad = a.requires_grad || b.requires_grad;
    if (tape && out.requires_grad) {
        const int32_t an = tape->node_of(a);
        const int32_t bn = tape->node_of(b);
        out.tape_id = tape->id();
        out.node = tape->record(PrimitiveKind::matmul,
                                [a, b, an, bn, m, k, n, batch, small](Tape& t, const Tensor& g) {
            if (an >= 0) {
                Tensor da = small ? Tensor::zeros(a.shape()) : Tensor::uninit(a.shape());
                for (int64_t s = 0; s < batch; ++s) {
                    const double* gp = g.data() + s * m * n;
                    const double* bp = b.data() + s * k * n;
                    double* dp = da.data() + s * m * k;
                    if (small) {
                        detail::small_nt_acc(gp, bp, dp, m, k, n);
                    } else {
                        detail::gemm_nt(gp, bp, dp, m, k, n, false);
                    }
                }
                t.accum(an, std::move(da));
            }
            if (bn >= 0) {
                Tensor db = small ? Tensor::zeros(b.shape()) : Tensor::uninit(b.shape());
                for (int64_t s = 0; s < batch; ++s) {
                    const double* ap = a.data() + s * m * k;
                    const double* gp = g.data() + s * m * n;
                    double* dp = db.data() + s * k * n;
                    if (small) {
                        detail::small_tn_acc(ap, gp, dp, m, k, n);
                    } else {
                        detail::gemm_tn(ap, gp, dp, m, k, n, false);
                    }
                }
                t.accum(bn, std::move(db));
            }
        });
    }
    return out;
}

// Elementwise add of equal shapes, or bias add of a 1-D `b` over the last
// axis of `a`. No other broadcasting.
inline Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
    const bool bias = b.ndim() == 1 && a.ndim() > 1 && b.dim(0) == a.dim(a.ndim() - 1);
    require(bias || a.shape() == b.shape(), Errc::conformance,
            "add shapes mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));

    Tensor out = Tensor::uninit(a.shape());
    double* op = out.data();
    const double* ap = a.data();
    const double* bp = b.data();
    const int64_t n = out.size();
    if (bias) {
        const int64_t d = b.dim(0);
        const int64_t rows = n / d;
        for (int64_t r = 0; r < rows; ++r) {
            const double* arow = ap + r * d;
            double* orow = op + r * d;
            for (int64_t c = 0; c < d; ++c) {
                orow[c] = arow[c] + bp[c];
            }
        }
    } else {
        for (int64_t i = 0; i < n; ++i) {
            op[i] = ap[i] + bp[i];
        }
    }

    out.requires_grad = a.requires_grad || b.requires_grad;
    if (tape && out.requires_grad) {
        const int32_t an = tape->node_of(a);
        const int32_t bn = tape->node_of(b);
        const Shape bshape = b.shape();
        out.tape_id = tape->id();
        out.node = tape->record(PrimitiveKind::add, [an, bn, bias, bshape](Tape& t, const Tensor& g) {
            if (bn >= 0) {
                if (bias) {
                    const int64_t d = bshape[0];
                    Tensor db = Tensor::zeros(bshape);
                    double* dp = db.data();
                    const double* gp = g.data();
                    const int64_t rows = g.size() / d;
                    for (int64_t r = 0; r < rows; ++r) {
                        const double* grow = gp + r * d;
                        for (int64_t c = 0; c < d; ++c) {
                            dp[c] += grow[c];
                        }
                    }
                    t.accum(bn, std::move(db));
                } else {
                    t.accum(bn, g.clone());
                }
            }
            if (an >= 0) {
                // g is dead after this node; handing it over by reference is safe
                t.accum(an, g);
            }
        });
    }
    return out;
}

inline Tensor scalar_mul(const Tensor& a, double c, Tape* tape) {
    Tensor out = Tensor::uninit(a.shape());
    double* op = out.data();
    const double* ap = a.data();
    for (int64_t i = 0; i < out.size(); ++i) {
        op[i] = ap[i] * c;
    }
    out.requires_grad = a.requires_grad;
    if (tape && out.requires_grad) {
        const int32_t an = tape->node_of(a);
        out.tape_id = tape->id();
        out.node = tape->record(PrimitiveKind::scalar_mul, [an, c](Tape& t, const Tensor& g) {
            Tensor da = Tensor::uninit(g.shape());
            double* dp = da.data();
            const double* gp = g.data();
            for (int64_t i = 0; i < da.size(); ++i) {
                dp[i] = gp[i] * c;
            }
            t.accum(an, std::move(da));
        });
    }
    return out;
}

inline Tensor elementwise_mul(const Tensor& a, const Tensor& b, Tape* tape) {
    require(a.shape() == b.shape(), Errc::conformance,
            "elementwise_mul shapes mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out = Tensor::uninit(a.shape());
    double* op = out.data();
    const double* ap = a.data();
    const double* bp = b.data();
    for (int64_t i = 0; i < out.size(); ++i) {
        op[i] = ap[i] * bp[i];
    }
    out.requires_grad = a.requires_grad || b.requires_grad;
    if (tape && out.requires_grad) {
        const int32_t an = tape->node_of(a);
        const int32_t bn = tape->node_of(b);
        out.tape_id = tape->id();
        out.node = tape->record(PrimitiveKind::elementwise_mul, [a, b, an, bn](Tape& t, const Tensor& g) {
            if (an >= 0) {
                Tensor da = Tensor::uninit(a.shape());
                double* dp = da.data();
                const double* gp = g.data();
                const double* bp2 = b.data();
                for (int64_t i = 0; i < da.size(); ++i) {
                    dp[i] = gp[i] * bp2[i];
                }
                t.accum(an, std::move(da));
            }
            if (bn >= 0) {
                Tensor db = Tensor::uninit(b.shape());
                double* dp = db.data();
                const double* gp = g.data();
                const double* ap2 = a.data();
                for (int64_t i = 0; i < db.size(); ++i) {
                    dp[i] = gp[i] * ap2[i];
                }
                t.accum(bn, std::move(db));
            }
        });
    }
    return out;
}

// ReLU; backward uses subgradient 0 at exactly 0, matching the probes'
// "activated = strictly positive preactivation" convention.
inline Tensor relu(const Tensor& x, Tape* tape) {
    Tensor out = Tensor::uninit(x.shape());
    double* op = out.data();
    const double* xp = x.data();
    for (int64_t i = 0; i < out.size(); ++i) {
        op[i] = xp[i] > 0.0 ? xp[i] : 0.0;
    }
    out.requires_grad = x.requires_grad;
    if (tape && out.requires_grad) {
        const int32_t xn = tape->node_of(x);
        out.tape_id = tape->id();
        out.node = tape->record(PrimitiveKind::relu, [x, xn](Tape& t, const Tensor& g) {
            Tensor dx = Tensor::uninit(x.shape());
            double* dp = dx.data();
            const double* gp = g.data();
            const double* xp2 = x.data();
            for (int64_t i = 0; i < dx.size(); ++i) {
                dp[i] = xp2[i] > 0.0 ? gp[i] : 0.0;
            }
            t.accum(xn, std::move(dx));
        });
    }
    return out;
}

inline Tensor sigmoid(const Tensor& x, Tape* tape) {
    Tensor out = Tensor::uninit(x.shape());
    double* op = out.data();
    const double* xp = x.data();
    for (int64_t i = 0; i < out.size(); ++i) {
        const double v = xp[i];
        op[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    out.requires_grad = x.requires_grad;
    if (tape && out.requires_grad) {
        const int32_t xn = tape->node_of(x);
        const Tensor y = out;
        out.tape_id = tape->id();
        out.node = tape->record(PrimitiveKind::sigmoid, [y, xn](Tape& t, const Tensor& g) {
            Tensor dx = Tensor::uninit(y.shape());
            double* dp = dx.data();
            const double* gp = g.data();
            const double* yp = y.data();
            for (int64_t i = 0; i < dx.size(); ++i) {
                dp[i] = gp[i] * yp[i] * (1.0 - yp[i]);
            }
            t.accum(xn, std::move(dx));
        });
    }
    return out;
}

inline Tensor tanh_op(const Tensor& x, Tape* tape) {
    Tensor out = Tensor::uninit(x.shape());
    double* op = out.data();
    const double* xp = x.data();
    for (int64_t i = 0; i < out.size(); ++i) {
        op[i] = std::tanh(xp[i]);
    }
    out.requires_grad = x.requires_grad;
    if (tape && out.requires_grad) {
        const int32_t xn = tape->node_of(x);
        const Tensor y = out;
        out.tape_id = tape->id();
        out.node = tape->record(PrimitiveKind::tanh, [y, xn](Tape& t, const Tensor& g) {
            Tensor dx = Tensor::uninit(y.shape());
            double* dp = dx.data();
            const double* gp = g.data();
            const double* yp = y.data();
            for (int64_t i = 0; i < dx.size(); ++i) {
                dp[i] = gp[i] * (1.0 - yp[i] * yp[i]);
            }
            t.accum(xn, std::move(dx));
        });
    }
    return out;
}

// Softmax over the last axis, max-subtracted.
inline Tensor softmax_lastdim(const Tensor& x, Tape* tape) {
    require(x.ndim() >= 1, Errc::conformance, "softmax needs ndim >= 1");
    const int64_t d = x.dim(x.ndim() - 1);
    const int64_t rows = x.size() / d;
    Tensor out = Tensor::uninit(x.shape());
    double* op = out.data();
    const double* xp = x.data();
    for (int64_t r = 0; r < rows; ++r) {
        const double* xr = xp + r * d;
        double* yr = op + r * d;
        double m = xr[0];
        for (int64_t c = 1; c < d; ++c) {
            m = std::max(m, xr[c]);
        }
        double s = 0.0;
        for (int64_t c = 0; c < d; ++c) {
            yr[c] = std::exp(xr[c] - m);
            s += yr[c];
        }
        const double inv = 1.0 / s;
        for (int64_t c = 0; c < d; ++c) {
            yr[c] *= inv;
        }
    }
    out.requires_grad = x.requires_grad;
    if (tape && out.requires_grad) {
        const int32_t xn = tape->node_of(x);
        const Tensor y = out;
        out.tape_id = tape->id();
        out.node = tape->record(PrimitiveKind::softmax, [y, xn, d](Tape& t, const Tensor& g) {
            Tensor dx = Tensor::uninit(y.shape());
            const int64_t rows2 = y.size() / d;
            double* dp = dx.data();
            const double* gp = g.data();
            const double* yp = y.data();
            for (int64_t r = 0; r < rows2; ++r) {
                const double* gr = gp + r * d;
                const double* yr = yp + r * d;
                double* dr = dp + r * d;
                double dot = 0.0;
                for (int64_t c = 0; c < d; ++c) {
                    dot += gr[c] * yr[c];
                }
                for (int64_t c = 0; c < d; ++c) {
                    dr[c] = yr[c] * (gr[c] - dot);
                }
            }
            t.accum(xn, std::move(dx));
        });
    }
    return out;
}

// Layer normalization over the last axis with affine gain/bias.
inline Tensor layernorm_lastdim(const Tensor& x, const Tensor& gain, const Tensor& bias, Tape* tape,
                                double eps = kLayerNormEps) {
    require(x.ndim() >= 1, Errc::conformance, "layernorm needs ndim >= 1");
    const int64_t d = x.dim(x.ndim() - 1);
    require(gain.ndim() == 1 && gain.dim(0) == d, Errc::conformance, "layernorm gain shape mismatch");
    require(bias.ndim() == 1 && bias.dim(0) == d, Errc::conformance, "layernorm bias shape mismatch");
    const int64_t rows = x.size() / d;

    Tensor out = Tensor::uninit(x.shape());
    Tensor xhat = Tensor::uninit(x.shape());
    Tensor inv_std = Tensor::uninit({rows});
    const double* xp = x.data();
    const double* gp = gain.data();
    const double* bp = bias.data();
    double* op = out.data();
    double* hp = xhat.data();
    double* ip = inv_std.data();
    for (int64_t r = 0; r < rows; ++r) {
        const double* xr = xp + r * d;
        double mu = 0.0;
        for (int64_t c = 0; c < d; ++c) {
            mu += xr[c];
        }
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t c = 0; c < d; ++c) {
            const double t = xr[c] - mu;
            var += t * t;
        }
        var /= static_cast<double>(d);
        const double istd = 1.0 / std::sqrt(var + eps);
        ip[r] = istd;
        double* hr = hp + r * d;
        double* yr = op + r * d;
        for (int64_t c = 0; c < d; ++c) {
            hr[c] = (xr[c] - mu) * istd;
            yr[c] = hr[c] * gp[c] + bp[c];
        }
    }

    out.requires_grad = x.requires_grad || gain.requires_grad || bias.requires_grad;
    if (tape && out.requires_grad) {
        const int32_t xn = tape->node_of(x);
        const int32_t gn = tape->node_of(gain);
        const int32_t bn = tape->node_of(bias);
        out.tape_id = tape->id();
        out.node = tape->record(PrimitiveKind::layernorm,
                                [xhat, inv_std, gain, xn, gn, bn, d](Tape& t, const Tensor& g) {
            const int64_t rows2 = xhat.size() / d;
            const double* hp2 = xhat.data();
            const double* ip2 = inv_std.data();
            const double* gp2 = g.data();
            const double* gainp = gain.data();
            if (xn >= 0) {
                Tensor dx = Tensor::uninit(xhat.shape());
                double* dp = dx.data();
                const double dinv = 1.0 / static_cast<double>(d);
                for (int64_t r = 0; r < rows2; ++r) {
                    const double* hr = hp2 + r * d;
                    const double* gr = gp2 + r * d;
                    double* dr = dp + r * d;
                    double a1 = 0.0, a2 = 0.0;
                    for (int64_t c = 0; c < d; ++c) {
                        const double dh = gr[c] * gainp[c];
                        a1 += dh;
                        a2 += dh * hr[c];
                    }
                    a1 *= dinv;
                    a2 *= dinv;
                    for (int64_t c = 0; c < d; ++c) {
                        const double dh = gr[c] * gainp[c];
                        dr[c] = ip2[r] * (dh - a1 - hr[c] * a2);
                    }
                }
                t.accum(xn, std::move(dx));
            }
            if (gn >= 0) {
                Tensor dg = Tensor::zeros({d});
                double* dp = dg.data();
                for (int64_t r = 0; r < rows2; ++r) {
                    const double* hr = hp2 + r * d;
                    const double* gr = gp2 + r * d;
                    for (int64_t c = 0; c < d; ++c) {
                        dp[c] += gr[c] * hr[c];
                    }
                }
                t.accum(gn, std::move(dg));
            }
            if (bn >= 0) {
                Tensor db = Tensor::zeros({d});
                double* dp = db.data();
                for (int64_t r = 0; r < rows2; ++r) {
                    const double* gr = gp2 + r * d;
                    for (int64_t c = 0; c < d; ++c) {
                        dp[c] += gr[c];
                    }
                }
                t.accum(bn, std::move(db));
            }
        });
    }
    return out;
}

inline Tensor embedding_lookup(const Tensor& table, std::span<const int64_t> ids, Tape* tape) {
    require(table.ndim() == 2, Errc::conformance, "embedding table must be 2-D");
    const int64_t rows = table.dim(0), d = table.dim(1);
    for (int64_t id : ids) {
        require(id >= 0 && id < rows, Errc::conformance, "embedding id out of range");
    }
    Tensor out = Tensor::uninit({static_cast<int64_t>(ids.size()), d});
    double* op = out.data();
    const double* tp = table.data();
    for (size_t i = 0; i < ids.size(); ++i) {
        std::memcpy(op + i * d, tp + ids[i] * d, sizeof(double) * static_cast<size_t>(d));
    }
    out.requires_grad = table.requires_grad;
    if (tape && out.requires_grad) {
        const int32_t tn = tape->node_of(table);
        std::vector<int64_t> idv(ids.begin(), ids.end());
        const Shape tshape = table.shape();
        out.tape_id = tape->id();
        out.node = tape->record(PrimitiveKind::embedding_lookup,
                                [idv = std::move(idv), tshape, tn, d](Tape& t, const Tensor& g) {
            Tensor dt = Tensor::zeros(tshape);
            double* dp = dt.data();
            const double* gp = g.data();
            for (size_t i = 0; i < idv.size(); ++i) {
                double* row = dp + idv[i] * d;
                const double* grow = gp + i * d;
                for (int64_t c = 0; c < d; ++c) {
                    row[c] += grow[c];
                }
            }
            t.accum(tn, std::move(dt));
        });
    }
    return out;
}

// Inverted dropout. Eval mode is the identity (the input tensor is returned
// unchanged, tape linkage intact). Train mode draws a reproducible mask from
// `seed` and scales survivors by 1/(1-rate).
inline Tensor dropout(const Tensor& x, double rate, bool train, uint64_t seed, Tape* tape) {
    require(rate >= 0.0 && rate < 1.0, Errc::parameter, "dropout rate must be in [0,1)");
    if (!train || rate == 0.0) {
        return x;
    }
    const double scale = 1.0 / (1.0 - rate);
    Tensor mask = Tensor::uninit(x.shape());
    double* mp = mask.data();
    uint64_t state = seed;
    for (int64_t i = 0; i < mask.size(); ++i) {
        // splitmix64 stream; cheap and reproducible per (seed, index)
        state += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        z ^= z >> 31;
        const double u = static_cast<double>(z >> 11) * 0x1.0p-53;
        mp[i] = u >= rate ? scale : 0.0;
    }
    Tensor out = Tensor::uninit(x.shape());
    double* op = out.data();
    const double* xp = x.data();
    for (int64_t i = 0; i < out.size(); ++i) {
        op[i] = xp[i] * mp[i];
    }
    out.requires_grad = x.requires_grad;
    if (tape && out.requires_grad) {
        const int32_t xn = tape->node_of(x);
        out.tape_id = tape->id();
        out.node = tape->record(PrimitiveKind::dropout, [mask, xn](Tape& t, const Tensor& g) {
            Tensor dx = Tensor::uninit(mask.shape());
            double* dp = dx.data();
            const double* gp = g.data();
            const double* mp2 = mask.data();
            for (int64_t i = 0; i < dx.size(); ++i) {
                dp[i] = gp[i] * mp2[i];
            }
            t.accum(xn, std::move(dx));
        });
    }
    return out;
}

// Per-token softmax cross-entropy against integer targets, averaged over all
// rows. Returns a scalar in nats.
inline Tensor cross_entropy_mean(const Tensor& logits, std::span<const int64_t> targets, Tape* tape) {
    require(logits.ndim() == 2, Errc::conformance, "cross_entropy expects [N,V] logits");
    const int64_t n = logits.dim(0), v = logits.dim(1);
    require(static_cast<int64_t>(targets.size()) == n, Errc::conformance,
            "cross_entropy target count mismatch");
    for (int64_t t : targets) {
        require(t >= 0 && t < v, Errc::conformance, "cross_entropy target out of range");
    }
    Tensor probs = Tensor::uninit(logits.shape());
    const double* xp = logits.data();
    double* pp = probs.data();
    double total = 0.0;
    for (int64_t r = 0; r < n; ++r) {
        const double* xr = xp + r * v;
        double* pr = pp + r * v;
        double m = xr[0];
        for (int64_t c = 1; c < v; ++c) {
            m = std::max(m, xr[c]);
        }
        double s = 0.0;
        for (int64_t c = 0; c < v; ++c) {
            pr[c] = std::exp(xr[c] - m);
            s += pr[c];
        }
        const double inv = 1.0 / s;
        for (int64_t c = 0; c < v; ++c) {
            pr[c] *= inv;
        }
        total += std::log(s) + m - xr[targets[static_cast<size_t>(r)]];
    }
    Tensor out = Tensor::scalar(total / static_cast<double>(n));
    out.requires_grad = logits.requires_grad;
    if (tape && out.requires_grad) {
        const int32_t xn = tape->node_of(logits);
        std::vector<int64_t> tv(targets.begin(), targets.end());
        out.tape_id = tape->id();
        out.node = tape->record(PrimitiveKind::cross_entropy,
                                [probs, tv = std::move(tv), xn, n, v](Tape& t, const Tensor& g) {
            const double gs = g.item() / static_cast<double>(n);
            Tensor dx = probs.clone();
            double* dp = dx.data();
            for (int64_t r = 0; r < n; ++r) {
                dp[r * v + tv[static_cast<size_t>(r)]] -= 1.0;
            }
            for (int64_t i = 0; i < dx.size(); ++i) {
                dp[i] *= gs;
            }
            t.accum(xn, std::move(dx));
        });
    }
    return out;
}

namespace detail {

inline Shape strides_of(const Shape& shape) {
    Shape s(shape.size());
    int64_t acc = 1;
    for (size_t i = shape.size(); i-- > 0;) {
        s[i] = acc;
        acc *= shape[i];
    }
    return s;
}

// out[coords] = in[perm(coords)] walked with an odometer over `out`
inline void copy_permuted(const double* in, const Shape& in_shape, std::span<const int64_t> perm,
                          double* out) {
    const size_t nd = in_shape.size();
    Shape out_shape(nd);
    for (size_t i = 0; i < nd; ++i) {
        out_shape[i] = in_shape[static_cast<size_t>(perm[i])];
    }
    const Shape in_strides = strides_of(in_shape);
    Shape step(nd);
    for (size_t i = 0; i < nd; ++i) {
        step[i] = in_strides[static_cast<size_t>(perm[i])];
    }
    const int64_t n = shape_numel(in_shape);
    Shape coords(nd, 0);
    int64_t off = 0;
    for (int64_t i = 0; i < n; ++i) {
        out[i] = in[off];
        for (size_t j = nd; j-- > 0;) {
            ++coords[j];
            off += step[j];
            if (coords[j] < out_shape[j]) {
                break;
            }
            off -= step[j] * out_shape[j];
            coords[j] = 0;
        }
    }
}

}  // namespace detail

inline Tensor transpose(const Tensor& x, std::span<const int64_t> perm, Tape* tape) {
    require(static_cast<int64_t>(perm.size()) == x.ndim(), Errc::conformance,
            "transpose permutation rank mismatch");
    std::vector<bool> seen(perm.size(), false);
    for (int64_t p : perm) {
        require(p >= 0 && p < x.ndim() && !seen[static_cast<size_t>(p)], Errc::conformance,
                "transpose permutation invalid");
        seen[static_cast<size_t>(p)] = true;
    }
    Shape out_shape(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) {
        out_shape[i] = x.dim(perm[i]);
    }
    Tensor out = Tensor::uninit(out_shape);
    detail::copy_permuted(x.data(), x.shape(), perm, out.data());

    out.requires_grad = x.requires_grad;
    if (tape && out.requires_grad) {
        const int32_t xn = tape->node_of(x);
        std::vector<int64_t> inv(perm.size());
        for (size_t i = 0; i < perm.size(); ++i) {
            inv[static_cast<size_t>(perm[i])] = static_cast<int64_t>(i);
        }
        const Shape xshape = x.shape();
        out.tape_id = tape->id();
        out.node = tape->record(PrimitiveKind::transpose,
                                [inv = std::move(inv), xshape, out_shape, xn](Tape& t, const Tensor& g) {
            Tensor dx = Tensor::uninit(xshape);
            detail::copy_permuted(g.data(), out_shape, inv, dx.data());
            t.accum(xn, std::move(dx));
        });
    }
    return out;
}

inline Tensor concat(std::span<const Tensor> parts, int64_t axis, Tape* tape) {
    require(!parts.empty(), Errc::conformance, "concat of zero tensors");
    const Tensor& first = parts[0];
    require(axis >= 0 && axis < first.ndim(), Errc::conformance, "concat axis out of range");
    int64_t axis_total = 0;
    for (const Tensor& p : parts) {
        require(p.ndim() == first.ndim(), Errc::conformance, "concat rank mismatch");
        for (int64_t i = 0; i < first.ndim(); ++i) {
            require(i == axis || p.dim(i) == first.dim(i), Errc::conformance, "concat shape mismatch");
        }
        axis_total += p.dim(axis);
    }
    Shape out_shape = first.shape();
    out_shape[static_cast<size_t>(axis)] = axis_total;
    Tensor out = Tensor::uninit(out_shape);

    int64_t outer = 1, inner = 1;
    for (int64_t i = 0; i < axis; ++i) {
        outer *= first.dim(i);
    }
    for (int64_t i = axis + 1; i < first.ndim(); ++i) {
        inner *= first.dim(i);
    }
    const int64_t out_row = axis_total * inner;
    int64_t offset = 0;
    bool any_grad = false;
    for (const Tensor& p : parts) {
        const int64_t prow = p.dim(axis) * inner;
        for (int64_t o = 0; o < outer; ++o) {
            std::memcpy(out.data() + o * out_row + offset, p.data() + o * prow,
                        sizeof(double) * static_cast<size_t>(prow));
        }
        offset += prow;
        any_grad = any_grad || p.requires_grad;
    }

    out.requires_grad = any_grad;
    if (tape && any_grad) {
        std::vector<int32_t> nodes;
        std::vector<int64_t> rows;
        nodes.reserve(parts.size());
        for (const Tensor& p : parts) {
            nodes.push_back(tape->node_of(p));
            rows.push_back(p.dim(axis) * inner);
        }
        std::vector<Shape> shapes;
        for (const Tensor& p : parts) {
            shapes.push_back(p.shape());
        }
        out.tape_id = tape->id();
        out.node = tape->record(PrimitiveKind::concat,
                                [nodes = std::move(nodes), rows = std::move(rows),
                                 shapes = std::move(shapes), outer, out_row](Tape& t, const Tensor& g) {
            int64_t off = 0;
            for (size_t k = 0; k < nodes.size(); ++k) {
                if (nodes[k] >= 0) {
                    Tensor dp = Tensor::zeros(shapes[k]);
                    for (int64_t o = 0; o < outer; ++o) {
                        std::memcpy(dp.data() + o * rows[k], g.data() + o * out_row + off,
                                    sizeof(double) * static_cast<size_t>(rows[k]));
                    }
                    t.accum(nodes[k], std::move(dp));
                }
                off += rows[k];
            }
        });
    }
    return out;
}

inline Tensor slice(const Tensor& x, int64_t axis, int64_t start, int64_t stop, Tape* tape) {
    require(axis >= 0 && axis < x.ndim(), Errc::conformance, "slice axis out of range");
    require(start >= 0 && start < stop && stop <= x.dim(axis), Errc::conformance,
            "slice bounds invalid");
    Shape out_shape = x.shape();
    out_shape[static_cast<size_t>(axis)] = stop - start;
    int64_t outer = 1, inner = 1;
    for (int64_t i = 0; i < axis; ++i) {
        outer *= x.dim(i);
    }
    for (int64_t i = axis + 1; i < x.ndim(); ++i) {
        inner *= x.dim(i);
    }
    const int64_t in_row = x.dim(axis) * inner;
    const int64_t out_row = (stop - start) * inner;
    Tensor out = Tensor::uninit(out_shape);
    for (int64_t o = 0; o < outer; ++o) {
        std::memcpy(out.data() + o * out_row, x.data() + o * in_row + start * inner,
                    sizeof(double) * static_cast<size_t>(out_row));
    }
    out.requires_grad = x.requires_grad;
    if (tape && out.requires_grad) {
        const int32_t xn = tape->node_of(x);
        const Shape xshape = x.shape();
        out.tape_id = tape->id();
        out.node = tape->record(PrimitiveKind::slice,
                                [xshape, xn, outer, inner, in_row, out_row, start](Tape& t, const Tensor& g) {
            Tensor dx = Tensor::zeros(xshape);
            for (int64_t o = 0; o < outer; ++o) {
                std::memcpy(dx.data() + o * in_row + start * inner, g.data() + o * out_row,
                            sizeof(double) * static_cast<size_t>(out_row));
            }
            t.accum(xn, std::move(dx));
        });
    }
    return out;
}

inline Tensor reshape(const Tensor& x, Shape shape, Tape* tape) {
    Tensor out = x.reshaped_view(std::move(shape));
    out.tape_id = -1;
    out.node = -1;
    if (tape && out.requires_grad) {
        const int32_t xn = tape->node_of(x);
        const Shape xshape = x.shape();
        out.tape_id = tape->id();
        out.node = tape->record(PrimitiveKind::reshape, [xshape, xn](Tape& t, const Tensor& g) {
            t.accum(xn, g.reshaped_view(xshape));
        });
    }
    return out;
}

}  // namespace complab
