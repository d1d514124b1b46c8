#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <memory>
#include <span>
#include <unordered_map>
#include <string>
#include <vector>

#include "complab/common.hpp"

namespace complab {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t e : shape) {
        n *= e;
    }
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        s += std::to_string(shape[i]);
        if (i + 1 < shape.size()) {
            s += ",";
        }
    }
    return s + "]";
}

namespace detail {

// Leaves doubles uninitialized on resize; Tensor::uninit relies on this and
// every other factory fills explicitly.
template <class T>
struct NoInitAllocator : std::allocator<T> {
    template <class U>
    struct rebind {
        using other = NoInitAllocator<U>;
    };
    template <class U>
    void construct(U*) noexcept {}
    template <class U, class... Args>
    void construct(U* p, Args&&... args) {
        ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
    }
};

using Buffer = std::vector<double, NoInitAllocator<double>>;

// Thread-local buffer recycling. Training steps allocate the same few shapes
// thousands of times; reusing buffers avoids repeated first-touch page
// faults, which dominate otherwise. Buffers released on a thread go to that
// thread's pool, so no locking is needed; tapes and their tensors are
// confined to one thread by the concurrency model.
struct BufferPool {
    std::unordered_map<size_t, std::vector<Buffer*>> free_lists;
    size_t bytes = 0;
    bool alive = true;
    static constexpr size_t kCapBytes = size_t(768) << 20;

    ~BufferPool() {
        alive = false;
        for (auto& [n, list] : free_lists) {
            for (Buffer* b : list) {
                delete b;
            }
        }
    }
};

inline BufferPool& buffer_pool() {
    thread_local BufferPool pool;
    return pool;
}

inline std::shared_ptr<Buffer> acquire_buffer(size_t n) {
    const auto deleter = [](Buffer* b) {
        BufferPool& pool = buffer_pool();
        const size_t bytes = b->size() * sizeof(double);
        if (pool.alive && pool.bytes + bytes <= BufferPool::kCapBytes) {
            pool.bytes += bytes;
            pool.free_lists[b->size()].push_back(b);
        } else {
            delete b;
        }
    };
    BufferPool& pool = buffer_pool();
    const auto it = pool.free_lists.find(n);
    if (it != pool.free_lists.end() && !it->second.empty()) {
        Buffer* b = it->second.back();
        it->second.pop_back();
        pool.bytes -= n * sizeof(double);
        return {b, deleter};
    }
    return {new Buffer(n), deleter};
}

}  // namespace detail

// Dense row-major float64 tensor. Copies share the underlying buffer; ops
// always allocate fresh outputs, so shared buffers are only ever mutated
// in-place by the optimizer between training steps.
class Tensor {
public:
    Tensor() = default;

    // allocated but not filled; caller must overwrite every element
    static Tensor uninit(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor zeros(Shape shape) { return full(std::move(shape), 0.0); }

    static Tensor full(Shape shape, double value) {
        Tensor t(std::move(shape));
        std::fill(t.buf_->begin(), t.buf_->end(), value);
        return t;
    }

    static Tensor from_vector(Shape shape, const std::vector<double>& values) {
        Tensor t(std::move(shape));
        require(static_cast<int64_t>(values.size()) == t.size(), Errc::invalid_shape,
                "data length does not match shape " + shape_str(t.shape_));
        std::copy(values.begin(), values.end(), t.buf_->begin());
        return t;
    }

    static Tensor scalar(double value) { return full({1}, value); }

    // seeded uniform fill on [lo, hi); bit-identical for identical arguments
    static Tensor uniform(Shape shape, double lo, double hi, Rng& rng) {
        Tensor t(std::move(shape));
        for (double& x : *t.buf_) {
            x = rng.uniform(lo, hi);
        }
        return t;
    }

    const Shape& shape() const { return shape_; }
    int64_t ndim() const { return static_cast<int64_t>(shape_.size()); }
    int64_t dim(int64_t i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t size() const { return buf_ ? static_cast<int64_t>(buf_->size()) : 0; }
    bool defined() const { return static_cast<bool>(buf_); }

    double* data() { return buf_->data(); }
    const double* data() const { return buf_->data(); }
    std::span<const double> values() const { return {buf_->data(), buf_->size()}; }

    double item() const {
        require(size() == 1, Errc::invalid_root, "tensor is not a scalar");
        return (*buf_)[0];
    }

    double& at(std::initializer_list<int64_t> idx) {
        return (*buf_)[static_cast<size_t>(flat_index(idx))];
    }
    double at(std::initializer_list<int64_t> idx) const {
        return (*buf_)[static_cast<size_t>(flat_index(idx))];
    }

    Tensor clone() const {
        Tensor t;
        t.shape_ = shape_;
        t.buf_ = detail::acquire_buffer(buf_->size());
        std::copy(buf_->begin(), buf_->end(), t.buf_->begin());
        t.requires_grad = requires_grad;
        return t;
    }

    // metadata-only reshape; shares the buffer, drops tape linkage
    Tensor reshaped_view(Shape shape) const {
        require(shape_numel(shape) == size(), Errc::invalid_shape,
                "reshape to " + shape_str(shape) + " does not preserve element count");
        Tensor t;
        t.shape_ = std::move(shape);
        t.buf_ = buf_;
        t.requires_grad = requires_grad;
        return t;
    }

    bool same_buffer(const Tensor& other) const { return buf_ == other.buf_; }

    bool requires_grad = false;

    // tape linkage, managed by Tape/ops
    mutable int64_t tape_id = -1;
    mutable int32_t node = -1;

private:
    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        require(!shape_.empty(), Errc::invalid_shape, "empty shape");
        for (int64_t e : shape_) {
            require(e >= 1, Errc::invalid_shape, "non-positive extent in " + shape_str(shape_));
        }
        buf_ = detail::acquire_buffer(static_cast<size_t>(shape_numel(shape_)));
    }

    int64_t flat_index(std::initializer_list<int64_t> idx) const {
        int64_t flat = 0;
        size_t k = 0;
        for (int64_t i : idx) {
            flat = flat * shape_[k] + i;
            ++k;
        }
        return flat;
    }

    Shape shape_;
    std::shared_ptr<detail::Buffer> buf_;
};

}  // namespace complab
