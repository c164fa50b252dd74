#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "wr/error.hpp"

namespace wr {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

// Global switch for the post-op non-finite scan. On by default: a NaN/Inf
// escaping into the tape invalidates every downstream invariant, so ops
// abort with the producing op's name instead of propagating.
inline std::atomic<bool>& finite_checks_flag() {
    static std::atomic<bool> enabled{true};
    return enabled;
}
inline bool finite_checks_enabled() { return finite_checks_flag().load(std::memory_order_relaxed); }
inline void set_finite_checks(bool on) { finite_checks_flag().store(on, std::memory_order_relaxed); }

template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // allocated iff requires_grad, same extent as value
    bool requires_grad{false};
};

// Value-semantics handle onto a shared node. Copying a Tensor aliases the
// underlying storage; ops always allocate fresh output nodes.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape) { return full(std::move(shape), T(0)); }

    static Tensor ones(Shape shape) { return full(std::move(shape), T(1)); }

    static Tensor full(Shape shape, T v) {
        Tensor t;
        t.n_ = std::make_shared<TensorNode<T>>();
        const int64_t n = check_shape(shape);
        t.n_->shape = std::move(shape);
        t.n_->value.assign(static_cast<size_t>(n), v);
        return t;
    }

    static Tensor from(Shape shape, std::vector<T> data) {
        const int64_t n = check_shape(shape);
        if (n != static_cast<int64_t>(data.size()))
            throw ValidationError("tensor data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
        Tensor t;
        t.n_ = std::make_shared<TensorNode<T>>();
        t.n_->shape = std::move(shape);
        t.n_->value = std::move(data);
        return t;
    }

    static Tensor scalar(T v) { return from({1}, {v}); }

    // leaf parameter: grad storage allocated up front
    static Tensor param(Shape shape, std::vector<T> data) {
        Tensor t = from(std::move(shape), std::move(data));
        t.set_requires_grad(true);
        return t;
    }

    bool defined() const { return n_ != nullptr; }
    const Shape& shape() const { return n_->shape; }
    size_t rank() const { return n_->shape.size(); }
    int64_t dim(size_t i) const { return n_->shape[i]; }
    int64_t numel() const { return static_cast<int64_t>(n_->value.size()); }

    std::vector<T>& value() { return n_->value; }
    const std::vector<T>& value() const { return n_->value; }

    bool requires_grad() const { return n_->requires_grad; }

    void set_requires_grad(bool on) {
        n_->requires_grad = on;
        if (on && n_->grad.size() != n_->value.size()) n_->grad.assign(n_->value.size(), T(0));
        if (!on) n_->grad.clear();
    }

    std::vector<T>& grad() {
        if (!n_->requires_grad) throw ComputeError("grad() on tensor without requires_grad");
        return n_->grad;
    }
    const std::vector<T>& grad() const {
        if (!n_->requires_grad) throw ComputeError("grad() on tensor without requires_grad");
        return n_->grad;
    }

    void zero_grad() {
        if (n_->requires_grad) std::fill(n_->grad.begin(), n_->grad.end(), T(0));
    }

    T item() const {
        if (numel() != 1) throw ComputeError("item() on non-scalar tensor " + shape_str(shape()));
        return n_->value[0];
    }

    std::shared_ptr<TensorNode<T>> node() const { return n_; }

private:
    static int64_t check_shape(const Shape& shape) {
        int64_t n = 1;
        for (int64_t d : shape) {
            if (d <= 0) throw ValidationError("non-positive extent in shape " + shape_str(shape));
            n *= d;
        }
        return n;
    }

    std::shared_ptr<TensorNode<T>> n_;
};

// Ordered record of executed ops. Execution order is topological by
// construction; backward() replays entries exactly once in reverse.
template <typename T>
class Tape {
public:
    struct Entry {
        const char* op;
        std::function<void()> backward;
    };

    void record(const char* op, std::function<void()> fn) {
        entries_.push_back(Entry{op, std::move(fn)});
    }

    size_t size() const { return entries_.size(); }

    void clear() { entries_.clear(); }

    // Seeds d(loss)/d(loss) = 1 and accumulates into every requires_grad
    // tensor reachable from the recorded ops. One backward per recorded
    // forward pass; leaf grads then add across passes until zeroed.
    void backward(Tensor<T>& loss) {
        if (loss.numel() != 1)
            throw ComputeError("backward() requires a scalar loss, got " + shape_str(loss.shape()));
        if (!loss.requires_grad())
            throw ComputeError("backward() on a loss with no gradient path");
        loss.grad()[0] += T(1);
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->backward();
    }

    static Tape*& active_slot() {
        thread_local Tape* active = nullptr;
        return active;
    }

    static Tape* active() { return active_slot(); }

    // Activates a tape for the current thread (one tape per training step).
    class Scope {
    public:
        explicit Scope(Tape& t) : prev_(active_slot()) { active_slot() = &t; }
        ~Scope() { active_slot() = prev_; }
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        Tape* prev_;
    };

    // Suspends recording (forward-only evaluation, e.g. greedy decoding).
    class Pause {
    public:
        Pause() : prev_(active_slot()) { active_slot() = nullptr; }
        ~Pause() { active_slot() = prev_; }
        Pause(const Pause&) = delete;
        Pause& operator=(const Pause&) = delete;

    private:
        Tape* prev_;
    };

private:
    std::vector<Entry> entries_;
};

}  // namespace wr
