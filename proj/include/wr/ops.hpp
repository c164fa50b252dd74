#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "wr/error.hpp"
#include "wr/kernels.hpp"
#include "wr/rng.hpp"
#include "wr/tensor.hpp"

// Differentiable tensor ops. Every op computes forward through the kernel
// layer, scans its output for non-finite values, and records a backward
// closure on the active tape when any input takes gradients. Gradients
// accumulate; callers zero them between steps.
//
// Broadcasting is deliberately narrow: equal shapes, a scalar operand, or a
// right operand whose shape is a trailing suffix of the left one.

namespace wr {

template <typename T>
inline void finite_check(const Tensor<T>& t, const char* op) {
    if (!finite_checks_enabled()) return;
    for (const T v : t.value()) {
        if (!std::isfinite(v))
            throw ComputeError(std::string("non-finite value produced by op '") + op + "'");
    }
}

template <typename T>
inline bool recording(bool any_requires) {
    return any_requires && Tape<T>::active() != nullptr;
}

namespace detail {

enum class BinKind { same, suffix, scalar_rhs };

template <typename T>
inline BinKind bin_kind(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() == b.shape()) return BinKind::same;
    if (b.numel() == 1) return BinKind::scalar_rhs;
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    if (sb.size() < sa.size() &&
        std::equal(sb.begin(), sb.end(), sa.end() - static_cast<int64_t>(sb.size())))
        return BinKind::suffix;
    throw ValidationError(std::string(op) + ": shapes " + shape_str(sa) + " and " + shape_str(sb) +
                          " are not broadcast-compatible (trailing-dim or scalar only)");
}

// elementwise a (op) broadcast(b), plus the two gradient reductions
template <typename T, typename FwdF, typename DaF, typename DbF>
Tensor<T> binary_op(const char* name, const Tensor<T>& a, const Tensor<T>& b, FwdF fwd, DaF dfda,
                    DbF dfdb) {
    const BinKind kind = bin_kind(a, b, name);
    const int64_t n = a.numel();
    const int64_t inner = (kind == BinKind::same) ? n : b.numel();
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    {
        const T* pa = a.value().data();
        const T* pb = b.value().data();
        T* po = out.value().data();
        if (kind == BinKind::scalar_rhs) {
            const T bv = pb[0];
            for (int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i], bv, name);
        } else {
            for (int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i], pb[i % inner], name);
        }
    }
    finite_check(out, name);
    if (recording<T>(a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        auto an = a.node();
        auto bn = b.node();
        auto on = out.node();
        Tape<T>::active()->record(name, [an, bn, on, kind, inner, n, dfda, dfdb]() {
            const T* g = on->grad.data();
            const T* pa = an->value.data();
            const T* pb = bn->value.data();
            const T* po = on->value.data();
            const int64_t bstride = (kind == BinKind::scalar_rhs) ? 1 : inner;
            if (an->requires_grad) {
                T* da = an->grad.data();
                for (int64_t i = 0; i < n; ++i)
                    da[i] += g[i] * dfda(pa[i], pb[i % bstride], po[i]);
            }
            if (bn->requires_grad) {
                T* db = bn->grad.data();
                for (int64_t i = 0; i < n; ++i)
                    db[i % bstride] += g[i] * dfdb(pa[i], pb[i % bstride], po[i]);
            }
        });
    }
    return out;
}

template <typename T, typename FwdF, typename DxF>
Tensor<T> unary_op(const char* name, const Tensor<T>& x, FwdF fwd, DxF dfdx) {
    const int64_t n = x.numel();
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    {
        const T* px = x.value().data();
        T* po = out.value().data();
        for (int64_t i = 0; i < n; ++i) po[i] = fwd(px[i], name);
    }
    finite_check(out, name);
    if (recording<T>(x.requires_grad())) {
        out.set_requires_grad(true);
        auto xn = x.node();
        auto on = out.node();
        Tape<T>::active()->record(name, [xn, on, n, dfdx]() {
            if (!xn->requires_grad) return;
            const T* g = on->grad.data();
            const T* px = xn->value.data();
            const T* po = on->value.data();
            T* dx = xn->grad.data();
            for (int64_t i = 0; i < n; ++i) dx[i] += g[i] * dfdx(px[i], po[i]);
        });
    }
    return out;
}

inline std::vector<int64_t> strides_of(const Shape& s) {
    std::vector<int64_t> st(s.size(), 1);
    for (int64_t i = static_cast<int64_t>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
    return st;
}

}  // namespace detail

// ---- elementwise ----

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op<T>(
        "add", a, b, [](T x, T y, const char*) { return x + y; },
        [](T, T, T) { return T(1); }, [](T, T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op<T>(
        "sub", a, b, [](T x, T y, const char*) { return x - y; },
        [](T, T, T) { return T(1); }, [](T, T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op<T>(
        "mul", a, b, [](T x, T y, const char*) { return x * y; },
        [](T, T y, T) { return y; }, [](T x, T, T) { return x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op<T>(
        "div", a, b,
        [](T x, T y, const char* op) {
            if (y == T(0)) throw ComputeError(std::string(op) + ": division by zero");
            return x / y;
        },
        [](T, T y, T) { return T(1) / y; }, [](T, T y, T o) { return -o / y; });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, T s) {
    return detail::unary_op<T>(
        "add_s", a, [s](T x, const char*) { return x + s; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(T s, const Tensor<T>& a) {
    return detail::unary_op<T>(
        "rsub_s", a, [s](T x, const char*) { return s - x; }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, T s) {
    return detail::unary_op<T>(
        "mul_s", a, [s](T x, const char*) { return x * s; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, T s) {
    if (s == T(0)) throw ComputeError("div_s: division by zero");
    return mul(a, T(1) / s);
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
    return mul(a, T(-1));
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    // subgradient at 0 is 0
    return detail::unary_op<T>(
        "relu", x, [](T v, const char*) { return v > T(0) ? v : T(0); },
        [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
    return detail::unary_op<T>(
        "exp", x, [](T v, const char*) { return std::exp(v); }, [](T, T o) { return o; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
    return detail::unary_op<T>(
        "log", x,
        [](T v, const char* op) {
            if (v <= T(0)) throw ComputeError(std::string(op) + ": non-positive input");
            return std::log(v);
        },
        [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
    return detail::unary_op<T>(
        "sqrt", x,
        [](T v, const char* op) {
            if (v < T(0)) throw ComputeError(std::string(op) + ": negative input");
            return std::sqrt(v);
        },
        [](T, T o) { return T(1) / (T(2) * o); });
}

template <typename T>
Tensor<T> clamp_min(const Tensor<T>& x, T lo) {
    // gradient passes only on the unclamped side
    return detail::unary_op<T>(
        "clamp_min", x, [lo](T v, const char*) { return v > lo ? v : lo; },
        [lo](T v, T) { return v > lo ? T(1) : T(0); });
}

template <typename T>
Tensor<T> clamp_max(const Tensor<T>& x, T hi) {
    return detail::unary_op<T>(
        "clamp_max", x, [hi](T v, const char*) { return v < hi ? v : hi; },
        [hi](T v, T) { return v < hi ? T(1) : T(0); });
}

// ---- matmul ----

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    if (sa.size() < 2 || sa.size() != sb.size())
        throw ValidationError("matmul: ranks must match and be >= 2, got " + shape_str(sa) +
                              " x " + shape_str(sb));
    if (!std::equal(sa.begin(), sa.end() - 2, sb.begin()))
        throw ValidationError("matmul: batch dims differ, " + shape_str(sa) + " x " +
                              shape_str(sb));
    const int64_t m = sa[sa.size() - 2];
    const int64_t k = sa[sa.size() - 1];
    const int64_t n = sb[sb.size() - 1];
    if (sb[sb.size() - 2] != k)
        throw ValidationError("matmul: inner dims differ, " + shape_str(sa) + " x " +
                              shape_str(sb));
    int64_t batch = 1;
    for (size_t i = 0; i + 2 < sa.size(); ++i) batch *= sa[i];

    Shape so(sa.begin(), sa.end() - 1);
    so.push_back(n);
    Tensor<T> out = Tensor<T>::zeros(so);
    kernels::matmul(a.value().data(), b.value().data(), out.value().data(), batch, m, k, n, false);
    finite_check(out, "matmul");

    if (recording<T>(a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        auto an = a.node();
        auto bn = b.node();
        auto on = out.node();
        Tape<T>::active()->record("matmul", [an, bn, on, batch, m, k, n]() {
            if (an->requires_grad)
                kernels::matmul_grad_a(an->grad.data(), on->grad.data(), bn->value.data(), batch,
                                       m, k, n);
            if (bn->requires_grad)
                kernels::matmul_grad_b(bn->grad.data(), an->value.data(), on->grad.data(), batch,
                                       m, k, n);
        });
    }
    return out;
}

// ---- shape ops ----

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw ValidationError("reshape: cannot reshape " + shape_str(x.shape()) + " to " +
                              shape_str(shape));
    Tensor<T> out = Tensor<T>::from(std::move(shape), x.value());
    if (recording<T>(x.requires_grad())) {
        out.set_requires_grad(true);
        auto xn = x.node();
        auto on = out.node();
        Tape<T>::active()->record("reshape", [xn, on]() {
            if (!xn->requires_grad) return;
            const size_t n = on->grad.size();
            for (size_t i = 0; i < n; ++i) xn->grad[i] += on->grad[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& perm) {
    const auto& sx = x.shape();
    const size_t r = sx.size();
    if (perm.size() != r)
        throw ValidationError("permute: axes list length != rank");
    std::vector<bool> seen(r, false);
    Shape so(r);
    for (size_t j = 0; j < r; ++j) {
        if (perm[j] < 0 || static_cast<size_t>(perm[j]) >= r || seen[perm[j]])
            throw ValidationError("permute: invalid axes list");
        seen[perm[j]] = true;
        so[j] = sx[perm[j]];
    }
    const auto in_strides = detail::strides_of(sx);
    // stride to walk the input when the output linear index advances
    std::vector<int64_t> walk(r);
    for (size_t j = 0; j < r; ++j) walk[j] = in_strides[perm[j]];
    const auto out_strides = detail::strides_of(so);
    const int64_t n = x.numel();

    // captured by value: the closure outlives this frame on the tape
    auto in_offset = [out_strides, so, walk, r](int64_t out_lin) {
        int64_t off = 0;
        for (size_t j = 0; j < r; ++j) {
            const int64_t idx = (out_lin / out_strides[j]) % so[j];
            off += idx * walk[j];
        }
        return off;
    };

    Tensor<T> out = Tensor<T>::zeros(so);
    {
        const T* px = x.value().data();
        T* po = out.value().data();
        for (int64_t i = 0; i < n; ++i) po[i] = px[in_offset(i)];
    }
    if (recording<T>(x.requires_grad())) {
        out.set_requires_grad(true);
        auto xn = x.node();
        auto on = out.node();
        Tape<T>::active()->record("permute", [xn, on, n, in_offset]() {
            if (!xn->requires_grad) return;
            const T* g = on->grad.data();
            T* dx = xn->grad.data();
            for (int64_t i = 0; i < n; ++i) dx[in_offset(i)] += g[i];
        });
    }
    return out;
}

// gather rows of a 2-d tensor; duplicate ids accumulate on backward
template <typename T>
Tensor<T> rows(const Tensor<T>& x, const std::vector<int64_t>& ids) {
    if (x.rank() != 2) throw ValidationError("rows: input must be 2-d");
    const int64_t r = x.dim(0);
    const int64_t c = x.dim(1);
    for (int64_t id : ids)
        if (id < 0 || id >= r)
            throw ValidationError("rows: index " + std::to_string(id) + " out of range [0," +
                                  std::to_string(r) + ")");
    const int64_t nout = static_cast<int64_t>(ids.size());
    if (nout == 0) throw ValidationError("rows: empty index list");
    Tensor<T> out = Tensor<T>::zeros({nout, c});
    {
        const T* px = x.value().data();
        T* po = out.value().data();
        for (int64_t i = 0; i < nout; ++i)
            std::copy(px + ids[i] * c, px + (ids[i] + 1) * c, po + i * c);
    }
    if (recording<T>(x.requires_grad())) {
        out.set_requires_grad(true);
        auto xn = x.node();
        auto on = out.node();
        auto idv = std::make_shared<std::vector<int64_t>>(ids);
        Tape<T>::active()->record("rows", [xn, on, idv, c]() {
            if (!xn->requires_grad) return;
            const T* g = on->grad.data();
            T* dx = xn->grad.data();
            for (size_t i = 0; i < idv->size(); ++i) {
                const int64_t row = (*idv)[i];
                for (int64_t j = 0; j < c; ++j) dx[row * c + j] += g[i * c + j];
            }
        });
    }
    return out;
}

// stack two 2-d tensors with equal column counts, a on top of b
template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
        throw ValidationError("concat_rows: need 2-d inputs with equal columns, got " +
                              shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const int64_t c = a.dim(1);
    const int64_t ra = a.dim(0), rb = b.dim(0);
    Tensor<T> out = Tensor<T>::zeros({ra + rb, c});
    std::copy(a.value().begin(), a.value().end(), out.value().begin());
    std::copy(b.value().begin(), b.value().end(), out.value().begin() + ra * c);
    if (recording<T>(a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        auto an = a.node();
        auto bn = b.node();
        auto on = out.node();
        Tape<T>::active()->record("concat_rows", [an, bn, on, ra, rb, c]() {
            const T* g = on->grad.data();
            if (an->requires_grad)
                for (int64_t i = 0; i < ra * c; ++i) an->grad[i] += g[i];
            if (bn->requires_grad)
                for (int64_t i = 0; i < rb * c; ++i) bn->grad[i] += g[ra * c + i];
        });
    }
    return out;
}

// out[i] = x[i, ids[i]] for a 2-d tensor
template <typename T>
Tensor<T> pick(const Tensor<T>& x, const std::vector<int64_t>& ids) {
    if (x.rank() != 2) throw ValidationError("pick: input must be 2-d");
    const int64_t r = x.dim(0);
    const int64_t c = x.dim(1);
    if (static_cast<int64_t>(ids.size()) != r)
        throw ValidationError("pick: index list length must equal row count");
    for (int64_t id : ids)
        if (id < 0 || id >= c) throw ValidationError("pick: column index out of range");
    Tensor<T> out = Tensor<T>::zeros({r});
    {
        const T* px = x.value().data();
        T* po = out.value().data();
        for (int64_t i = 0; i < r; ++i) po[i] = px[i * c + ids[i]];
    }
    if (recording<T>(x.requires_grad())) {
        out.set_requires_grad(true);
        auto xn = x.node();
        auto on = out.node();
        auto idv = std::make_shared<std::vector<int64_t>>(ids);
        Tape<T>::active()->record("pick", [xn, on, idv, c]() {
            if (!xn->requires_grad) return;
            const T* g = on->grad.data();
            T* dx = xn->grad.data();
            for (size_t i = 0; i < idv->size(); ++i) dx[i * c + (*idv)[i]] += g[i];
        });
    }
    return out;
}

// ---- reductions ----

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T acc = T(0);
    for (const T v : x.value()) acc += v;
    Tensor<T> out = Tensor<T>::scalar(acc);
    finite_check(out, "sum");
    if (recording<T>(x.requires_grad())) {
        out.set_requires_grad(true);
        auto xn = x.node();
        auto on = out.node();
        Tape<T>::active()->record("sum", [xn, on]() {
            if (!xn->requires_grad) return;
            const T g = on->grad[0];
            for (auto& d : xn->grad) d += g;
        });
    }
    return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    return div(sum(x), static_cast<T>(x.numel()));
}

// ---- normalization ----

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis = -1) {
    const int r = static_cast<int>(x.rank());
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw ValidationError("softmax: axis out of range");
    if (axis != r - 1) {
        std::vector<int> to_last;
        for (int i = 0; i < r; ++i)
            if (i != axis) to_last.push_back(i);
        to_last.push_back(axis);
        std::vector<int> back(r);
        for (int i = 0; i < r; ++i) back[to_last[i]] = i;
        return permute(softmax(permute(x, to_last), -1), back);
    }
    const int64_t cols = x.dim(r - 1);
    const int64_t nrows = x.numel() / cols;
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    kernels::softmax_rows(x.value().data(), out.value().data(), nrows, cols);
    finite_check(out, "softmax");
    if (recording<T>(x.requires_grad())) {
        out.set_requires_grad(true);
        auto xn = x.node();
        auto on = out.node();
        Tape<T>::active()->record("softmax", [xn, on, nrows, cols]() {
            if (!xn->requires_grad) return;
            kernels::softmax_backward_rows(on->value.data(), on->grad.data(), xn->grad.data(),
                                           nrows, cols);
        });
    }
    return out;
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x, int axis = -1) {
    const int r = static_cast<int>(x.rank());
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw ValidationError("log_softmax: axis out of range");
    if (axis != r - 1) {
        std::vector<int> to_last;
        for (int i = 0; i < r; ++i)
            if (i != axis) to_last.push_back(i);
        to_last.push_back(axis);
        std::vector<int> back(r);
        for (int i = 0; i < r; ++i) back[to_last[i]] = i;
        return permute(log_softmax(permute(x, to_last), -1), back);
    }
    const int64_t cols = x.dim(r - 1);
    const int64_t nrows = x.numel() / cols;
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    kernels::log_softmax_rows(x.value().data(), out.value().data(), nrows, cols);
    finite_check(out, "log_softmax");
    if (recording<T>(x.requires_grad())) {
        out.set_requires_grad(true);
        auto xn = x.node();
        auto on = out.node();
        Tape<T>::active()->record("log_softmax", [xn, on, nrows, cols]() {
            if (!xn->requires_grad) return;
            kernels::log_softmax_backward_rows(on->value.data(), on->grad.data(), xn->grad.data(),
                                               nrows, cols);
        });
    }
    return out;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-5)) {
    if (x.rank() < 1) throw ValidationError("layer_norm: rank must be >= 1");
    const int64_t cols = x.dim(x.rank() - 1);
    if (gain.numel() != cols || bias.numel() != cols)
        throw ValidationError("layer_norm: gain/bias must have last-axis extent " +
                              std::to_string(cols));
    const int64_t nrows = x.numel() / cols;
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    auto mean_c = std::make_shared<std::vector<T>>(nrows);
    auto istd_c = std::make_shared<std::vector<T>>(nrows);
    kernels::layer_norm_rows(x.value().data(), gain.value().data(), bias.value().data(),
                             out.value().data(), mean_c->data(), istd_c->data(), nrows, cols, eps);
    finite_check(out, "layer_norm");
    if (recording<T>(x.requires_grad() || gain.requires_grad() || bias.requires_grad())) {
        out.set_requires_grad(true);
        auto xn = x.node();
        auto gn = gain.node();
        auto bn = bias.node();
        auto on = out.node();
        Tape<T>::active()->record("layer_norm", [xn, gn, bn, on, mean_c, istd_c, nrows, cols]() {
            // the kernel accumulates into all three grads; feed scratch
            // buffers for operands that do not take gradients
            std::vector<T> scratch_x, scratch_g, scratch_b;
            T* dx = xn->requires_grad ? xn->grad.data()
                                      : (scratch_x.assign(xn->value.size(), T(0)), scratch_x.data());
            T* dg = gn->requires_grad ? gn->grad.data()
                                      : (scratch_g.assign(gn->value.size(), T(0)), scratch_g.data());
            T* db = bn->requires_grad ? bn->grad.data()
                                      : (scratch_b.assign(bn->value.size(), T(0)), scratch_b.data());
            kernels::layer_norm_backward_rows(xn->value.data(), gn->value.data(), mean_c->data(),
                                              istd_c->data(), on->grad.data(), dx, dg, db, nrows,
                                              cols);
        });
    }
    return out;
}

// ---- dropout ----

// Inverted dropout: scales kept activations by 1/(1-p) so eval needs no
// rescaling. Identity when not training or p == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Rng& rng, bool training) {
    if (p < 0.0 || p >= 1.0) throw ValidationError("dropout: p must be in [0,1)");
    if (!training || p == 0.0) return x;
    const int64_t n = x.numel();
    auto mask = std::make_shared<std::vector<T>>(n);
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    for (int64_t i = 0; i < n; ++i)
        (*mask)[i] = (rng.uniform() >= p) ? keep_scale : T(0);
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    {
        const T* px = x.value().data();
        T* po = out.value().data();
        for (int64_t i = 0; i < n; ++i) po[i] = px[i] * (*mask)[i];
    }
    if (recording<T>(x.requires_grad())) {
        out.set_requires_grad(true);
        auto xn = x.node();
        auto on = out.node();
        Tape<T>::active()->record("dropout", [xn, on, mask, n]() {
            if (!xn->requires_grad) return;
            const T* g = on->grad.data();
            T* dx = xn->grad.data();
            for (int64_t i = 0; i < n; ++i) dx[i] += g[i] * (*mask)[i];
        });
    }
    return out;
}

}  // namespace wr
