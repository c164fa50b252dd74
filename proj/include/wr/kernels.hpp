#pragma once

#include <cstdint>

namespace wr::kernels {

// Two implementations of every heavy kernel: a plain serial reference in
// kernels::serial and an OpenMP version in kernels::par. Both compute each
// output element with the same inner summation order, so results are
// bit-identical regardless of backend or thread count. Tests assert this;
// the bench target measures the speed difference.
enum class Backend { serial, openmp };

Backend backend();
void set_backend(Backend b);
bool openmp_compiled();
int thread_count();

// Work-size threshold below which the dispatcher stays serial even in
// openmp mode. Parallel regions on tiny tensors cost more than they save.
inline constexpr int64_t par_grain = 1 << 14;

namespace serial {

// C[b] (+)= A[b] * B[b] for each batch b; row-major [m,k] x [k,n] -> [m,n]
template <typename T>
void matmul(const T* a, const T* b, T* c, int64_t batch, int64_t m, int64_t k, int64_t n,
            bool accumulate);

// dA[b] += dC[b] * B[b]^T
template <typename T>
void matmul_grad_a(T* da, const T* dc, const T* b, int64_t batch, int64_t m, int64_t k, int64_t n);

// dB[b] += A[b]^T * dC[b]
template <typename T>
void matmul_grad_b(T* db, const T* a, const T* dc, int64_t batch, int64_t m, int64_t k, int64_t n);

// y[r] = softmax(x[r]) per row, max-subtracted
template <typename T>
void softmax_rows(const T* x, T* y, int64_t rows, int64_t cols);

// dx[r] += y[r] .* (dy[r] - sum(dy[r] .* y[r]))
template <typename T>
void softmax_backward_rows(const T* y, const T* dy, T* dx, int64_t rows, int64_t cols);

// y[r] = x[r] - max(x[r]) - log(sum exp(x[r] - max))
template <typename T>
void log_softmax_rows(const T* x, T* y, int64_t rows, int64_t cols);

// dx[r] += dy[r] - exp(y[r]) * sum(dy[r])
template <typename T>
void log_softmax_backward_rows(const T* y, const T* dy, T* dx, int64_t rows, int64_t cols);

// y[r] = (x[r] - mean(x[r])) * inv_std(x[r]) .* gain + bias
// mean/inv_std caches are written per row for the backward pass.
template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T* y, T* mean, T* inv_std,
                     int64_t rows, int64_t cols, T eps);

// dx += per-row layer-norm backward; dgain/dbias summed over rows.
template <typename T>
void layer_norm_backward_rows(const T* x, const T* gain, const T* mean, const T* inv_std,
                              const T* dy, T* dx, T* dgain, T* dbias, int64_t rows, int64_t cols);

}  // namespace serial

namespace par {

template <typename T>
void matmul(const T* a, const T* b, T* c, int64_t batch, int64_t m, int64_t k, int64_t n,
            bool accumulate);

template <typename T>
void matmul_grad_a(T* da, const T* dc, const T* b, int64_t batch, int64_t m, int64_t k, int64_t n);

template <typename T>
void matmul_grad_b(T* db, const T* a, const T* dc, int64_t batch, int64_t m, int64_t k, int64_t n);

template <typename T>
void softmax_rows(const T* x, T* y, int64_t rows, int64_t cols);

template <typename T>
void softmax_backward_rows(const T* y, const T* dy, T* dx, int64_t rows, int64_t cols);

template <typename T>
void log_softmax_rows(const T* x, T* y, int64_t rows, int64_t cols);

template <typename T>
void log_softmax_backward_rows(const T* y, const T* dy, T* dx, int64_t rows, int64_t cols);

template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T* y, T* mean, T* inv_std,
                     int64_t rows, int64_t cols, T eps);

template <typename T>
void layer_norm_backward_rows(const T* x, const T* gain, const T* mean, const T* inv_std,
                              const T* dy, T* dx, T* dgain, T* dbias, int64_t rows, int64_t cols);

}  // namespace par

// Dispatchers: pick par when the backend is openmp and the work is big
// enough to amortize a parallel region.

template <typename T>
void matmul(const T* a, const T* b, T* c, int64_t batch, int64_t m, int64_t k, int64_t n,
            bool accumulate);

template <typename T>
void matmul_grad_a(T* da, const T* dc, const T* b, int64_t batch, int64_t m, int64_t k, int64_t n);

template <typename T>
void matmul_grad_b(T* db, const T* a, const T* dc, int64_t batch, int64_t m, int64_t k, int64_t n);

template <typename T>
void softmax_rows(const T* x, T* y, int64_t rows, int64_t cols);

template <typename T>
void softmax_backward_rows(const T* y, const T* dy, T* dx, int64_t rows, int64_t cols);

template <typename T>
void log_softmax_rows(const T* x, T* y, int64_t rows, int64_t cols);

template <typename T>
void log_softmax_backward_rows(const T* y, const T* dy, T* dx, int64_t rows, int64_t cols);

template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T* y, T* mean, T* inv_std,
                     int64_t rows, int64_t cols, T eps);

template <typename T>
void layer_norm_backward_rows(const T* x, const T* gain, const T* mean, const T* inv_std,
                              const T* dy, T* dx, T* dgain, T* dbias, int64_t rows, int64_t cols);

}  // namespace wr::kernels
