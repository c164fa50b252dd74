#include "wr/kernels.hpp"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace wr::kernels {

namespace {
std::atomic<Backend> g_backend{
#ifdef _OPENMP
    Backend::openmp
#else
    Backend::serial
#endif
};
}  // namespace

Backend backend() { return g_backend.load(std::memory_order_relaxed); }

void set_backend(Backend b) { g_backend.store(b, std::memory_order_relaxed); }

bool openmp_compiled() {
#ifdef _OPENMP
    return true;
#else
    return false;
#endif
}

int thread_count() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace {
inline bool go_par(int64_t work) {
    return backend() == Backend::openmp && openmp_compiled() && work >= par_grain &&
           thread_count() > 1;
}
}  // namespace

template <typename T>
void matmul(const T* a, const T* b, T* c, int64_t batch, int64_t m, int64_t k, int64_t n,
            bool accumulate) {
    if (go_par(batch * m * k * n)) {
        par::matmul(a, b, c, batch, m, k, n, accumulate);
    } else {
        serial::matmul(a, b, c, batch, m, k, n, accumulate);
    }
}

template <typename T>
void matmul_grad_a(T* da, const T* dc, const T* b, int64_t batch, int64_t m, int64_t k,
                   int64_t n) {
    if (go_par(batch * m * k * n)) {
        par::matmul_grad_a(da, dc, b, batch, m, k, n);
    } else {
        serial::matmul_grad_a(da, dc, b, batch, m, k, n);
    }
}

template <typename T>
void matmul_grad_b(T* db, const T* a, const T* dc, int64_t batch, int64_t m, int64_t k,
                   int64_t n) {
    if (go_par(batch * m * k * n)) {
        par::matmul_grad_b(db, a, dc, batch, m, k, n);
    } else {
        serial::matmul_grad_b(db, a, dc, batch, m, k, n);
    }
}

template <typename T>
void softmax_rows(const T* x, T* y, int64_t rows, int64_t cols) {
    if (go_par(rows * cols)) {
        par::softmax_rows(x, y, rows, cols);
    } else {
        serial::softmax_rows(x, y, rows, cols);
    }
}

template <typename T>
void softmax_backward_rows(const T* y, const T* dy, T* dx, int64_t rows, int64_t cols) {
    if (go_par(rows * cols)) {
        par::softmax_backward_rows(y, dy, dx, rows, cols);
    } else {
        serial::softmax_backward_rows(y, dy, dx, rows, cols);
    }
}

template <typename T>
void log_softmax_rows(const T* x, T* y, int64_t rows, int64_t cols) {
    if (go_par(rows * cols)) {
        par::log_softmax_rows(x, y, rows, cols);
    } else {
        serial::log_softmax_rows(x, y, rows, cols);
    }
}

template <typename T>
void log_softmax_backward_rows(const T* y, const T* dy, T* dx, int64_t rows, int64_t cols) {
    if (go_par(rows * cols)) {
        par::log_softmax_backward_rows(y, dy, dx, rows, cols);
    } else {
        serial::log_softmax_backward_rows(y, dy, dx, rows, cols);
    }
}

template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T* y, T* mean, T* inv_std,
                     int64_t rows, int64_t cols, T eps) {
    if (go_par(rows * cols)) {
        par::layer_norm_rows(x, gain, bias, y, mean, inv_std, rows, cols, eps);
    } else {
        serial::layer_norm_rows(x, gain, bias, y, mean, inv_std, rows, cols, eps);
    }
}

template <typename T>
void layer_norm_backward_rows(const T* x, const T* gain, const T* mean, const T* inv_std,
                              const T* dy, T* dx, T* dgain, T* dbias, int64_t rows, int64_t cols) {
    if (go_par(rows * cols)) {
        par::layer_norm_backward_rows(x, gain, mean, inv_std, dy, dx, dgain, dbias, rows, cols);
    } else {
        serial::layer_norm_backward_rows(x, gain, mean, inv_std, dy, dx, dgain, dbias, rows, cols);
    }
}

template void matmul<float>(const float*, const float*, float*, int64_t, int64_t, int64_t, int64_t, bool);
template void matmul<double>(const double*, const double*, double*, int64_t, int64_t, int64_t, int64_t, bool);
template void matmul_grad_a<float>(float*, const float*, const float*, int64_t, int64_t, int64_t, int64_t);
template void matmul_grad_a<double>(double*, const double*, const double*, int64_t, int64_t, int64_t, int64_t);
template void matmul_grad_b<float>(float*, const float*, const float*, int64_t, int64_t, int64_t, int64_t);
template void matmul_grad_b<double>(double*, const double*, const double*, int64_t, int64_t, int64_t, int64_t);
template void softmax_rows<float>(const float*, float*, int64_t, int64_t);
template void softmax_rows<double>(const double*, double*, int64_t, int64_t);
template void softmax_backward_rows<float>(const float*, const float*, float*, int64_t, int64_t);
template void softmax_backward_rows<double>(const double*, const double*, double*, int64_t, int64_t);
template void log_softmax_rows<float>(const float*, float*, int64_t, int64_t);
template void log_softmax_rows<double>(const double*, double*, int64_t, int64_t);
template void log_softmax_backward_rows<float>(const float*, const float*, float*, int64_t, int64_t);
template void log_softmax_backward_rows<double>(const double*, const double*, double*, int64_t, int64_t);
template void layer_norm_rows<float>(const float*, const float*, const float*, float*, float*, float*, int64_t, int64_t, float);
template void layer_norm_rows<double>(const double*, const double*, const double*, double*, double*, double*, int64_t, int64_t, double);
template void layer_norm_backward_rows<float>(const float*, const float*, const float*, const float*, const float*, float*, float*, float*, int64_t, int64_t);
template void layer_norm_backward_rows<double>(const double*, const double*, const double*, const double*, const double*, double*, double*, double*, int64_t, int64_t);

}  // namespace wr::kernels
