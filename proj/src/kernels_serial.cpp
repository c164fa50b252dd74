#include "wr/kernels.hpp"

#include <cmath>

namespace wr::kernels::serial {

template <typename T>
void matmul(const T* a, const T* b, T* c, int64_t batch, int64_t m, int64_t k, int64_t n,
            bool accumulate) {
    for (int64_t bt = 0; bt < batch; ++bt) {
        const T* ab = a + bt * m * k;
        const T* bb = b + bt * k * n;
        T* cb = c + bt * m * n;
        for (int64_t i = 0; i < m; ++i) {
            T* crow = cb + i * n;
            if (!accumulate) {
                for (int64_t j = 0; j < n; ++j) crow[j] = T(0);
            }
            // ikj order keeps the inner loop contiguous in b and c
            for (int64_t kk = 0; kk < k; ++kk) {
                const T av = ab[i * k + kk];
                const T* brow = bb + kk * n;
                for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
}

template <typename T>
void matmul_grad_a(T* da, const T* dc, const T* b, int64_t batch, int64_t m, int64_t k,
                   int64_t n) {
    // dA[i,kk] += sum_j dC[i,j] * B[kk,j]
    for (int64_t bt = 0; bt < batch; ++bt) {
        T* dab = da + bt * m * k;
        const T* dcb = dc + bt * m * n;
        const T* bb = b + bt * k * n;
        for (int64_t i = 0; i < m; ++i) {
            for (int64_t kk = 0; kk < k; ++kk) {
                T acc = T(0);
                const T* dcrow = dcb + i * n;
                const T* brow = bb + kk * n;
                for (int64_t j = 0; j < n; ++j) acc += dcrow[j] * brow[j];
                dab[i * k + kk] += acc;
            }
        }
    }
}

template <typename T>
void matmul_grad_b(T* db, const T* a, const T* dc, int64_t batch, int64_t m, int64_t k,
                   int64_t n) {
    // dB[kk,j] += sum_i A[i,kk] * dC[i,j]; fixed i order per output row
    for (int64_t bt = 0; bt < batch; ++bt) {
        T* dbb = db + bt * k * n;
        const T* ab = a + bt * m * k;
        const T* dcb = dc + bt * m * n;
        for (int64_t kk = 0; kk < k; ++kk) {
            T* dbrow = dbb + kk * n;
            for (int64_t i = 0; i < m; ++i) {
                const T av = ab[i * k + kk];
                const T* dcrow = dcb + i * n;
                for (int64_t j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
            }
        }
    }
}

template <typename T>
void softmax_rows(const T* x, T* y, int64_t rows, int64_t cols) {
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = x + r * cols;
        T* yr = y + r * cols;
        T mx = xr[0];
        for (int64_t j = 1; j < cols; ++j) mx = xr[j] > mx ? xr[j] : mx;
        T sum = T(0);
        for (int64_t j = 0; j < cols; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            sum += yr[j];
        }
        const T inv = T(1) / sum;
        for (int64_t j = 0; j < cols; ++j) yr[j] *= inv;
    }
}

template <typename T>
void softmax_backward_rows(const T* y, const T* dy, T* dx, int64_t rows, int64_t cols) {
    for (int64_t r = 0; r < rows; ++r) {
        const T* yr = y + r * cols;
        const T* dyr = dy + r * cols;
        T* dxr = dx + r * cols;
        T dot = T(0);
        for (int64_t j = 0; j < cols; ++j) dot += dyr[j] * yr[j];
        for (int64_t j = 0; j < cols; ++j) dxr[j] += yr[j] * (dyr[j] - dot);
    }
}

template <typename T>
void log_softmax_rows(const T* x, T* y, int64_t rows, int64_t cols) {
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = x + r * cols;
        T* yr = y + r * cols;
        T mx = xr[0];
        for (int64_t j = 1; j < cols; ++j) mx = xr[j] > mx ? xr[j] : mx;
        T sum = T(0);
        for (int64_t j = 0; j < cols; ++j) sum += std::exp(xr[j] - mx);
        const T lse = mx + std::log(sum);
        for (int64_t j = 0; j < cols; ++j) yr[j] = xr[j] - lse;
    }
}

template <typename T>
void log_softmax_backward_rows(const T* y, const T* dy, T* dx, int64_t rows, int64_t cols) {
    for (int64_t r = 0; r < rows; ++r) {
        const T* yr = y + r * cols;
        const T* dyr = dy + r * cols;
        T* dxr = dx + r * cols;
        T sum = T(0);
        for (int64_t j = 0; j < cols; ++j) sum += dyr[j];
        for (int64_t j = 0; j < cols; ++j) dxr[j] += dyr[j] - std::exp(yr[j]) * sum;
    }
}

template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T* y, T* mean, T* inv_std,
                     int64_t rows, int64_t cols, T eps) {
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = x + r * cols;
        T* yr = y + r * cols;
        T mu = T(0);
        for (int64_t j = 0; j < cols; ++j) mu += xr[j];
        mu /= T(cols);
        T var = T(0);
        for (int64_t j = 0; j < cols; ++j) {
            const T d = xr[j] - mu;
            var += d * d;
        }
        var /= T(cols);
        const T istd = T(1) / std::sqrt(var + eps);
        mean[r] = mu;
        inv_std[r] = istd;
        for (int64_t j = 0; j < cols; ++j) yr[j] = (xr[j] - mu) * istd * gain[j] + bias[j];
    }
}

template <typename T>
void layer_norm_backward_rows(const T* x, const T* gain, const T* mean, const T* inv_std,
                              const T* dy, T* dx, T* dgain, T* dbias, int64_t rows, int64_t cols) {
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = x + r * cols;
        const T* dyr = dy + r * cols;
        T* dxr = dx + r * cols;
        const T mu = mean[r];
        const T istd = inv_std[r];
        // dxhat = dy .* gain; dx = istd * (dxhat - mean(dxhat) - xhat * mean(dxhat .* xhat))
        T s1 = T(0);
        T s2 = T(0);
        for (int64_t j = 0; j < cols; ++j) {
            const T xhat = (xr[j] - mu) * istd;
            const T dxhat = dyr[j] * gain[j];
            s1 += dxhat;
            s2 += dxhat * xhat;
        }
        s1 /= T(cols);
        s2 /= T(cols);
        for (int64_t j = 0; j < cols; ++j) {
            const T xhat = (xr[j] - mu) * istd;
            const T dxhat = dyr[j] * gain[j];
            dxr[j] += istd * (dxhat - s1 - xhat * s2);
        }
    }
    // column reductions over rows, fixed row order
    for (int64_t j = 0; j < cols; ++j) {
        T dg = T(0);
        T dbv = T(0);
        for (int64_t r = 0; r < rows; ++r) {
            const T xhat = (x[r * cols + j] - mean[r]) * inv_std[r];
            dg += dy[r * cols + j] * xhat;
            dbv += dy[r * cols + j];
        }
        dgain[j] += dg;
        dbias[j] += dbv;
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

}  // namespace wr::kernels::serial
