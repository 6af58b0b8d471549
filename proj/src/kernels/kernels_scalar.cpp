#include "nrf/kernels.hpp"

#include <cmath>
#include <cstring>

namespace nrf::kern::scalar {

template <typename T>
void gemm(const T* a, const T* b, T* c, int m, int n, int k, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        T* crow = c + static_cast<std::size_t>(i) * n;
        if (!accumulate) std::memset(crow, 0, sizeof(T) * n);
        const T* arow = a + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const T av = arow[p];
            const T* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
void transpose(const T* a, T* at, int m, int n) {
    constexpr int B = 32;
    for (int i0 = 0; i0 < m; i0 += B)
        for (int j0 = 0; j0 < n; j0 += B) {
            const int i1 = std::min(m, i0 + B), j1 = std::min(n, j0 + B);
            for (int i = i0; i < i1; ++i)
                for (int j = j0; j < j1; ++j)
                    at[static_cast<std::size_t>(j) * m + i] = a[static_cast<std::size_t>(i) * n + j];
        }
}

template <typename T>
void add_bias_rows(T* y, const T* bias, int m, int n) {
    for (int i = 0; i < m; ++i) {
        T* row = y + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) row[j] += bias[j];
    }
}

template <typename T>
void relu(T* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_mask_backward(T* grad, const T* act, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (!(act[i] > T(0))) grad[i] = T(0);
}

template <typename T>
void col_sums(const T* a, T* out, int m, int n, bool accumulate) {
    if (!accumulate) std::memset(out, 0, sizeof(T) * n);
    for (int i = 0; i < m; ++i) {
        const T* row = a + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) out[j] += row[j];
    }
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void adam_update(T* p, const T* g, T* m, T* v, std::size_t n,
                 T lr, T beta1, T beta2, T eps, T corr1, T corr2) {
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
        v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
        const T mhat = m[i] * corr1;
        const T vhat = v[i] * corr2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

template void gemm<float>(const float*, const float*, float*, int, int, int, bool);
template void gemm<double>(const double*, const double*, double*, int, int, int, bool);
template void transpose<float>(const float*, float*, int, int);
template void transpose<double>(const double*, double*, int, int);
template void add_bias_rows<float>(float*, const float*, int, int);
template void add_bias_rows<double>(double*, const double*, int, int);
template void relu<float>(float*, std::size_t);
template void relu<double>(double*, std::size_t);
template void relu_mask_backward<float>(float*, const float*, std::size_t);
template void relu_mask_backward<double>(double*, const double*, std::size_t);
template void col_sums<float>(const float*, float*, int, int, bool);
template void col_sums<double>(const double*, double*, int, int, bool);
template void axpy<float>(float, const float*, float*, std::size_t);
template void axpy<double>(double, const double*, double*, std::size_t);
template void adam_update<float>(float*, const float*, float*, float*, std::size_t,
                                 float, float, float, float, float, float);
template void adam_update<double>(double*, const double*, double*, double*, std::size_t,
                                  double, double, double, double, double, double);

}  // namespace nrf::kern::scalar
