#include "nrf/kernels.hpp"

#if NRF_HAVE_AVX2_KERNELS

#include <immintrin.h>

#include <cmath>
#include <cstring>

namespace nrf::kern::avx2 {

namespace {

// Thin wrappers so the float (8-lane) and double (4-lane) microkernels share
// one template body.
struct VecF {
    using Pack = __m256;
    using Elem = float;
    static constexpr int lanes = 8;
    static Pack zero() { return _mm256_setzero_ps(); }
    static Pack load(const float* p) { return _mm256_loadu_ps(p); }
    static void store(float* p, Pack v) { _mm256_storeu_ps(p, v); }
    static Pack broadcast(float v) { return _mm256_set1_ps(v); }
    static Pack fma(Pack a, Pack b, Pack c) { return _mm256_fmadd_ps(a, b, c); }
    static Pack add(Pack a, Pack b) { return _mm256_add_ps(a, b); }
    static Pack mul(Pack a, Pack b) { return _mm256_mul_ps(a, b); }
    static Pack max(Pack a, Pack b) { return _mm256_max_ps(a, b); }
    static Pack cmp_gt(Pack a, Pack b) { return _mm256_cmp_ps(a, b, _CMP_GT_OQ); }
    static Pack and_(Pack a, Pack b) { return _mm256_and_ps(a, b); }
    static Pack sqrt(Pack a) { return _mm256_sqrt_ps(a); }
    static Pack div(Pack a, Pack b) { return _mm256_div_ps(a, b); }
    static Pack sub(Pack a, Pack b) { return _mm256_sub_ps(a, b); }
};

struct VecD {
    using Pack = __m256d;
    using Elem = double;
    static constexpr int lanes = 4;
    static Pack zero() { return _mm256_setzero_pd(); }
    static Pack load(const double* p) { return _mm256_loadu_pd(p); }
    static void store(double* p, Pack v) { _mm256_storeu_pd(p, v); }
    static Pack broadcast(double v) { return _mm256_set1_pd(v); }
    static Pack fma(Pack a, Pack b, Pack c) { return _mm256_fmadd_pd(a, b, c); }
    static Pack add(Pack a, Pack b) { return _mm256_add_pd(a, b); }
    static Pack mul(Pack a, Pack b) { return _mm256_mul_pd(a, b); }
    static Pack max(Pack a, Pack b) { return _mm256_max_pd(a, b); }
    static Pack cmp_gt(Pack a, Pack b) { return _mm256_cmp_pd(a, b, _CMP_GT_OQ); }
    static Pack and_(Pack a, Pack b) { return _mm256_and_pd(a, b); }
    static Pack sqrt(Pack a) { return _mm256_sqrt_pd(a); }
    static Pack div(Pack a, Pack b) { return _mm256_div_pd(a, b); }
    static Pack sub(Pack a, Pack b) { return _mm256_sub_pd(a, b); }
};

template <typename T> struct VecFor;
template <> struct VecFor<float> { using type = VecF; };
template <> struct VecFor<double> { using type = VecD; };

// Register-blocked GEMM: 4 rows of A against 2 packs of B columns.
template <typename V>
void gemm_impl(const typename V::Elem* a, const typename V::Elem* b, typename V::Elem* c,
               int m, int n, int k, bool accumulate) {
    using T = typename V::Elem;
    using P = typename V::Pack;
    constexpr int L = V::lanes;
    const int nb = 2 * L;                 // column block
    const int n_main = n - n % nb;
    const int m_main = m - m % 4;

    for (int i0 = 0; i0 < m_main; i0 += 4) {
        const T* a0 = a + static_cast<std::size_t>(i0) * k;
        const T* a1 = a0 + k;
        const T* a2 = a1 + k;
        const T* a3 = a2 + k;
        T* c0 = c + static_cast<std::size_t>(i0) * n;
        T* c1 = c0 + n;
        T* c2 = c1 + n;
        T* c3 = c2 + n;
        for (int j = 0; j < n_main; j += nb) {
            P acc00, acc01, acc10, acc11, acc20, acc21, acc30, acc31;
            if (accumulate) {
                acc00 = V::load(c0 + j); acc01 = V::load(c0 + j + L);
                acc10 = V::load(c1 + j); acc11 = V::load(c1 + j + L);
                acc20 = V::load(c2 + j); acc21 = V::load(c2 + j + L);
                acc30 = V::load(c3 + j); acc31 = V::load(c3 + j + L);
            } else {
                acc00 = acc01 = acc10 = acc11 = V::zero();
                acc20 = acc21 = acc30 = acc31 = V::zero();
            }
            const T* bp = b + j;
            for (int p = 0; p < k; ++p, bp += n) {
                const P b0 = V::load(bp);
                const P b1 = V::load(bp + L);
                const P av0 = V::broadcast(a0[p]);
                const P av1 = V::broadcast(a1[p]);
                const P av2 = V::broadcast(a2[p]);
                const P av3 = V::broadcast(a3[p]);
                acc00 = V::fma(av0, b0, acc00); acc01 = V::fma(av0, b1, acc01);
                acc10 = V::fma(av1, b0, acc10); acc11 = V::fma(av1, b1, acc11);
                acc20 = V::fma(av2, b0, acc20); acc21 = V::fma(av2, b1, acc21);
                acc30 = V::fma(av3, b0, acc30); acc31 = V::fma(av3, b1, acc31);
            }
            V::store(c0 + j, acc00); V::store(c0 + j + L, acc01);
            V::store(c1 + j, acc10); V::store(c1 + j + L, acc11);
            V::store(c2 + j, acc20); V::store(c2 + j + L, acc21);
            V::store(c3 + j, acc30); V::store(c3 + j + L, acc31);
        }
    }

    // Column tail for the blocked rows, one pack (or scalar) at a time.
    if (n_main < n) {
        for (int i = 0; i < m_main; ++i) {
            const T* arow = a + static_cast<std::size_t>(i) * k;
            T* crow = c + static_cast<std::size_t>(i) * n;
            for (int j = n_main; j < n; ++j) {
                T acc = accumulate ? crow[j] : T(0);
                for (int p = 0; p < k; ++p) acc = std::fma(arow[p], b[static_cast<std::size_t>(p) * n + j], acc);
                crow[j] = acc;
            }
        }
    }

    // Row tail: single-row kernel over full width.
    for (int i = m_main; i < m; ++i) {
        const T* arow = a + static_cast<std::size_t>(i) * k;
        T* crow = c + static_cast<std::size_t>(i) * n;
        int j = 0;
        for (; j + L <= n; j += L) {
            P acc = accumulate ? V::load(crow + j) : V::zero();
            const T* bp = b + j;
            for (int p = 0; p < k; ++p, bp += n) acc = V::fma(V::broadcast(arow[p]), V::load(bp), acc);
            V::store(crow + j, acc);
        }
        for (; j < n; ++j) {
            T acc = accumulate ? crow[j] : T(0);
            for (int p = 0; p < k; ++p) acc = std::fma(arow[p], b[static_cast<std::size_t>(p) * n + j], acc);
            crow[j] = acc;
        }
    }
}

template <typename V>
void relu_impl(typename V::Elem* x, std::size_t n) {
    using T = typename V::Elem;
    constexpr int L = V::lanes;
    const auto z = V::zero();
    std::size_t i = 0;
    for (; i + L <= n; i += L) V::store(x + i, V::max(V::load(x + i), z));
    for (; i < n; ++i) x[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename V>
void relu_mask_impl(typename V::Elem* grad, const typename V::Elem* act, std::size_t n) {
    using T = typename V::Elem;
    constexpr int L = V::lanes;
    const auto z = V::zero();
    std::size_t i = 0;
    for (; i + L <= n; i += L) {
        const auto mask = V::cmp_gt(V::load(act + i), z);
        V::store(grad + i, V::and_(V::load(grad + i), mask));
    }
    for (; i < n; ++i)
        if (!(act[i] > T(0))) grad[i] = T(0);
}

template <typename V>
void axpy_impl(typename V::Elem alpha, const typename V::Elem* x, typename V::Elem* y, std::size_t n) {
    constexpr int L = V::lanes;
    const auto av = V::broadcast(alpha);
    std::size_t i = 0;
    for (; i + L <= n; i += L) V::store(y + i, V::fma(av, V::load(x + i), V::load(y + i)));
    for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

template <typename V>
void adam_impl(typename V::Elem* p, const typename V::Elem* g, typename V::Elem* m, typename V::Elem* v,
               std::size_t n, typename V::Elem lr, typename V::Elem beta1, typename V::Elem beta2,
               typename V::Elem eps, typename V::Elem corr1, typename V::Elem corr2) {
    using T = typename V::Elem;
    constexpr int L = V::lanes;
    const auto b1 = V::broadcast(beta1), ob1 = V::broadcast(T(1) - beta1);
    const auto b2 = V::broadcast(beta2), ob2 = V::broadcast(T(1) - beta2);
    const auto vlr = V::broadcast(lr), veps = V::broadcast(eps);
    const auto c1 = V::broadcast(corr1), c2 = V::broadcast(corr2);
    std::size_t i = 0;
    for (; i + L <= n; i += L) {
        const auto gv = V::load(g + i);
        auto mv = V::add(V::mul(b1, V::load(m + i)), V::mul(ob1, gv));
        auto vv = V::add(V::mul(b2, V::load(v + i)), V::mul(ob2, V::mul(gv, gv)));
        V::store(m + i, mv);
        V::store(v + i, vv);
        const auto mhat = V::mul(mv, c1);
        const auto vhat = V::mul(vv, c2);
        const auto step = V::div(V::mul(vlr, mhat), V::add(V::sqrt(vhat), veps));
        V::store(p + i, V::sub(V::load(p + i), step));
    }
    for (; i < n; ++i) {
        m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
        v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
        p[i] -= lr * (m[i] * corr1) / (std::sqrt(v[i] * corr2) + eps);
    }
}

}  // namespace

template <typename T>
void gemm(const T* a, const T* b, T* c, int m, int n, int k, bool accumulate) {
    gemm_impl<typename VecFor<T>::type>(a, b, c, m, n, k, accumulate);
}

template <typename T>
void add_bias_rows(T* y, const T* bias, int m, int n) {
    using V = typename VecFor<T>::type;
    constexpr int L = V::lanes;
    for (int i = 0; i < m; ++i) {
        T* row = y + static_cast<std::size_t>(i) * n;
        int j = 0;
        for (; j + L <= n; j += L) V::store(row + j, V::add(V::load(row + j), V::load(bias + j)));
        for (; j < n; ++j) row[j] += bias[j];
    }
}

template <typename T>
void relu(T* x, std::size_t n) { relu_impl<typename VecFor<T>::type>(x, n); }

template <typename T>
void relu_mask_backward(T* grad, const T* act, std::size_t n) {
    relu_mask_impl<typename VecFor<T>::type>(grad, act, n);
}

template <typename T>
void col_sums(const T* a, T* out, int m, int n, bool accumulate) {
    using V = typename VecFor<T>::type;
    constexpr int L = V::lanes;
    if (!accumulate) std::memset(out, 0, sizeof(T) * n);
    for (int i = 0; i < m; ++i) {
        const T* row = a + static_cast<std::size_t>(i) * n;
        int j = 0;
        for (; j + L <= n; j += L) V::store(out + j, V::add(V::load(out + j), V::load(row + j)));
        for (; j < n; ++j) out[j] += row[j];
    }
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
    axpy_impl<typename VecFor<T>::type>(alpha, x, y, n);
}

template <typename T>
void adam_update(T* p, const T* g, T* m, T* v, std::size_t n,
                 T lr, T beta1, T beta2, T eps, T corr1, T corr2) {
    adam_impl<typename VecFor<T>::type>(p, g, m, v, n, lr, beta1, beta2, eps, corr1, corr2);
}

template void gemm<float>(const float*, const float*, float*, int, int, int, bool);
template void gemm<double>(const double*, const double*, double*, int, int, int, bool);
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

}  // namespace nrf::kern::avx2

#endif  // NRF_HAVE_AVX2_KERNELS
