#include "nrf/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace nrf::kern {

bool avx2_available() {
#if NRF_HAVE_AVX2_KERNELS
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

namespace {

Isa detect() {
    if (const char* env = std::getenv("NRF_ISA")) {
        if (std::strcmp(env, "scalar") == 0) return Isa::scalar;
        if (std::strcmp(env, "avx2") == 0 && avx2_available()) return Isa::avx2;
    }
    return avx2_available() ? Isa::avx2 : Isa::scalar;
}

Isa g_isa = detect();

}  // namespace

Isa active_isa() { return g_isa; }

void force_isa(Isa isa) {
    if (isa == Isa::avx2 && !avx2_available()) isa = Isa::scalar;
    g_isa = isa;
}

const char* isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

#if NRF_HAVE_AVX2_KERNELS
#define NRF_DISPATCH(fn, ...) \
    if (g_isa == Isa::avx2) { avx2::fn(__VA_ARGS__); return; } \
    scalar::fn(__VA_ARGS__)
#else
#define NRF_DISPATCH(fn, ...) scalar::fn(__VA_ARGS__)
#endif

template <typename T>
void gemm(const T* a, const T* b, T* c, int m, int n, int k, bool accumulate) {
    NRF_DISPATCH(gemm, a, b, c, m, n, k, accumulate);
}

template <typename T>
void transpose(const T* a, T* at, int m, int n) {
    scalar::transpose(a, at, m, n);  // memory bound; scalar tiling is enough
}

template <typename T>
void add_bias_rows(T* y, const T* bias, int m, int n) {
    NRF_DISPATCH(add_bias_rows, y, bias, m, n);
}

template <typename T>
void relu(T* x, std::size_t n) { NRF_DISPATCH(relu, x, n); }

template <typename T>
void relu_mask_backward(T* grad, const T* act, std::size_t n) {
    NRF_DISPATCH(relu_mask_backward, grad, act, n);
}

template <typename T>
void col_sums(const T* a, T* out, int m, int n, bool accumulate) {
    NRF_DISPATCH(col_sums, a, out, m, n, accumulate);
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
    NRF_DISPATCH(axpy, alpha, x, y, n);
}

template <typename T>
void adam_update(T* p, const T* g, T* m, T* v, std::size_t n,
                 T lr, T beta1, T beta2, T eps, T corr1, T corr2) {
    NRF_DISPATCH(adam_update, p, g, m, v, n, lr, beta1, beta2, eps, corr1, corr2);
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

}  // namespace nrf::kern
