#pragma once

#include <cstddef>

// Dense arithmetic kernels behind the field/optimizer hot loops. Scalar
// reference implementations are the ground truth; an AVX2 variant is picked
// at runtime when the CPU supports it. Both variants accumulate in the same
// index order, so they agree to rounding (tested), and neither spawns
// threads, so results never depend on the worker count.
namespace nrf::kern {

enum class Isa { scalar, avx2 };

bool avx2_available();
Isa active_isa();
void force_isa(Isa isa);   // tests / NRF_ISA env override
const char* isa_name(Isa isa);

// C(MxN) = (accumulate ? C : 0) + A(MxK) * B(KxN); row-major throughout.
template <typename T>
void gemm(const T* a, const T* b, T* c, int m, int n, int k, bool accumulate);

// at(NxM) = transpose of a(MxN).
template <typename T>
void transpose(const T* a, T* at, int m, int n);

// y[i,:] += bias for each of m rows.
template <typename T>
void add_bias_rows(T* y, const T* bias, int m, int n);

template <typename T>
void relu(T* x, std::size_t n);

// grad *= (act > 0); act is the post-ReLU activation.
template <typename T>
void relu_mask_backward(T* grad, const T* act, std::size_t n);

// out[j] = (accumulate ? out[j] : 0) + sum_i a[i,j].
template <typename T>
void col_sums(const T* a, T* out, int m, int n, bool accumulate);

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n);

// Bias-corrected Adam step: corr1 = 1/(1-beta1^t), corr2 = 1/(1-beta2^t).
template <typename T>
void adam_update(T* p, const T* g, T* m, T* v, std::size_t n,
                 T lr, T beta1, T beta2, T eps, T corr1, T corr2);

namespace scalar {
template <typename T> void gemm(const T* a, const T* b, T* c, int m, int n, int k, bool accumulate);
template <typename T> void transpose(const T* a, T* at, int m, int n);
template <typename T> void add_bias_rows(T* y, const T* bias, int m, int n);
template <typename T> void relu(T* x, std::size_t n);
template <typename T> void relu_mask_backward(T* grad, const T* act, std::size_t n);
template <typename T> void col_sums(const T* a, T* out, int m, int n, bool accumulate);
template <typename T> void axpy(T alpha, const T* x, T* y, std::size_t n);
template <typename T> void adam_update(T* p, const T* g, T* m, T* v, std::size_t n,
                                       T lr, T beta1, T beta2, T eps, T corr1, T corr2);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define NRF_HAVE_AVX2_KERNELS 1
namespace avx2 {
template <typename T> void gemm(const T* a, const T* b, T* c, int m, int n, int k, bool accumulate);
template <typename T> void add_bias_rows(T* y, const T* bias, int m, int n);
template <typename T> void relu(T* x, std::size_t n);
template <typename T> void relu_mask_backward(T* grad, const T* act, std::size_t n);
template <typename T> void col_sums(const T* a, T* out, int m, int n, bool accumulate);
template <typename T> void axpy(T alpha, const T* x, T* y, std::size_t n);
template <typename T> void adam_update(T* p, const T* g, T* m, T* v, std::size_t n,
                                       T lr, T beta1, T beta2, T eps, T corr1, T corr2);
}  // namespace avx2
#else
#define NRF_HAVE_AVX2_KERNELS 0
#endif

}  // namespace nrf::kern
