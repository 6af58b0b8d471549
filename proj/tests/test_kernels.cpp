#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nrf/kernels.hpp"
#include "nrf/rng.hpp"

#include <cmath>
#include <vector>

using namespace nrf;

namespace {

template <typename T>
std::vector<T> random_vec(std::size_t n, std::uint64_t seed, double scale = 1.0) {
    std::vector<T> v(n);
    Rng rng(seed);
    for (auto& x : v) x = static_cast<T>(rng.uniform(-scale, scale));
    return v;
}

// Unblocked reference used to pin down both implementations.
template <typename T>
void naive_gemm(const std::vector<T>& a, const std::vector<T>& b, std::vector<T>& c, int m, int n,
                int k, bool accumulate) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = accumulate ? static_cast<double>(c[i * n + j]) : 0.0;
            for (int p = 0; p < k; ++p)
                acc += static_cast<double>(a[i * k + p]) * static_cast<double>(b[p * n + j]);
            c[i * n + j] = static_cast<T>(acc);
        }
}

}  // namespace

TEST_CASE("scalar gemm matches a naive reference") {
    const int shapes[][3] = {{1, 1, 1}, {3, 5, 7}, {4, 16, 8}, {17, 33, 61}, {8, 24, 60}};
    for (const auto& s : shapes) {
        const int m = s[0], n = s[1], k = s[2];
        auto a = random_vec<double>(static_cast<std::size_t>(m) * k, 1);
        auto b = random_vec<double>(static_cast<std::size_t>(k) * n, 2);
        auto c = random_vec<double>(static_cast<std::size_t>(m) * n, 3);
        auto c_ref = c;
        kern::scalar::gemm(a.data(), b.data(), c.data(), m, n, k, true);
        naive_gemm(a, b, c_ref, m, n, k, true);
        for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(c_ref[i]).epsilon(1e-12));
    }
}

#if NRF_HAVE_AVX2_KERNELS
TEST_CASE("avx2 kernels agree with scalar reference") {
    if (!kern::avx2_available()) {
        MESSAGE("AVX2 not available on this host; skipping");
        return;
    }
    SUBCASE("gemm float and double, remainders included") {
        const int shapes[][3] = {{1, 1, 1},   {2, 16, 4},  {4, 32, 8},   {5, 17, 9},
                                 {12, 64, 60}, {33, 7, 13}, {64, 48, 112}};
        for (const auto& s : shapes) {
            const int m = s[0], n = s[1], k = s[2];
            for (int acc = 0; acc < 2; ++acc) {
                auto af = random_vec<float>(static_cast<std::size_t>(m) * k, 11);
                auto bf = random_vec<float>(static_cast<std::size_t>(k) * n, 12);
                auto c0 = random_vec<float>(static_cast<std::size_t>(m) * n, 13);
                auto c1 = c0;
                kern::scalar::gemm(af.data(), bf.data(), c0.data(), m, n, k, acc != 0);
                kern::avx2::gemm(af.data(), bf.data(), c1.data(), m, n, k, acc != 0);
                for (std::size_t i = 0; i < c0.size(); ++i)
                    CHECK(std::abs(c0[i] - c1[i]) <= 1e-4f * (1.0f + std::abs(c0[i])));

                auto ad = random_vec<double>(static_cast<std::size_t>(m) * k, 21);
                auto bd = random_vec<double>(static_cast<std::size_t>(k) * n, 22);
                auto d0 = random_vec<double>(static_cast<std::size_t>(m) * n, 23);
                auto d1 = d0;
                kern::scalar::gemm(ad.data(), bd.data(), d0.data(), m, n, k, acc != 0);
                kern::avx2::gemm(ad.data(), bd.data(), d1.data(), m, n, k, acc != 0);
                for (std::size_t i = 0; i < d0.size(); ++i)
                    CHECK(std::abs(d0[i] - d1[i]) <= 1e-13 * (1.0 + std::abs(d0[i])));
            }
        }
    }
    SUBCASE("elementwise kernels") {
        const std::size_t n = 1003;  // not a multiple of the lane width
        auto x0 = random_vec<float>(n, 31);
        auto x1 = x0;
        kern::scalar::relu(x0.data(), n);
        kern::avx2::relu(x1.data(), n);
        CHECK(x0 == x1);

        auto g0 = random_vec<float>(n, 32);
        auto g1 = g0;
        kern::scalar::relu_mask_backward(g0.data(), x0.data(), n);
        kern::avx2::relu_mask_backward(g1.data(), x1.data(), n);
        CHECK(g0 == g1);

        auto y0 = random_vec<double>(n, 33);
        auto y1 = y0;
        auto xs = random_vec<double>(n, 34);
        kern::scalar::axpy(0.37, xs.data(), y0.data(), n);
        kern::avx2::axpy(0.37, xs.data(), y1.data(), n);
        for (std::size_t i = 0; i < n; ++i) CHECK(y0[i] == doctest::Approx(y1[i]).epsilon(1e-14));
    }
    SUBCASE("adam update") {
        const std::size_t n = 517;
        auto p0 = random_vec<float>(n, 41);
        auto p1 = p0;
        auto g = random_vec<float>(n, 42);
        auto m0 = random_vec<float>(n, 43, 0.01);
        auto m1 = m0;
        auto v0 = random_vec<float>(n, 44, 0.0);
        for (auto& v : v0) v = std::abs(v) + 0.01f;
        auto v1 = v0;
        kern::scalar::adam_update(p0.data(), g.data(), m0.data(), v0.data(), n, 1e-3f, 0.9f,
                                  0.999f, 1e-8f, 1.5f, 1.2f);
        kern::avx2::adam_update(p1.data(), g.data(), m1.data(), v1.data(), n, 1e-3f, 0.9f, 0.999f,
                                1e-8f, 1.5f, 1.2f);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(std::abs(p0[i] - p1[i]) <= 1e-6f);
            CHECK(std::abs(m0[i] - m1[i]) <= 1e-6f);
            CHECK(std::abs(v0[i] - v1[i]) <= 1e-6f);
        }
    }
}
#endif

TEST_CASE("dispatch honours forced ISA") {
    const auto prev = kern::active_isa();
    kern::force_isa(kern::Isa::scalar);
    CHECK(kern::active_isa() == kern::Isa::scalar);
    kern::force_isa(prev);
}

TEST_CASE("transpose round trip") {
    const int m = 13, n = 29;
    auto a = random_vec<float>(static_cast<std::size_t>(m) * n, 51);
    std::vector<float> at(a.size()), back(a.size());
    kern::transpose(a.data(), at.data(), m, n);
    kern::transpose(at.data(), back.data(), n, m);
    CHECK(a == back);
}

TEST_CASE("col_sums accumulates by column") {
    const int m = 7, n = 5;
    auto a = random_vec<double>(static_cast<std::size_t>(m) * n, 61);
    std::vector<double> out(n, 1.0);
    kern::col_sums(a.data(), out.data(), m, n, true);
    for (int j = 0; j < n; ++j) {
        double want = 1.0;
        for (int i = 0; i < m; ++i) want += a[static_cast<std::size_t>(i) * n + j];
        CHECK(out[j] == doctest::Approx(want).epsilon(1e-12));
    }
}
