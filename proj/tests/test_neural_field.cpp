#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nrf/neural_field.hpp"
#include "nrf/rng.hpp"
#include "test_util.hpp"

#include <cmath>
#include <fstream>
#include <vector>

using namespace nrf;

namespace {

FieldArch tiny_arch() { return {2, 8, true, true}; }

template <typename T>
std::vector<T> random_rows(int m, int dim, std::uint64_t seed, double scale = 1.0) {
    std::vector<T> v(static_cast<std::size_t>(m) * dim);
    Rng rng(seed);
    for (auto& x : v) x = static_cast<T>(rng.uniform(-scale, scale));
    return v;
}

}  // namespace

TEST_CASE("fourier encoding hand examples") {
    SUBCASE("gamma(0) with one octave") {
        const double in[1] = {0.0};
        double out[2];
        fourier_encode<double>(std::span<const double>(in, 1), 1, std::span<double>(out, 2));
        CHECK(out[0] == 0.0);
        CHECK(out[1] == 1.0);
    }
    SUBCASE("three-vector at four octaves gives 24 values") {
        EncodingConfig enc;
        CHECK(enc.dir_dim() == 24);
        CHECK(enc.normal_dim() == 24);
        CHECK(enc.pos_dim() == 60);
        double out[24];
        fourier_encode3(Vec3d{0.1, 0.2, 0.3}, 4, out);  // size checked inside
    }
    SUBCASE("gamma(pi/2) with two octaves") {
        const double in[1] = {3.14159265358979323846 / 2};
        double out[4];
        fourier_encode<double>(std::span<const double>(in, 1), 2, std::span<double>(out, 4));
        CHECK(out[0] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(out[1] == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(out[2] == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(out[3] == doctest::Approx(-1.0).epsilon(1e-12));
    }
    SUBCASE("dimension law") {
        for (int L : {1, 3, 10})
            for (int k : {1, 2, 3, 5}) {
                std::vector<double> in(k, 0.5), out(2 * L * k);
                CHECK_NOTHROW(fourier_encode<double>(in, L, out));
                std::vector<double> bad(2 * L * k + 1);
                CHECK_THROWS_AS(fourier_encode<double>(in, L, bad), std::invalid_argument);
            }
    }
}

TEST_CASE("init_field is deterministic and shape-consistent") {
    const EncodingConfig enc;
    const FieldParams a = init_field<float>(enc, tiny_arch(), 42);
    const FieldParams b = init_field<float>(enc, tiny_arch(), 42);
    CHECK(a.values == b.values);
    const FieldParams c = init_field<float>(enc, tiny_arch(), 43);
    CHECK(a.values != c.values);

    const FieldArch big{4, 64, true, true};
    const FieldParams d = init_field<float>(enc, big, 1);
    CHECK(d.trunk.size() == 4);
    CHECK(d.trunk[0].rows == enc.pos_dim());
    CHECK(d.trunk[0].cols == 64);
    CHECK(d.inject.rows == 64 + 24 + 24);
    CHECK(d.sigma_head.cols == 1);
    CHECK(d.color_head.cols == 3);

    const FieldArch no_dir{4, 64, false, true};
    CHECK(init_field<float>(enc, no_dir, 1).inject.rows == 64 + 24);
}

TEST_CASE("eval_field activation contracts") {
    const EncodingConfig enc;
    FieldParams p = init_field<float>(enc, tiny_arch(), 7);
    const auto x = random_rows<float>(1, enc.pos_dim(), 1);
    const auto d = random_rows<float>(1, enc.dir_dim(), 2);
    const auto n = random_rows<float>(1, enc.normal_dim(), 3);

    SUBCASE("zero color head gives mid-gray") {
        std::fill(p.w(p.color_head), p.w(p.color_head) + p.color_head.total(), 0.0f);
        const FieldOutput out = eval_field<float>(p, x, d, n);
        CHECK(out.color.x == doctest::Approx(0.5));
        CHECK(out.color.y == doctest::Approx(0.5));
        CHECK(out.color.z == doctest::Approx(0.5));
    }
    SUBCASE("zero density head gives zero sigma") {
        std::fill(p.w(p.sigma_head), p.w(p.sigma_head) + p.sigma_head.total(), 0.0f);
        CHECK(eval_field<float>(p, x, d, n).sigma == 0.0);
    }
    SUBCASE("outputs satisfy range contracts for random nets") {
        Rng rng(9);
        for (int trial = 0; trial < 20; ++trial) {
            const FieldParams q = init_field<float>(enc, tiny_arch(), rng.next_u64());
            const FieldOutput out = eval_field<float>(q, x, d, n);
            CHECK(out.sigma >= 0.0);
            for (int cidx = 0; cidx < 3; ++cidx) {
                CHECK(out.color[cidx] >= 0.0);
                CHECK(out.color[cidx] <= 1.0);
            }
        }
    }
    SUBCASE("evaluation is reproducible bit for bit") {
        const FieldOutput a = eval_field<float>(p, x, d, n);
        const FieldOutput b = eval_field<float>(p, x, d, n);
        CHECK(a.sigma == b.sigma);
        CHECK(a.color == b.color);
    }
    SUBCASE("dimension mismatches are rejected") {
        const auto bad = random_rows<float>(1, enc.pos_dim() - 1, 4);
        CHECK_THROWS_AS(static_cast<void>(eval_field<float>(p, bad, d, n)), std::invalid_argument);
    }
}

TEST_CASE("field gradients match central finite differences") {
    const EncodingConfig enc;
    const FieldArch arch = tiny_arch();
    FieldParamsT<double> p = init_field<double>(enc, arch, 11);
    const int m = 5;
    const auto x = random_rows<double>(m, enc.pos_dim(), 21);
    const auto d = random_rows<double>(m, enc.dir_dim(), 22);
    const auto n = random_rows<double>(m, enc.normal_dim(), 23);
    const auto dsig = random_rows<double>(m, 1, 24);
    const auto dcol = random_rows<double>(m, 3, 25);

    auto objective = [&]() {
        std::vector<double> sigma(m), color(m * 3);
        field_forward<double>(p, x.data(), d.data(), n.data(), m, sigma.data(), color.data(),
                              nullptr);
        double obj = 0;
        for (int i = 0; i < m; ++i) obj += dsig[i] * sigma[i];
        for (int i = 0; i < m * 3; ++i) obj += dcol[i] * color[i];
        return obj;
    };

    std::vector<double> grad(p.values.size(), 0.0);
    {
        std::vector<double> sigma(m), color(m * 3);
        ForwardCache<double> cache;
        field_forward<double>(p, x.data(), d.data(), n.data(), m, sigma.data(), color.data(),
                              &cache);
        field_backward<double>(p, cache, dsig.data(), dcol.data(), grad.data());
    }

    Rng rng(31);
    const double h = 1e-5;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t idx = rng.below(p.values.size());
        const double keep = p.values[idx];
        p.values[idx] = keep + h;
        const double fp = objective();
        p.values[idx] = keep - h;
        const double fm = objective();
        p.values[idx] = keep;
        const double fd = (fp - fm) / (2 * h);
        CHECK(nrf::test::rel_err(grad[idx], fd) < 1e-6);
    }
}

TEST_CASE("batch gradient equals the sum of per-example gradients") {
    const EncodingConfig enc;
    FieldParamsT<double> p = init_field<double>(enc, tiny_arch(), 13);
    const int m = 4;
    const auto x = random_rows<double>(m, enc.pos_dim(), 41);
    const auto d = random_rows<double>(m, enc.dir_dim(), 42);
    const auto n = random_rows<double>(m, enc.normal_dim(), 43);
    const auto dsig = random_rows<double>(m, 1, 44);
    const auto dcol = random_rows<double>(m, 3, 45);

    std::vector<double> grad_batch(p.values.size(), 0.0);
    {
        std::vector<double> sigma(m), color(m * 3);
        ForwardCache<double> cache;
        field_forward<double>(p, x.data(), d.data(), n.data(), m, sigma.data(), color.data(), &cache);
        field_backward<double>(p, cache, dsig.data(), dcol.data(), grad_batch.data());
    }
    std::vector<double> grad_sum(p.values.size(), 0.0);
    for (int i = 0; i < m; ++i) {
        std::vector<double> sigma(1), color(3);
        ForwardCache<double> cache;
        field_forward<double>(p, x.data() + i * enc.pos_dim(), d.data() + i * enc.dir_dim(),
                              n.data() + i * enc.normal_dim(), 1, sigma.data(), color.data(),
                              &cache);
        field_backward<double>(p, cache, dsig.data() + i, dcol.data() + i * 3, grad_sum.data());
    }
    for (std::size_t i = 0; i < grad_batch.size(); ++i)
        CHECK(grad_batch[i] == doctest::Approx(grad_sum[i]).epsilon(1e-12));
}

TEST_CASE("zero upstream gradients give zero parameter gradients") {
    const EncodingConfig enc;
    FieldParamsT<double> p = init_field<double>(enc, tiny_arch(), 17);
    const int m = 3;
    const auto x = random_rows<double>(m, enc.pos_dim(), 51);
    const auto d = random_rows<double>(m, enc.dir_dim(), 52);
    const auto n = random_rows<double>(m, enc.normal_dim(), 53);
    std::vector<double> zeros_s(m, 0.0), zeros_c(m * 3, 0.0), sigma(m), color(m * 3);
    ForwardCache<double> cache;
    field_forward<double>(p, x.data(), d.data(), n.data(), m, sigma.data(), color.data(), &cache);
    std::vector<double> grad(p.values.size(), 0.0);
    field_backward<double>(p, cache, zeros_s.data(), zeros_c.data(), grad.data());
    for (double g : grad) CHECK(g == 0.0);
}

TEST_CASE("checkpoint round trip and version rejection") {
    test::TempDir tmp;
    const EncodingConfig enc;
    Checkpoint ckpt;
    ckpt.coarse = init_field<float>(enc, tiny_arch(), 1);
    ckpt.fine = init_field<float>(enc, tiny_arch(), 2);
    save_checkpoint(tmp.file("ck.bin"), ckpt);
    const Checkpoint back = load_checkpoint(tmp.file("ck.bin"));
    CHECK(back.coarse.values == ckpt.coarse.values);
    CHECK(back.fine.values == ckpt.fine.values);
    CHECK(back.fine.arch == ckpt.fine.arch);
    CHECK(back.fine.enc == ckpt.fine.enc);

    SUBCASE("bad magic is rejected") {
        std::ofstream f(tmp.file("junk.bin"), std::ios::binary);
        f << "NOTACKPT         ";
        f.close();
        CHECK_THROWS_WITH_AS(static_cast<void>(load_checkpoint(tmp.file("junk.bin"))),
                             doctest::Contains("not a checkpoint"), std::runtime_error);
    }
    SUBCASE("version mismatch is rejected") {
        // Bump the version field in place.
        std::fstream f(tmp.file("ck.bin"), std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(8);
        const std::uint32_t v = 99;
        f.write(reinterpret_cast<const char*>(&v), sizeof(v));
        f.close();
        CHECK_THROWS_WITH_AS(static_cast<void>(load_checkpoint(tmp.file("ck.bin"))),
                             doctest::Contains("version"), std::runtime_error);
    }
}
