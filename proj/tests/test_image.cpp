#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nrf/image.hpp"
#include "nrf/rng.hpp"
#include "test_util.hpp"

#include <limits>

using namespace nrf;

TEST_CASE("PFM color round trip preserves bits") {
    test::TempDir tmp;
    ImageF img(7, 5, 3);
    Rng rng(1);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform(-3, 3));
    img.at(2, 1, 0) = std::numeric_limits<float>::infinity();
    write_pfm(tmp.file("c.pfm"), img);
    const ImageF back = read_pfm(tmp.file("c.pfm"));
    REQUIRE(back.width == 7);
    REQUIRE(back.height == 5);
    REQUIRE(back.channels == 3);
    CHECK(back.data == img.data);
}

TEST_CASE("PFM gray round trip") {
    test::TempDir tmp;
    ImageF img(4, 9, 1);
    Rng rng(2);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform(0, 10));
    write_pfm(tmp.file("g.pfm"), img);
    const ImageF back = read_pfm(tmp.file("g.pfm"));
    REQUIRE(back.channels == 1);
    CHECK(back.data == img.data);
}

TEST_CASE("PFM reader reports malformed files") {
    test::TempDir tmp;
    {
        FILE* f = fopen(tmp.file("bad.pfm").c_str(), "wb");
        fputs("P6\n2 2\n255\n", f);
        fclose(f);
    }
    CHECK_THROWS_WITH_AS(static_cast<void>(read_pfm(tmp.file("bad.pfm"))),
                         doctest::Contains("not a PFM"), std::runtime_error);
    CHECK_THROWS_AS(static_cast<void>(read_pfm(tmp.file("missing.pfm"))), std::runtime_error);
}

TEST_CASE("mask PNG round trip") {
    test::TempDir tmp;
    const int w = 6, h = 4;
    MaskImage mask(w * h, 0);
    for (std::size_t i = 0; i < mask.size(); i += 3) mask[i] = 1;
    write_mask_png(tmp.file("m.png"), mask, w, h);
    int rw = 0, rh = 0;
    const MaskImage back = read_mask_png(tmp.file("m.png"), rw, rh);
    CHECK(rw == w);
    CHECK(rh == h);
    CHECK(back == mask);
}

TEST_CASE("sRGB transfer endpoints") {
    CHECK(linear_to_srgb(0.0f) == doctest::Approx(0.0));
    CHECK(linear_to_srgb(1.0f) == doctest::Approx(1.0));
    CHECK(linear_to_srgb(-5.0f) == doctest::Approx(0.0));
    CHECK(linear_to_srgb(7.0f) == doctest::Approx(1.0));
    CHECK(linear_to_srgb(0.5f) > 0.5f);  // gamma brightens mid-tones
}
