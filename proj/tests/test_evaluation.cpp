#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nrf/evaluation.hpp"
#include "nrf/surface_extraction.hpp"
#include "nrf/rng.hpp"
#include "test_util.hpp"

#include <cmath>
#include <fstream>

using namespace nrf;

namespace {

Mesh single_triangle(double z) {
    Mesh m;
    m.vertices = {{0, 0, z}, {1, 0, z}, {0, 1, z}};
    m.triangles = {{0, 1, 2}};
    return m;
}

Mesh translated(const Mesh& m, const Vec3d& d) {
    Mesh out = m;
    for (Vec3d& v : out.vertices) v += d;
    return out;
}

Mesh sphere_mesh(double radius, int res) {
    const Box3 box{{-1, -1, -1}, {1, 1, 1}};
    return marching_cubes(make_grid(box, res, [=](const Vec3d& p) { return radius - norm(p); }),
                          0.0);
}

ViewRecord front_view(int size, double dist, double focal) {
    ViewRecord view;
    view.intrinsics = {focal, focal, size / 2.0, size / 2.0, size, size};
    view.pose = look_at({0, 0, -dist}, {0, 0, 0}, {0, -1, 0});
    view.lights.push_back({{0, 0, -1}, 1.0});
    view.images.emplace_back(size, size, 3);
    view.mask.assign(static_cast<std::size_t>(size) * size, 1);
    return view;
}

}  // namespace

TEST_CASE("psnr basics") {
    ImageF a(8, 8, 3), b(8, 8, 3);
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] = b.data[i] = 0.25f;
    CHECK(psnr(a, b) == 99.0);

    // Constant offset 0.1 -> MSE 0.01 -> 20 dB.
    for (auto& v : b.data) v += 0.1f;
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-4));

    ImageF c(4, 4, 3);
    CHECK_THROWS_AS(static_cast<void>(psnr(a, c)), std::invalid_argument);
}

TEST_CASE("psnr decreases as noise grows") {
    Rng noise_rng(5);
    ImageF ref(16, 16, 3);
    for (auto& v : ref.data) v = 0.5f;
    double prev = 1e9;
    for (double std_dev : {0.01, 0.02, 0.04, 0.08}) {
        double mean_psnr = 0;
        for (int trial = 0; trial < 10; ++trial) {
            ImageF noisy = ref;
            for (auto& v : noisy.data) v += static_cast<float>(std_dev * noise_rng.normal());
            mean_psnr += psnr(ref, noisy);
        }
        mean_psnr /= 10;
        CHECK(mean_psnr < prev);
        prev = mean_psnr;
    }
}

TEST_CASE("chamfer distance basics") {
    SUBCASE("identical meshes with matched seeds give exactly zero") {
        const Mesh m = sphere_mesh(0.5, 24);
        CHECK(chamfer_l1(m, m, 2000, 3) == 0.0);
    }
    SUBCASE("unit-separated triangles measure about one") {
        const Mesh a = single_triangle(0.0), b = single_triangle(1.0);
        CHECK(chamfer_l1(a, b, 4000, 1) == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("symmetry") {
        const Mesh a = sphere_mesh(0.5, 20);
        const Mesh b = translated(sphere_mesh(0.45, 24), {0.05, 0, 0});
        CHECK(chamfer_l1(a, b, 3000, 7) == doctest::Approx(chamfer_l1(b, a, 3000, 7)).epsilon(1e-12));
    }
    SUBCASE("translation equivariance") {
        const Mesh a = sphere_mesh(0.5, 20);
        const Mesh b = sphere_mesh(0.42, 24);
        const double base = chamfer_l1(a, b, 3000, 9);
        const Vec3d shift{0.37, -0.21, 0.11};
        const double moved = chamfer_l1(translated(a, shift), translated(b, shift), 3000, 9);
        CHECK(std::abs(base - moved) < 1e-12);
    }
    SUBCASE("empty mesh is an error") {
        CHECK_THROWS_AS(static_cast<void>(chamfer_l1(Mesh{}, single_triangle(0), 100, 0)),
                        std::invalid_argument);
    }
}

TEST_CASE("angular error corner cases") {
    NormalMap a, b;
    a.width = b.width = 2;
    a.height = b.height = 1;
    a.normals = ImageF(2, 1, 3);
    b.normals = ImageF(2, 1, 3);
    a.valid = {1, 0};
    b.valid = {1, 0};

    auto set = [](NormalMap& m, int x, const Vec3d& n) {
        m.normals.at(x, 0, 0) = static_cast<float>(n.x);
        m.normals.at(x, 0, 1) = static_cast<float>(n.y);
        m.normals.at(x, 0, 2) = static_cast<float>(n.z);
    };
    set(a, 0, {0, 0, 1});

    set(b, 0, {0, 0, 1});
    CHECK(angular_error(a, b).mean_deg == doctest::Approx(0.0));
    set(b, 0, {1, 0, 0});
    CHECK(angular_error(a, b).mean_deg == doctest::Approx(90.0));
    set(b, 0, {0, 0, -1});
    CHECK(angular_error(a, b).mean_deg == doctest::Approx(180.0));

    a.valid = {0, 0};
    CHECK_THROWS_AS(static_cast<void>(angular_error(a, b)), std::invalid_argument);
}

TEST_CASE("depth_l1 rescaling") {
    DepthMap a, b;
    a.width = b.width = 4;
    a.height = b.height = 1;
    a.depth = ImageF(4, 1, 1);
    b.depth = ImageF(4, 1, 1);
    a.valid.assign(4, 1);
    b.valid.assign(4, 1);
    MaskImage mask(4, 1);
    a.depth.data = {0.0f, 1.0f, 2.0f, 3.0f};

    SUBCASE("identical depths give zero") {
        b.depth.data = a.depth.data;
        CHECK(depth_l1(a, b, mask) == 0.0);
    }
    SUBCASE("constant offset vanishes after rescaling") {
        for (int i = 0; i < 4; ++i) b.depth.data[i] = a.depth.data[i] + 5.0f;
        CHECK(depth_l1(a, b, mask) == doctest::Approx(0.0));
    }
    SUBCASE("affine scaling also vanishes") {
        for (int i = 0; i < 4; ++i) b.depth.data[i] = 2.5f * a.depth.data[i] - 1.0f;
        CHECK(depth_l1(a, b, mask) == doctest::Approx(0.0));
    }
    SUBCASE("empty mask is an error") {
        MaskImage none(4, 0);
        CHECK_THROWS_AS(static_cast<void>(depth_l1(a, b, none)), std::invalid_argument);
    }
}

TEST_CASE("projected depth from a mesh matches the analytic sphere") {
    const Mesh mesh = sphere_mesh(0.5, 64);
    const ViewRecord view = front_view(32, 2.0, 60.0);
    const DepthMap d = projected_depth(mesh, view);
    // Center pixel: front face of the sphere at z = dist - r.
    const int c = 16;
    REQUIRE(d.valid[c * 32 + c] == 1);
    CHECK(d.depth.at(c, c, 0) == doctest::Approx(1.5).epsilon(0.01));
    // Background pixels miss.
    CHECK(d.valid[0] == 0);
}

TEST_CASE("render_view composes per-ray renders") {
    EncodingConfig enc;
    const FieldArch arch{2, 8, true, true};
    Checkpoint ckpt;
    ckpt.coarse = init_field<float>(enc, arch, 1);
    ckpt.fine = init_field<float>(enc, arch, 2);
    // Opaque constant field: color is exactly mid-gray everywhere.
    std::fill(ckpt.coarse.values.begin(), ckpt.coarse.values.end(), 0.0f);
    std::fill(ckpt.fine.values.begin(), ckpt.fine.values.end(), 0.0f);
    ckpt.coarse.bias(ckpt.coarse.sigma_head)[0] = 1000.0f;
    ckpt.fine.bias(ckpt.fine.sigma_head)[0] = 1000.0f;

    const int size = 8;
    ViewRecord view = front_view(size, 2.0, 12.0);
    NormalMap nmap;
    nmap.width = nmap.height = size;
    nmap.normals = ImageF(size, size, 3);
    nmap.valid.assign(static_cast<std::size_t>(size) * size, 0);
    const Box3 bounds{{-1, -1, -1}, {1, 1, 1}};

    const ImageF img = render_view(ckpt, view, nmap, bounds, {8, 8}, 0);
    REQUIRE(img.width == size);
    REQUIRE(img.height == size);
    for (float v : img.data) CHECK(v == doctest::Approx(0.5).epsilon(1e-6));

    SUBCASE("zero-density field renders black") {
        ckpt.coarse.bias(ckpt.coarse.sigma_head)[0] = 0.0f;
        ckpt.fine.bias(ckpt.fine.sigma_head)[0] = 0.0f;
        const ImageF black = render_view(ckpt, view, nmap, bounds, {8, 8}, 0);
        for (float v : black.data) CHECK(v == 0.0f);
    }
    SUBCASE("rendering is deterministic in the seed") {
        const ImageF again = render_view(ckpt, view, nmap, bounds, {8, 8}, 0);
        CHECK(again.data == img.data);
    }
}

TEST_CASE("report writers produce files") {
    test::TempDir tmp;
    write_report_json(tmp.file("r.json"), {{"chamfer_l1", 0.05}, {"psnr", 31.2}});
    std::ifstream f(tmp.file("r.json"));
    std::string text((std::istreambuf_iterator<char>(f)), {});
    CHECK(text.find("chamfer_l1") != std::string::npos);
    CHECK(text.find("psnr") != std::string::npos);

    write_per_view_csv(tmp.file("v.csv"), "psnr", {30.0, 31.5});
    std::ifstream g(tmp.file("v.csv"));
    std::string line;
    std::getline(g, line);
    CHECK(line == "view,psnr");
}
