#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nrf/evaluation.hpp"
#include "nrf/photometric_stereo.hpp"
#include "nrf/rng.hpp"
#include "test_util.hpp"

#include <cmath>
#include <numeric>

using namespace nrf;

namespace {

constexpr double kPi = 3.14159265358979323846;

LightSource unit_light(double x, double y, double z, double e = 1.0) {
    return {normalized(Vec3d{x, y, z}), e};
}

// Shadow-free nearly-orthographic sphere: every visible tilt stays below
// 90 deg - asin(r/d), so a ring narrower than asin(r/d) never shadows.
SyntheticSceneConfig exact_sphere_cfg() {
    SyntheticSceneConfig cfg;
    cfg.shape = ShapeKind::sphere;
    cfg.sphere_radius = 0.5;
    cfg.camera_distance = 100.0;
    cfg.light_ring_deg = 0.25;
    cfg.n_views = 1;
    cfg.n_lights = 16;
    cfg.image_size = 64;
    cfg.camera_elevation_deg = 0;
    cfg.seed = 3;
    return cfg;
}

NormalMap gt_normal_map(const SceneBundle& bundle, int view) {
    const ImageF& gtn = bundle.ground_truth->normals[view];
    NormalMap nmap;
    nmap.width = gtn.width;
    nmap.height = gtn.height;
    nmap.normals = gtn;
    nmap.valid = bundle.views[view].mask;
    return nmap;
}

}  // namespace

TEST_CASE("observation map hand examples") {
    SUBCASE("single axis light fills the center cell") {
        const std::vector<LightSource> lights{unit_light(0, 0, 1)};
        const std::vector<double> I{0.7};
        const ObservationMap map = build_observation_map(I, lights, 32);
        CHECK(map.at(16, 16) == 1.0);
        double sum = 0;
        for (double v : map.grid) sum += v;
        CHECK(sum == 1.0);
    }
    SUBCASE("x projection at +1 clamps to the last cell") {
        const std::vector<LightSource> lights{unit_light(1, 0, 0), unit_light(0, 0, 1)};
        const std::vector<double> I{0.5, 0.25};
        const ObservationMap map = build_observation_map(I, lights, 32);
        CHECK(map.at(31, 16) == 1.0);
    }
    SUBCASE("two lights normalize against the maximum response") {
        const std::vector<LightSource> lights{unit_light(-0.5, 0, 0.8), unit_light(0.5, 0, 0.8)};
        const std::vector<double> I{0.2, 0.4};
        const ObservationMap map = build_observation_map(I, lights, 32);
        double lo = 0, hi = 0;
        for (double v : map.grid) {
            if (v > hi) { lo = hi; hi = v; }
            else if (v > lo) lo = v;
        }
        CHECK(hi == 1.0);
        CHECK(lo == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("all-zero intensities give the all-zero map") {
        const std::vector<LightSource> lights{unit_light(0, 0, 1), unit_light(1, 0, 1)};
        const ObservationMap map = build_observation_map(std::vector<double>{0, 0}, lights, 16);
        for (double v : map.grid) CHECK(v == 0.0);
    }
    SUBCASE("negative intensity is rejected") {
        const std::vector<LightSource> lights{unit_light(0, 0, 1)};
        CHECK_THROWS_AS(
            static_cast<void>(build_observation_map(std::vector<double>{-0.1}, lights, 16)),
            std::invalid_argument);
    }
}

TEST_CASE("observation map is invariant to light permutation") {
    Rng rng(5);
    std::vector<LightSource> lights;
    std::vector<double> I;
    for (int i = 0; i < 12; ++i) {
        lights.push_back(unit_light(rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7), 1.0,
                                    rng.uniform(0.5, 2.0)));
        I.push_back(rng.uniform(0.0, 1.0));
    }
    const ObservationMap ref = build_observation_map(I, lights, 32);
    std::vector<std::size_t> order(lights.size());
    std::iota(order.begin(), order.end(), 0);
    for (int trial = 0; trial < 20; ++trial) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        std::vector<LightSource> pl;
        std::vector<double> pi;
        for (std::size_t idx : order) {
            pl.push_back(lights[idx]);
            pi.push_back(I[idx]);
        }
        CHECK(build_observation_map(pi, pl, 32).grid == ref.grid);
    }
}

TEST_CASE("woodham solve on axis lights") {
    const std::vector<LightSource> axes{unit_light(1, 0, 0), unit_light(0, 1, 0),
                                        unit_light(0, 0, 1)};
    const PsSolution s = woodham_solve(std::vector<double>{0, 0, 1.0 / kPi}, axes);
    CHECK(s.normal.z == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.albedo == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("woodham recovers a forward-modelled normal exactly") {
    const Vec3d n_true = normalized(Vec3d{1, 1, 1});
    const std::vector<LightSource> axes{unit_light(1, 0, 0), unit_light(0, 1, 0),
                                        unit_light(0, 0, 1)};
    std::vector<double> I;
    for (const auto& l : axes) I.push_back(dot(n_true, l.direction) / kPi);
    const PsSolution s = woodham_solve(I, axes);
    CHECK(norm(s.normal - n_true) < 1e-12);
    CHECK(s.albedo == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("woodham requires three usable lights") {
    const std::vector<LightSource> two{unit_light(1, 0, 0), unit_light(0, 1, 0)};
    CHECK_THROWS_AS(static_cast<void>(woodham_solve(std::vector<double>{1, 1}, two)),
                    std::invalid_argument);
    // Rank-deficient: all lights in one plane through the origin.
    const std::vector<LightSource> coplanar{unit_light(1, 0, 0), unit_light(0, 1, 0),
                                            unit_light(1, 1, 0)};
    CHECK_THROWS_WITH_AS(static_cast<void>(woodham_solve(std::vector<double>{1, 1, 1}, coplanar)),
                         doctest::Contains("degenerate light configuration"),
                         std::invalid_argument);
}

TEST_CASE("woodham direction is invariant under global exposure scaling") {
    Rng rng(11);
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<LightSource> lights;
        std::vector<double> I;
        const Vec3d n = normalized(Vec3d{rng.normal(), rng.normal(), std::abs(rng.normal()) + 0.5});
        for (int i = 0; i < 8; ++i) {
            lights.push_back(unit_light(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), 1,
                                        rng.uniform(0.5, 2)));
            I.push_back(std::max(0.2, dot(n, lights.back().direction)) * 0.3);
        }
        const double alpha = rng.uniform(0.1, 5.0);
        std::vector<double> scaled = I;
        for (double& v : scaled) v *= alpha;
        const PsSolution a = woodham_solve(I, lights);
        const PsSolution b = woodham_solve(scaled, lights);
        CHECK(norm(a.normal - b.normal) < 1e-9);
        CHECK(b.albedo == doctest::Approx(a.albedo * alpha).epsilon(1e-9));
    }
}

TEST_CASE("shadow-trimmed solve") {
    // Tilted normal against a 6-light ring: exactly the two lights opposite
    // the tilt get attached-shadowed.
    const Vec3d n_true = normalized(Vec3d{1, 0, 0.9});
    std::vector<LightSource> lights;
    for (int i = 0; i < 6; ++i) {
        const double phi = kPi / 6 + 2 * kPi * i / 6;
        lights.push_back(unit_light(0.8 * std::cos(phi), 0.8 * std::sin(phi), 0.6));
    }
    // Forward model with the attached-shadow clamp: two lights end up dark.
    std::vector<double> I;
    int dark = 0;
    for (const auto& l : lights) {
        const double v = std::max(0.0, dot(n_true, l.direction)) / kPi;
        if (v == 0.0) ++dark;
        I.push_back(v);
    }
    REQUIRE(dark == 2);

    SUBCASE("trim 0 equals plain woodham") {
        const PsSolution a = woodham_solve(I, lights);
        const PsSolution b = shadow_trimmed_solve(I, lights, 0.0);
        CHECK(norm(a.normal - b.normal) == 0.0);
    }
    SUBCASE("trimming the shadowed third beats plain woodham") {
        const PsSolution w = woodham_solve(I, lights);
        const PsSolution t = shadow_trimmed_solve(I, lights, 1.0 / 3.0);
        const double err_w = std::acos(std::clamp(dot(w.normal, n_true), -1.0, 1.0));
        const double err_t = std::acos(std::clamp(dot(t.normal, n_true), -1.0, 1.0));
        CHECK(err_t < err_w);
        CHECK(err_t < 1e-10);
    }
    SUBCASE("trimming below three lights fails") {
        CHECK_THROWS_AS(static_cast<void>(shadow_trimmed_solve(I, lights, 0.7)),
                        std::invalid_argument);
    }
}

TEST_CASE("rotation-averaged prediction") {
    const std::vector<LightSource> lights{unit_light(0.5, 0, 0.8), unit_light(0, 0.5, 0.8),
                                          unit_light(-0.5, 0, 0.8), unit_light(0, -0.5, 0.8)};
    const Vec3d n_true = normalized(Vec3d{0.2, 0.3, 0.9});
    std::vector<double> I;
    for (const auto& l : lights) I.push_back(std::max(0.0, dot(n_true, l.direction)));

    const PsPredictor oracle = [](std::span<const double> vals, std::span<const LightSource> ls) {
        return woodham_solve(vals, ls).normal;
    };

    SUBCASE("K=1 equals the plain prediction") {
        const Vec3d a = rotation_averaged_predict(oracle, I, lights, 1);
        const Vec3d b = oracle(I, lights);
        CHECK(norm(a - b) < 1e-15);
    }
    SUBCASE("an equivariant predictor is invariant to K") {
        const Vec3d k1 = rotation_averaged_predict(oracle, I, lights, 1);
        for (int k : {2, 5, 10}) {
            const Vec3d kk = rotation_averaged_predict(oracle, I, lights, k);
            CHECK(norm(kk - k1) < 1e-6);
        }
    }
    SUBCASE("zero-average falls back to the plain prediction") {
        // A constant in-plane prediction cancels itself after the inverse
        // rotations when K=2 (the two terms come back opposite).
        const PsPredictor constant = [](std::span<const double>, std::span<const LightSource>) {
            return Vec3d{1, 0, 0};
        };
        bool fell_back = false;
        const Vec3d out = rotation_averaged_predict(constant, I, lights, 2, &fell_back);
        CHECK(fell_back);
        CHECK(out == Vec3d{1, 0, 0});  // plain prediction
    }
}

TEST_CASE("regressor overfits a noiseless sphere") {
    SyntheticSceneConfig scfg = exact_sphere_cfg();
    scfg.image_size = 32;
    scfg.light_ring_deg = 20.0;  // informative maps need spread projections
    const SceneBundle bundle = generate_synthetic_scene(scfg);

    PsTrainConfig cfg;
    cfg.epochs = 300;  // desk-scale overfit run
    cfg.lr = 1e-3;
    cfg.batch = 32;
    cfg.seed = 1;
    cfg.hidden = 128;
    cfg.max_pixels = 200;
    const PsRegressorParams params = train_ps_regressor(bundle, cfg);
    CHECK(params.loss_curve.size() == 300);
    CHECK(params.loss_curve.back() < params.loss_curve.front());

    // Mean angular error over the training pixels.
    const ViewRecord& view = bundle.views[0];
    const ImageF& gtn = bundle.ground_truth->normals[0];
    std::vector<double> intensities(view.lights.size());
    double err_sum = 0;
    int count = 0;
    for (int y = 0; y < view.intrinsics.height && count < 200; ++y)
        for (int x = 0; x < view.intrinsics.width && count < 200; ++x) {
            const std::size_t pix = static_cast<std::size_t>(y) * view.intrinsics.width + x;
            if (!view.mask[pix]) continue;
            const float* n = gtn.px(x, y);
            if (n[0] == 0 && n[1] == 0 && n[2] == 0) continue;
            for (std::size_t i = 0; i < view.lights.size(); ++i) {
                const float* px = view.images[i].px(x, y);
                intensities[i] = (px[0] + px[1] + px[2]) / 3.0;
            }
            const Vec3d pred = predict_ps_regressor(
                params, build_observation_map(intensities, view.lights, params.map_size));
            const double c = std::clamp(dot(pred, Vec3d{n[0], n[1], n[2]}), -1.0, 1.0);
            err_sum += std::acos(c) * 180.0 / kPi;
            ++count;
        }
    REQUIRE(count == 200);
    CHECK(err_sum / count < 5.0);

    SUBCASE("training is deterministic in the seed") {
        const PsRegressorParams again = train_ps_regressor(bundle, cfg);
        CHECK(again.values == params.values);
    }
    SUBCASE("regressor round trips through its file format") {
        test::TempDir tmp;
        save_ps_regressor(tmp.file("reg.bin"), params);
        const PsRegressorParams back = load_ps_regressor(tmp.file("reg.bin"));
        CHECK(back.values == params.values);
        CHECK(back.map_size == params.map_size);
    }
}

TEST_CASE("estimate_normal_map: woodham on the exact sphere") {
    const SceneBundle bundle = generate_synthetic_scene(exact_sphere_cfg());
    const NormalMap est = estimate_normal_map(bundle, 0, {PsMethod::woodham});
    const NormalMap gt = gt_normal_map(bundle, 0);
    const AngularErrorStats stats = angular_error(est, gt);
    CHECK(stats.count > 1000);
    CHECK(stats.mean_deg < 0.01);

    for (int y = 0; y < est.height; ++y)
        for (int x = 0; x < est.width; ++x)
            if (est.valid[static_cast<std::size_t>(y) * est.width + x])
                CHECK(norm(est.at(x, y)) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("estimate_normal_map marks all-shadow pixels invalid") {
    SceneBundle bundle = generate_synthetic_scene(exact_sphere_cfg());
    // Black out one masked pixel across the stack.
    ViewRecord& view = bundle.views[0];
    int px = -1, py = -1;
    for (int y = 0; y < view.intrinsics.height && px < 0; ++y)
        for (int x = 0; x < view.intrinsics.width && px < 0; ++x)
            if (view.mask[static_cast<std::size_t>(y) * view.intrinsics.width + x]) {
                px = x;
                py = y;
            }
    REQUIRE(px >= 0);
    for (ImageF& img : view.images)
        for (int ch = 0; ch < 3; ++ch) img.at(px, py, ch) = 0.0f;
    const NormalMap est = estimate_normal_map(bundle, 0, {PsMethod::woodham});
    CHECK(est.valid[static_cast<std::size_t>(py) * est.width + px] == 0);
}

TEST_CASE("normal map PFM round trip") {
    test::TempDir tmp;
    const SceneBundle bundle = generate_synthetic_scene(exact_sphere_cfg());
    const NormalMap est = estimate_normal_map(bundle, 0, {PsMethod::trimmed, 0.2});
    write_normal_map(tmp.file("n.pfm"), est);
    const NormalMap back = read_normal_map(tmp.file("n.pfm"));
    CHECK(back.normals.data == est.normals.data);
    CHECK(back.valid == est.valid);
}

TEST_CASE("horn-brooks: constant normals give constant depth") {
    const int n = 16;
    NormalMap nmap;
    nmap.width = nmap.height = n;
    nmap.normals = ImageF(n, n, 3);
    nmap.valid.assign(n * n, 1);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) nmap.normals.at(x, y, 2) = 1.0f;
    MaskImage mask(n * n, 1);
    const DepthMap d = integrate_normals_horn_brooks(nmap, mask, 5000, 1e-12);
    for (std::size_t i = 0; i < d.valid.size(); ++i) {
        CHECK(d.valid[i] == 1);
        CHECK(std::abs(d.depth.data[i]) < 1e-9);
    }
}

TEST_CASE("horn-brooks: tilted plane integrates to a linear ramp") {
    const int n = 24;
    const double a = 0.4, b = -0.25;  // z = a x + b y (pixel units)
    NormalMap nmap;
    nmap.width = nmap.height = n;
    nmap.normals = ImageF(n, n, 3);
    nmap.valid.assign(n * n, 1);
    const Vec3d normal = normalized(Vec3d{-a, -b, 1});
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            nmap.normals.at(x, y, 0) = static_cast<float>(normal.x);
            nmap.normals.at(x, y, 1) = static_cast<float>(normal.y);
            nmap.normals.at(x, y, 2) = static_cast<float>(normal.z);
        }
    MaskImage mask(n * n, 1);
    const DepthMap d = integrate_normals_horn_brooks(nmap, mask, 50000, 1e-13);
    double mean_z = 0;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) mean_z += a * x + b * y;
    mean_z /= n * n;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            CHECK(d.depth.at(x, y, 0) == doctest::Approx(a * x + b * y - mean_z).epsilon(2e-5));
}

TEST_CASE("horn-brooks: paraboloid RMSE under 1e-2") {
    const int n = 64;
    const double h = 2.0 / (n - 1);
    NormalMap nmap;
    nmap.width = nmap.height = n;
    nmap.normals = ImageF(n, n, 3);
    nmap.valid.assign(n * n, 1);
    MaskImage mask(n * n, 1);
    std::vector<double> z_true(static_cast<std::size_t>(n) * n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const double x = -1.0 + i * h, y = -1.0 + j * h;
            z_true[static_cast<std::size_t>(j) * n + i] = -(x * x + y * y) / 2;
            const Vec3d nrm = normalized(Vec3d{x, y, 1});  // gradient (-x,-y)
            nmap.normals.at(i, j, 0) = static_cast<float>(nrm.x);
            nmap.normals.at(i, j, 1) = static_cast<float>(nrm.y);
            nmap.normals.at(i, j, 2) = static_cast<float>(nrm.z);
        }
    const DepthMap d = integrate_normals_horn_brooks(nmap, mask, 60000, 1e-12, h);
    double mean_true = 0;
    for (double v : z_true) mean_true += v;
    mean_true /= z_true.size();
    double sq = 0;
    for (std::size_t i = 0; i < z_true.size(); ++i) {
        const double diff = d.depth.data[i] - (z_true[i] - mean_true);
        sq += diff * diff;
    }
    CHECK(std::sqrt(sq / z_true.size()) < 1e-2);
}

TEST_CASE("horn-brooks excludes grazing normals and reports them") {
    const int n = 8;
    NormalMap nmap;
    nmap.width = nmap.height = n;
    nmap.normals = ImageF(n, n, 3);
    nmap.valid.assign(n * n, 1);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) nmap.normals.at(x, y, 2) = -1.0f;
    nmap.normals.at(3, 3, 2) = 0.005f;  // |nz| below the cut
    nmap.normals.at(3, 3, 0) = 0.999987f;
    MaskImage mask(n * n, 1);
    const DepthMap d = integrate_normals_horn_brooks(nmap, mask, 1000, 1e-10);
    CHECK(d.valid[3 * n + 3] == 0);
    CHECK(d.valid[0] == 1);
}

TEST_CASE("depth rescale maps the valid range onto [-1,1]") {
    DepthMap d;
    d.width = 2;
    d.height = 2;
    d.depth = ImageF(2, 2, 1);
    d.valid = {1, 1, 1, 0};
    d.depth.data = {3.0f, 5.0f, 4.0f, 99.0f};
    rescale_depth_to_unit(d);
    CHECK(d.depth.data[0] == doctest::Approx(-1.0));
    CHECK(d.depth.data[1] == doctest::Approx(1.0));
    CHECK(d.depth.data[2] == doctest::Approx(0.0));
}
