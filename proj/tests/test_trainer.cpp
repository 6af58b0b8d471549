#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nrf/parallel.hpp"
#include "nrf/trainer.hpp"
#include "test_util.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace nrf;

namespace {

SceneBundle tiny_scene(double ring_deg = 30.0, std::uint64_t seed = 5) {
    SyntheticSceneConfig cfg;
    cfg.shape = ShapeKind::sphere;
    cfg.sphere_radius = 0.5;
    cfg.camera_distance = 2.2;
    cfg.n_views = 4;
    cfg.n_lights = 6;
    cfg.image_size = 16;
    cfg.light_ring_deg = ring_deg;
    cfg.gt_mesh_res = 32;
    cfg.seed = seed;
    return generate_synthetic_scene(cfg);
}

std::vector<NormalMap> gt_maps(const SceneBundle& bundle) {
    std::vector<NormalMap> maps;
    for (std::size_t v = 0; v < bundle.views.size(); ++v) {
        NormalMap m;
        m.width = bundle.views[v].intrinsics.width;
        m.height = bundle.views[v].intrinsics.height;
        m.normals = bundle.ground_truth->normals[v];
        m.valid = bundle.views[v].mask;
        maps.push_back(std::move(m));
    }
    return maps;
}

TrainConfig tiny_train_cfg() {
    TrainConfig cfg;
    cfg.batch_rays = 64;
    cfg.epochs = 1;
    cfg.max_steps = 200;
    cfg.adam.lr = 5e-4;
    cfg.n_coarse = 8;
    cfg.n_fine = 16;
    cfg.trunk_layers = 2;
    cfg.trunk_width = 32;
    cfg.enc.l_pos = 6;
    cfg.seed = 1;
    cfg.light_index = 2;
    return cfg;
}

}  // namespace

TEST_CASE("mvps_loss hand examples") {
    CHECK(mvps_loss({0.3, 0.4, 0.5}, {0.3, 0.4, 0.5}, {0.3, 0.4, 0.5}) == 0.0);
    CHECK(mvps_loss({1, 0, 0}, {0, 0, 0}, {0, 0, 0}) == doctest::Approx(1.0));
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        const Vec3d a{rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)};
        const Vec3d b{rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)};
        const Vec3d t{rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)};
        CHECK(mvps_loss(a, b, t) >= 0.0);
    }
}

TEST_CASE("adam_step behaviour") {
    SUBCASE("zero gradients leave parameters unchanged") {
        std::vector<float> p{1.0f, -2.0f, 3.0f};
        const std::vector<float> g(3, 0.0f);
        AdamState<float> st;
        AdamConfig cfg;
        adam_step<float>(p, g, st, cfg);
        CHECK(p == std::vector<float>{1.0f, -2.0f, 3.0f});
    }
    SUBCASE("first step moves by about lr in the gradient sign direction") {
        std::vector<double> p{0.0, 0.0};
        const std::vector<double> g{0.3, -0.07};
        AdamState<double> st;
        AdamConfig cfg;
        cfg.lr = 1e-4;
        adam_step<double>(p, g, st, cfg);
        CHECK(std::abs(p[0] + cfg.lr) < 1e-6 * cfg.lr + 1e-9);
        CHECK(std::abs(p[1] - cfg.lr) < 1e-6 * cfg.lr + 1e-9);
    }
    SUBCASE("non-finite gradients are reported with the parameter path") {
        std::vector<float> p{1.0f};
        const std::vector<float> g{std::numeric_limits<float>::quiet_NaN()};
        AdamState<float> st;
        CHECK_THROWS_WITH_AS(adam_step<float>(p, g, st, AdamConfig{}, "fine"),
                             doctest::Contains("fine[0]"), std::runtime_error);
    }
    SUBCASE("defaults match the published constants") {
        const AdamConfig cfg;
        CHECK(cfg.beta1 == 0.9);
        CHECK(cfg.beta2 == 0.999);
        CHECK(cfg.eps == 1e-8);
    }
    SUBCASE("train config default lr is 1e-4") {
        CHECK(TrainConfig{}.adam.lr == 1e-4);
        CHECK(TrainConfig{}.batch_rays == 1024);
        CHECK(TrainConfig{}.epochs == 30);
    }
}

TEST_CASE("select_training_light") {
    const SceneBundle bundle = tiny_scene();
    const auto sel = select_training_light(bundle, 4);
    CHECK(sel == std::vector<int>(bundle.views.size(), 4));
    CHECK_THROWS_AS(static_cast<void>(select_training_light(bundle, 6)), std::invalid_argument);
    CHECK_THROWS_AS(static_cast<void>(select_training_light(bundle, -1)), std::invalid_argument);

    const std::vector<int> per_view{0, 1, 2, 3};
    CHECK(select_training_light(bundle, per_view) == per_view);
    const std::vector<int> bad{0, 1, 2, 9};
    CHECK_THROWS_AS(static_cast<void>(select_training_light(bundle, std::span<const int>(bad))),
                    std::invalid_argument);
}

TEST_CASE("sample_ray_batch basics") {
    const SceneBundle bundle = tiny_scene();
    const auto maps = gt_maps(bundle);
    TrainConfig cfg = tiny_train_cfg();

    const auto a = sample_ray_batch(bundle, maps, cfg, 7);
    const auto b = sample_ray_batch(bundle, maps, cfg, 7);
    REQUIRE(a.size() == static_cast<std::size_t>(cfg.batch_rays));
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].ray.origin == b[i].ray.origin);
        CHECK(a[i].ray.direction == b[i].ray.direction);
        CHECK(a[i].target == b[i].target);
    }
    const auto c = sample_ray_batch(bundle, maps, cfg, 8);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!(a[i].ray.direction == c[i].ray.direction)) any_diff = true;
    CHECK(any_diff);

    SUBCASE("object rays carry unit world normals") {
        for (const TrainRay& r : a)
            if (!r.background) CHECK(norm(r.n_ps_world) == doctest::Approx(1.0).epsilon(1e-6));
    }
    SUBCASE("fraction zero gives an all-background batch") {
        cfg.object_fraction = 0.0;
        for (const TrainRay& r : sample_ray_batch(bundle, maps, cfg, 1)) {
            CHECK(r.background);
            CHECK(norm(r.n_ps_world) == 0.0);
        }
    }
    SUBCASE("no valid object pixels is an error when objects are requested") {
        auto empty_maps = maps;
        for (auto& m : empty_maps) std::fill(m.valid.begin(), m.valid.end(), 0);
        CHECK_THROWS_AS(static_cast<void>(sample_ray_batch(bundle, empty_maps, cfg, 0)),
                        std::invalid_argument);
    }
}

TEST_CASE("end-to-end loss gradient matches finite differences") {
    const SceneBundle bundle = tiny_scene();
    const auto maps = gt_maps(bundle);
    TrainConfig cfg = tiny_train_cfg();
    cfg.batch_rays = 3;

    const EncodingConfig enc = cfg.enc;
    const FieldArch arch{2, 8, true, true};
    FieldParamsT<double> coarse = init_field<double>(enc, arch, 100);
    FieldParamsT<double> fine = init_field<double>(enc, arch, 200);

    const auto batch = sample_ray_batch(bundle, maps, cfg, 0);
    std::vector<TrainRay> rays(batch.begin(), batch.begin() + 3);

    // Freeze sampling so the loss is a deterministic function of parameters.
    FrozenRaySamples<double> frozen;
    Rng rng(55);
    for (const TrainRay& r : rays) {
        frozen.coarse.push_back(
            stratified_sample<double>(r.ray.t_near, r.ray.t_far, 4, rng));
        std::vector<double> fine_ts(4);
        for (auto& t : fine_ts) t = rng.uniform(r.ray.t_near, r.ray.t_far);
        std::sort(fine_ts.begin(), fine_ts.end());
        frozen.fine.push_back(std::move(fine_ts));
    }

    const RenderConfig rc{4, 4};
    std::vector<double> gc(coarse.values.size(), 0.0), gf(fine.values.size(), 0.0);
    render_batch<double>(coarse, fine, rays, rc, 0, 0, 0, &frozen, gc.data(), gf.data());

    auto loss_fn = [&]() {
        return render_batch<double>(coarse, fine, rays, rc, 0, 0, 0, &frozen, nullptr, nullptr)
            .loss;
    };

    Rng pick(77);
    const double h = 1e-5;
    int checked = 0;
    for (int trial = 0; trial < 25; ++trial) {
        {
            const std::size_t idx = pick.below(coarse.values.size());
            const double keep = coarse.values[idx];
            coarse.values[idx] = keep + h;
            const double fp = loss_fn();
            coarse.values[idx] = keep - h;
            const double fm = loss_fn();
            coarse.values[idx] = keep;
            CHECK(nrf::test::rel_err(gc[idx], (fp - fm) / (2 * h), 1e-7) < 1e-4);
        }
        {
            const std::size_t idx = pick.below(fine.values.size());
            const double keep = fine.values[idx];
            fine.values[idx] = keep + h;
            const double fp = loss_fn();
            fine.values[idx] = keep - h;
            const double fm = loss_fn();
            fine.values[idx] = keep;
            CHECK(nrf::test::rel_err(gf[idx], (fp - fm) / (2 * h), 1e-7) < 1e-4);
        }
        checked += 2;
    }
    CHECK(checked == 50);
}

TEST_CASE("training descends on a tiny scene and is seed-deterministic") {
    const SceneBundle bundle = tiny_scene();
    const auto maps = gt_maps(bundle);
    const TrainConfig cfg = tiny_train_cfg();

    const TrainResult run = train(bundle, maps, cfg);
    REQUIRE(!run.diverged);
    REQUIRE(run.steps_run == 200);
    const double first = run.log.front().loss_coarse + run.log.front().loss_fine;
    const double last = run.log.back().loss_coarse + run.log.back().loss_fine;
    CHECK(last < 0.5 * first);

    SUBCASE("same seed reproduces the checkpoint bit for bit") {
        const TrainResult again = train(bundle, maps, cfg);
        CHECK(again.checkpoint.coarse.values == run.checkpoint.coarse.values);
        CHECK(again.checkpoint.fine.values == run.checkpoint.fine.values);
    }
    SUBCASE("results are independent of the worker count") {
        set_thread_count(1);
        const TrainResult t1 = train(bundle, maps, cfg);
        set_thread_count(4);
        const TrainResult t4 = train(bundle, maps, cfg);
        set_thread_count(0);
        CHECK(t1.checkpoint.coarse.values == t4.checkpoint.coarse.values);
        CHECK(t1.checkpoint.fine.values == t4.checkpoint.fine.values);
    }
}

TEST_CASE("position-only ablation still descends") {
    const SceneBundle bundle = tiny_scene();
    const auto maps = gt_maps(bundle);
    TrainConfig cfg = tiny_train_cfg();
    cfg.use_view_dir = false;
    cfg.use_normals = false;
    cfg.max_steps = 120;
    const TrainResult run = train(bundle, maps, cfg);
    REQUIRE(!run.diverged);
    const double first = run.log.front().loss_coarse + run.log.front().loss_fine;
    const double last = run.log.back().loss_coarse + run.log.back().loss_fine;
    CHECK(last < first);
}

TEST_CASE("train log is written as CSV") {
    test::TempDir tmp;
    const SceneBundle bundle = tiny_scene();
    const auto maps = gt_maps(bundle);
    TrainConfig cfg = tiny_train_cfg();
    cfg.max_steps = 5;
    cfg.log_path = tmp.file("log.csv");
    cfg.checkpoint_dir = tmp.file("ckpts");
    const TrainResult run = train(bundle, maps, cfg);
    CHECK(run.steps_run == 5);
    std::ifstream f(tmp.file("log.csv"));
    std::string header;
    std::getline(f, header);
    CHECK(header == "step,loss_coarse,loss_fine,psnr_train");
    CHECK(std::filesystem::exists(tmp.file("ckpts/checkpoint.bin")));
}
