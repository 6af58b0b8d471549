// nrf_mvps: multi-view photometric stereo reconstruction pipeline.
//
// Subcommands: gen, ps, train, render, mesh, eval, ablate. All randomness
// flows from one --seed per invocation; identical arguments reproduce
// byte-identical outputs for any --threads value.

#include <CLI11.hpp>
#include <json.hpp>

#include "nrf/evaluation.hpp"
#include "nrf/kernels.hpp"
#include "nrf/parallel.hpp"
#include "nrf/photometric_stereo.hpp"
#include "nrf/rng.hpp"
#include "nrf/scene_data.hpp"
#include "nrf/surface_extraction.hpp"
#include "nrf/trainer.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nrf;

namespace {

constexpr int kIsoSweep[] = {1, 5, 10, 20, 50, 100};

json g_config;  // from --config; flags override its values

// Applies config-file defaults: for option --foo in section `sec`, a config
// entry {"sec": {"foo": ...}} becomes the default unless the flag is given.
void apply_config(CLI::App* cmd, const std::string& sec) {
    if (!g_config.contains(sec)) return;
    const json& section = g_config[sec];
    for (CLI::Option* opt : cmd->get_options()) {
        std::string name = opt->get_lnames().empty() ? "" : opt->get_lnames().front();
        if (name.empty() || !section.contains(name)) continue;
        const json& v = section[name];
        if (v.is_boolean()) {
            if (v.get<bool>() && opt->get_expected_min() == 0) opt->default_val("true");
        } else {
            opt->default_val(v.is_string() ? v.get<std::string>() : v.dump());
        }
    }
}

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    std::string cur;
    for (char c : csv + ",") {
        if (c == ',') {
            if (!cur.empty()) out.push_back(std::stoi(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    return out;
}

NormalMap load_view_normals(const std::string& dir, int view) {
    char name[48];
    std::snprintf(name, sizeof(name), "normal_%03d.pfm", view);
    return read_normal_map((fs::path(dir) / name).string());
}

std::vector<NormalMap> load_all_normals(const std::string& dir, std::size_t n_views) {
    std::vector<NormalMap> maps;
    for (std::size_t v = 0; v < n_views; ++v) maps.push_back(load_view_normals(dir, static_cast<int>(v)));
    return maps;
}

NormalMap zero_normals(const ViewRecord& view) {
    NormalMap m;
    m.width = view.intrinsics.width;
    m.height = view.intrinsics.height;
    m.normals = ImageF(m.width, m.height, 3);
    m.valid.assign(static_cast<std::size_t>(m.width) * m.height, 0);
    return m;
}

std::vector<int> random_per_view_lights(const SceneBundle& bundle, std::uint64_t seed) {
    std::vector<int> out;
    for (std::size_t v = 0; v < bundle.views.size(); ++v) {
        Rng rng(seed, 0x6c696768ull, v);
        out.push_back(static_cast<int>(rng.below(bundle.views[v].lights.size())));
    }
    return out;
}

// ---------------------------------------------------------------- gen ----

struct GenArgs {
    std::string out;
    SyntheticSceneConfig cfg;
    std::string shape = "sphere";
};

int run_gen(GenArgs& a) {
    a.cfg.shape = shape_from_name(a.shape);
    const SceneBundle bundle = generate_synthetic_scene(a.cfg);
    save_bundle(bundle, a.out);
    std::cerr << "gen: wrote " << bundle.views.size() << " views to " << a.out << "\n";
    return 0;
}

// ----------------------------------------------------------------- ps ----

struct PsArgs {
    std::string bundle_dir, out_dir;
    std::string method = "woodham";
    double trim = 0.25;
    int rotations = 10;
    bool train_regressor = false;
    std::string regressor_file;
    int epochs = 10;
    double lr = 1e-3;
    int batch = 256;
    std::uint64_t seed = 0;
};

int run_ps(PsArgs& a) {
    const SceneBundle bundle = load_bundle(a.bundle_dir);
    fs::create_directories(a.out_dir);

    NormalEstimateOptions opts;
    opts.method = ps_method_from_name(a.method);
    opts.trim_fraction = a.trim;
    opts.rotations = a.rotations;

    PsRegressorParams regressor;
    if (opts.method == PsMethod::regressor) {
        if (a.train_regressor) {
            PsTrainConfig tc;
            tc.epochs = a.epochs;
            tc.lr = a.lr;
            tc.batch = a.batch;
            tc.seed = a.seed;
            regressor = train_ps_regressor(bundle, tc);
            if (!a.regressor_file.empty()) save_ps_regressor(a.regressor_file, regressor);
        } else if (!a.regressor_file.empty()) {
            regressor = load_ps_regressor(a.regressor_file);
        } else {
            throw std::runtime_error("ps: regressor method needs --train-regressor or --regressor-file");
        }
        opts.regressor = &regressor;
    }

    std::map<std::string, double> report;
    std::vector<double> per_view_err;
    for (std::size_t v = 0; v < bundle.views.size(); ++v) {
        const NormalMap est = estimate_normal_map(bundle, static_cast<int>(v), opts);
        char name[48];
        std::snprintf(name, sizeof(name), "normal_%03d.pfm", static_cast<int>(v));
        write_normal_map((fs::path(a.out_dir) / name).string(), est);

        if (bundle.ground_truth) {
            NormalMap gt;
            gt.width = est.width;
            gt.height = est.height;
            gt.normals = bundle.ground_truth->normals[v];
            gt.valid = bundle.views[v].mask;
            const AngularErrorStats stats = angular_error(est, gt);
            per_view_err.push_back(stats.mean_deg);
            std::snprintf(name, sizeof(name), "angular_%03d.csv", static_cast<int>(v));
            write_angular_error_csv((fs::path(a.out_dir) / name).string(), est, gt);
            report["mean_angular_deg_view_" + std::to_string(v)] = stats.mean_deg;
        }
    }
    if (!per_view_err.empty()) {
        double mean = 0;
        for (double e : per_view_err) mean += e;
        report["mean_angular_deg"] = mean / per_view_err.size();
        write_per_view_csv((fs::path(a.out_dir) / "angular_per_view.csv").string(),
                           "mean_angular_deg", per_view_err);
        write_report_json((fs::path(a.out_dir) / "report.json").string(), report);
        std::cerr << "ps: mean angular error " << report["mean_angular_deg"] << " deg\n";
    }
    return 0;
}

// --------------------------------------------------------------- train ----

struct TrainArgs {
    std::string bundle_dir, normals_dir, out_dir;
    TrainConfig cfg;
    bool no_normals = false, no_viewdir = false, per_view_lights = false;
    std::string holdout;
    std::string per_view_light_list;
};

int run_train(TrainArgs& a) {
    const SceneBundle bundle = load_bundle(a.bundle_dir);
    const auto maps = load_all_normals(a.normals_dir, bundle.views.size());

    a.cfg.use_normals = !a.no_normals;
    a.cfg.use_view_dir = !a.no_viewdir;
    if (!a.per_view_light_list.empty())
        a.cfg.per_view_lights = parse_int_list(a.per_view_light_list);
    else if (a.per_view_lights)
        a.cfg.per_view_lights = random_per_view_lights(bundle, a.cfg.seed);
    if (!a.holdout.empty()) {
        const std::vector<int> held = parse_int_list(a.holdout);
        for (std::size_t v = 0; v < bundle.views.size(); ++v)
            if (std::find(held.begin(), held.end(), static_cast<int>(v)) == held.end())
                a.cfg.train_views.push_back(static_cast<int>(v));
    }
    a.cfg.checkpoint_dir = a.out_dir;
    a.cfg.log_path = (fs::path(a.out_dir) / "train_log.csv").string();
    fs::create_directories(a.out_dir);

    const TrainResult result = train(bundle, maps, a.cfg);
    if (result.diverged) {
        std::cerr << "train: diverged at step " << result.steps_run
                  << "; last good checkpoint kept\n";
        save_checkpoint((fs::path(a.out_dir) / "checkpoint.bin").string(), result.checkpoint);
        return 2;
    }
    std::cerr << "train: " << result.steps_run << " steps, final coarse/fine loss "
              << result.log.back().loss_coarse << "/" << result.log.back().loss_fine << "\n";
    return 0;
}

// -------------------------------------------------------------- render ----

struct RenderArgs {
    std::string ckpt, bundle_dir, out_prefix;
    int view = 0;
    std::string normals_dir;
    int n_coarse = 64, n_fine = 128;
    std::uint64_t seed = 0;
};

int run_render(RenderArgs& a) {
    const Checkpoint ckpt = load_checkpoint(a.ckpt);
    const SceneBundle bundle = load_bundle(a.bundle_dir);
    if (a.view < 0 || a.view >= static_cast<int>(bundle.views.size()))
        throw std::runtime_error("render: view index out of range");
    const ViewRecord& view = bundle.views[a.view];
    const NormalMap nmap = a.normals_dir.empty() ? zero_normals(view)
                                                 : load_view_normals(a.normals_dir, a.view);
    const ImageF img = render_view(ckpt, view, nmap, bundle.bounds,
                                   {a.n_coarse, a.n_fine}, a.seed);
    write_pfm(a.out_prefix + ".pfm", img);
    write_png_srgb(a.out_prefix + ".png", img);
    std::cerr << "render: wrote " << a.out_prefix << ".{pfm,png}\n";
    return 0;
}

// ---------------------------------------------------------------- mesh ----

struct MeshArgs {
    std::string ckpt, out;
    std::string bundle_dir;
    int res = 512;
    double iso = 10.0;
    bool sweep = false;
};

int run_mesh(MeshArgs& a) {
    const Checkpoint ckpt = load_checkpoint(a.ckpt);
    Box3 bounds{{-1, -1, -1}, {1, 1, 1}};
    if (!a.bundle_dir.empty()) bounds = load_bundle(a.bundle_dir).bounds;
    const DensityGrid grid = sample_density_grid(ckpt.fine, bounds, a.res);

    if (!a.sweep) {
        const Mesh mesh = marching_cubes(grid, a.iso);
        write_ply(a.out, mesh);
        std::cerr << "mesh: iso " << a.iso << " -> " << mesh.vertices.size() << " vertices\n";
        return 0;
    }
    json sweep_report;
    const fs::path base(a.out);
    for (int iso : kIsoSweep) {
        const Mesh mesh = marching_cubes(grid, iso);
        fs::path out = base;
        out.replace_extension("");
        out += "_iso" + std::to_string(iso) + ".ply";
        if (!mesh.empty()) write_ply(out.string(), mesh);
        sweep_report[std::to_string(iso)] = {{"vertices", mesh.vertices.size()},
                                             {"triangles", mesh.triangles.size()},
                                             {"file", mesh.empty() ? "" : out.string()}};
        std::cerr << "mesh: iso " << iso << " -> " << mesh.vertices.size() << " vertices\n";
    }
    fs::path report = base;
    report.replace_extension("");
    report += "_sweep.json";
    std::ofstream f(report);
    f << sweep_report.dump(2) << "\n";
    return 0;
}

// ---------------------------------------------------------------- eval ----

struct EvalArgs {
    std::string mesh_pred, mesh_ref;
    int points = 100000;
    std::string img_pred, img_ref;
    std::string depth_pred, depth_ref, depth_mask;
    std::string normals_pred, normals_ref, angular_csv;
    std::uint64_t seed = 0;
    std::string out = "report.json";
};

int run_eval(EvalArgs& a) {
    std::map<std::string, double> metrics;
    if (!a.mesh_pred.empty() && !a.mesh_ref.empty())
        metrics["chamfer_l1"] =
            chamfer_l1(read_ply(a.mesh_pred), read_ply(a.mesh_ref), a.points, a.seed);
    if (!a.img_pred.empty() && !a.img_ref.empty())
        metrics["psnr_db"] = psnr(read_pfm(a.img_pred), read_pfm(a.img_ref));
    if (!a.depth_pred.empty() && !a.depth_ref.empty()) {
        const ImageF dp = read_pfm(a.depth_pred);
        const ImageF dg = read_pfm(a.depth_ref);
        DepthMap pred{dp.width, dp.height, dp, MaskImage(dp.pixel_count(), 1)};
        DepthMap gt{dg.width, dg.height, dg, MaskImage(dg.pixel_count(), 1)};
        for (std::size_t i = 0; i < pred.valid.size(); ++i)
            pred.valid[i] = std::isfinite(dp.data[i]) ? 1 : 0;
        for (std::size_t i = 0; i < gt.valid.size(); ++i)
            gt.valid[i] = std::isfinite(dg.data[i]) ? 1 : 0;
        MaskImage mask(dp.pixel_count(), 1);
        if (!a.depth_mask.empty()) {
            int mw = 0, mh = 0;
            mask = read_mask_png(a.depth_mask, mw, mh);
        }
        metrics["depth_l1"] = depth_l1(pred, gt, mask);
    }
    if (!a.normals_pred.empty() && !a.normals_ref.empty()) {
        const NormalMap pred = read_normal_map(a.normals_pred);
        const NormalMap ref = read_normal_map(a.normals_ref);
        const AngularErrorStats stats = angular_error(pred, ref);
        metrics["angular_mean_deg"] = stats.mean_deg;
        metrics["angular_median_deg"] = stats.median_deg;
        if (!a.angular_csv.empty()) write_angular_error_csv(a.angular_csv, pred, ref);
    }
    if (metrics.empty()) throw std::runtime_error("eval: nothing to evaluate; pass input pairs");
    write_report_json(a.out, metrics);
    for (const auto& [k, v] : metrics) std::cerr << "eval: " << k << " = " << v << "\n";
    return 0;
}

// -------------------------------------------------------------- ablate ----

struct AblateArgs {
    std::string bundle_dir, normals_dir, out_dir;
    std::string mode = "normals";  // normals | lights | sampling
    std::string seeds = "0,1,2";
    int steps = 500;
    int batch = 512;
    int n_coarse = 32, n_fine = 64;
    int trunk_layers = 4, trunk_width = 64;
    int holdout = -1;
    int light_index = 4;
    int mesh_res = 96;
    int chamfer_points = 50000;
};

struct AblateRun {
    std::string variant;
    std::uint64_t seed;
    double psnr_holdout = 0;
    double chamfer = 0;
    int best_iso = 0;
};

AblateRun ablate_one(const SceneBundle& bundle, const std::vector<NormalMap>& maps,
                     const AblateArgs& a, const std::string& variant, bool use_normals,
                     bool use_viewdir, int nc, int nf, bool per_view_lights, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.batch_rays = a.batch;
    cfg.max_steps = a.steps;
    cfg.n_coarse = nc;
    cfg.n_fine = nf;
    cfg.seed = seed;
    cfg.use_normals = use_normals;
    cfg.use_view_dir = use_viewdir;
    cfg.light_index = a.light_index;
    cfg.trunk_layers = a.trunk_layers;
    cfg.trunk_width = a.trunk_width;
    if (per_view_lights) cfg.per_view_lights = random_per_view_lights(bundle, seed);
    if (a.holdout >= 0)
        for (std::size_t v = 0; v < bundle.views.size(); ++v)
            if (static_cast<int>(v) != a.holdout) cfg.train_views.push_back(static_cast<int>(v));

    const TrainResult result = train(bundle, maps, cfg);

    AblateRun run;
    run.variant = variant;
    run.seed = seed;

    if (a.holdout >= 0) {
        const ViewRecord& view = bundle.views[a.holdout];
        const int light = cfg.per_view_lights.empty() ? a.light_index
                                                      : cfg.per_view_lights[a.holdout];
        const ImageF img = render_view(result.checkpoint, view, maps[a.holdout], bundle.bounds,
                                       {nc, nf}, seed);
        run.psnr_holdout = psnr(img, view.images[light]);
    }
    if (bundle.ground_truth && !bundle.ground_truth->mesh.empty()) {
        const FieldParams& density_net = nf > 0 ? result.checkpoint.fine : result.checkpoint.coarse;
        const DensityGrid grid = sample_density_grid(density_net, bundle.bounds, a.mesh_res);
        double best = std::numeric_limits<double>::infinity();
        for (int iso : kIsoSweep) {
            const Mesh mesh = marching_cubes(grid, iso);
            if (mesh.empty()) continue;
            const double d = chamfer_l1(mesh, bundle.ground_truth->mesh, a.chamfer_points, seed);
            if (d < best) {
                best = d;
                run.best_iso = iso;
            }
        }
        run.chamfer = best;
    }
    return run;
}

int run_ablate(AblateArgs& a) {
    const SceneBundle bundle = load_bundle(a.bundle_dir);
    const auto maps = load_all_normals(a.normals_dir, bundle.views.size());
    fs::create_directories(a.out_dir);

    struct Variant {
        std::string name;
        bool normals, viewdir, per_view_lights;
        int nc, nf;
    };
    std::vector<Variant> variants;
    if (a.mode == "normals") {
        variants = {{"full", true, true, false, a.n_coarse, a.n_fine},
                    {"no_normals", false, true, false, a.n_coarse, a.n_fine},
                    {"no_viewdir", true, false, false, a.n_coarse, a.n_fine}};
    } else if (a.mode == "lights") {
        variants = {{"full_per_view_lights", true, true, true, a.n_coarse, a.n_fine},
                    {"no_normals_per_view_lights", false, true, true, a.n_coarse, a.n_fine}};
    } else if (a.mode == "sampling") {
        variants = {{"coarse_only", true, true, false, a.n_coarse, 0},
                    {"coarse_only_4x", true, true, false, 4 * a.n_coarse, 0},
                    {"two_stage", true, true, false, a.n_coarse, a.n_fine}};
    } else {
        throw std::runtime_error("ablate: unknown mode " + a.mode);
    }

    json report;
    report["mode"] = a.mode;
    json runs = json::array();
    std::map<std::string, std::pair<double, double>> sums;  // variant -> (psnr, chamfer)
    std::map<std::string, int> counts;
    for (std::uint64_t seed : parse_int_list(a.seeds)) {
        for (const Variant& v : variants) {
            std::cerr << "ablate: " << v.name << " seed " << seed << "\n";
            const AblateRun run = ablate_one(bundle, maps, a, v.name, v.normals, v.viewdir, v.nc,
                                             v.nf, v.per_view_lights, seed);
            runs.push_back({{"variant", run.variant},
                            {"seed", run.seed},
                            {"psnr_holdout_db", run.psnr_holdout},
                            {"chamfer_l1", run.chamfer},
                            {"best_iso", run.best_iso}});
            sums[v.name].first += run.psnr_holdout;
            sums[v.name].second += run.chamfer;
            counts[v.name] += 1;
        }
    }
    report["runs"] = runs;
    json means;
    for (const auto& [name, sum] : sums)
        means[name] = {{"psnr_holdout_db", sum.first / counts[name]},
                       {"chamfer_l1", sum.second / counts[name]}};
    report["means"] = means;
    std::ofstream f(fs::path(a.out_dir) / "ablate_report.json");
    f << report.dump(2) << "\n";
    std::cerr << "ablate: report written to " << (fs::path(a.out_dir) / "ablate_report.json")
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-view photometric stereo reconstruction with a normal-conditioned "
                 "radiance field"};
    app.require_subcommand(1);

    int threads = 0;
    if (const char* env = std::getenv("NRF_MVPS_THREADS")) threads = std::atoi(env);
    app.add_option("--threads", threads, "worker threads (0 = all cores)")
        ->capture_default_str();
    std::string config_path;
    app.add_option("--config", config_path, "JSON config file; flags override its values");

    // Pre-scan for --config so subcommand defaults can come from it.
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string(argv[i]) == "--config") {
            std::ifstream f(argv[i + 1]);
            if (!f) {
                std::cerr << "cannot open config file " << argv[i + 1] << "\n";
                return 1;
            }
            try {
                f >> g_config;
            } catch (const json::exception& e) {
                std::cerr << "config parse error: " << e.what() << "\n";
                return 1;
            }
        }

    GenArgs gen;
    CLI::App* cmd_gen = app.add_subcommand("gen", "generate a synthetic scene bundle");
    cmd_gen->add_option("out", gen.out, "output bundle directory")->required();
    cmd_gen->add_option("--shape", gen.shape, "sphere|torus|blend")->capture_default_str();
    cmd_gen->add_option("--views", gen.cfg.n_views, "camera count")->capture_default_str();
    cmd_gen->add_option("--lights", gen.cfg.n_lights, "lights per view")->capture_default_str();
    cmd_gen->add_option("--size", gen.cfg.image_size, "image side in pixels")->capture_default_str();
    cmd_gen->add_option("--seed", gen.cfg.seed, "root seed")->capture_default_str();
    cmd_gen->add_option("--noise", gen.cfg.noise_std, "additive noise std dev")->capture_default_str();
    cmd_gen->add_option("--albedo", gen.cfg.albedo, "base albedo")->capture_default_str();
    cmd_gen->add_flag("--checker", gen.cfg.checker_albedo, "two-tone checker albedo");
    cmd_gen->add_option("--specular-strength", gen.cfg.specular_strength, "Blinn-Phong strength")
        ->capture_default_str();
    cmd_gen->add_option("--specular-exponent", gen.cfg.specular_exponent, "Blinn-Phong exponent")
        ->capture_default_str();
    cmd_gen->add_option("--ring-angle", gen.cfg.light_ring_deg, "light ring half-angle, degrees")
        ->capture_default_str();
    cmd_gen->add_option("--light-intensity", gen.cfg.light_intensity, "source intensity e")
        ->capture_default_str();
    cmd_gen->add_option("--cam-dist", gen.cfg.camera_distance, "camera distance")->capture_default_str();
    cmd_gen->add_option("--elevation", gen.cfg.camera_elevation_deg,
                        "camera elevation magnitude, alternating sign")
        ->capture_default_str();
    cmd_gen->add_option("--focal", gen.cfg.focal_px, "focal length in pixels (0 = auto-fit)")
        ->capture_default_str();
    cmd_gen->add_option("--radius", gen.cfg.sphere_radius, "sphere radius")->capture_default_str();
    cmd_gen->add_flag("--cast-shadows", gen.cfg.cast_shadows, "trace shadow rays (off: attached only)");
    cmd_gen->add_option("--gt-mesh-res", gen.cfg.gt_mesh_res, "reference mesh grid resolution")
        ->capture_default_str();
    apply_config(cmd_gen, "gen");

    PsArgs ps;
    CLI::App* cmd_ps = app.add_subcommand("ps", "estimate per-view normal maps");
    cmd_ps->add_option("bundle", ps.bundle_dir, "bundle directory")->required();
    cmd_ps->add_option("out", ps.out_dir, "output directory for normal maps")->required();
    cmd_ps->add_option("--method", ps.method, "woodham|trimmed|regressor")->capture_default_str();
    cmd_ps->add_option("--trim", ps.trim, "fraction of darkest observations dropped (trimmed)")
        ->capture_default_str();
    cmd_ps->add_option("--rotations", ps.rotations, "rotation-averaged inference count (regressor)")
        ->capture_default_str();
    cmd_ps->add_flag("--train-regressor", ps.train_regressor, "train the regressor on this bundle's ground truth");
    cmd_ps->add_option("--regressor-file", ps.regressor_file, "regressor weights to load/save");
    cmd_ps->add_option("--epochs", ps.epochs, "regressor training epochs")->capture_default_str();
    cmd_ps->add_option("--lr", ps.lr, "regressor learning rate")->capture_default_str();
    cmd_ps->add_option("--batch", ps.batch, "regressor batch size")->capture_default_str();
    cmd_ps->add_option("--seed", ps.seed, "root seed")->capture_default_str();
    apply_config(cmd_ps, "ps");

    TrainArgs tr;
    CLI::App* cmd_train = app.add_subcommand("train", "optimize coarse+fine radiance fields");
    cmd_train->add_option("bundle", tr.bundle_dir, "bundle directory")->required();
    cmd_train->add_option("normals", tr.normals_dir, "directory of normal_###.pfm maps")->required();
    cmd_train->add_option("out", tr.out_dir, "output directory (checkpoints, log)")->required();
    cmd_train->add_option("--nc", tr.cfg.n_coarse, "coarse samples per ray")->capture_default_str();
    cmd_train->add_option("--nf", tr.cfg.n_fine, "fine samples per ray (0 = coarse only)")
        ->capture_default_str();
    cmd_train->add_option("--epochs", tr.cfg.epochs, "training epochs")->capture_default_str();
    cmd_train->add_option("--steps", tr.cfg.max_steps, "fixed step count (overrides epochs)")
        ->capture_default_str();
    cmd_train->add_option("--batch", tr.cfg.batch_rays, "rays per batch")->capture_default_str();
    cmd_train->add_option("--lr", tr.cfg.adam.lr, "Adam learning rate")->capture_default_str();
    cmd_train->add_flag("--lr-decay", tr.cfg.lr_decay, "exponential decay to 0.1x over the run");
    cmd_train->add_option("--seed", tr.cfg.seed, "root seed")->capture_default_str();
    cmd_train->add_flag("--no-normals", tr.no_normals, "drop the PS-normal conditioning");
    cmd_train->add_flag("--no-viewdir", tr.no_viewdir, "drop the view-direction conditioning");
    cmd_train->add_option("--light-index", tr.cfg.light_index, "target image per view")
        ->capture_default_str();
    cmd_train->add_flag("--per-view-lights", tr.per_view_lights,
                        "assign a random light per view (seeded)");
    cmd_train->add_option("--per-view-light-list", tr.per_view_light_list,
                          "explicit comma-separated light index per view");
    cmd_train->add_option("--holdout", tr.holdout, "comma-separated views excluded from training");
    cmd_train->add_option("--bg-fraction", tr.cfg.object_fraction,
                          "fraction of each batch drawn from object pixels")
        ->capture_default_str();
    cmd_train->add_option("--trunk-layers", tr.cfg.trunk_layers, "MLP trunk depth")
        ->capture_default_str();
    cmd_train->add_option("--trunk-width", tr.cfg.trunk_width, "MLP trunk width")
        ->capture_default_str();
    cmd_train->add_option("--enc-pos", tr.cfg.enc.l_pos, "position encoding octaves")
        ->capture_default_str();
    cmd_train->add_option("--enc-dir", tr.cfg.enc.l_dir, "direction encoding octaves")
        ->capture_default_str();
    cmd_train->add_option("--enc-normal", tr.cfg.enc.l_normal, "normal encoding octaves")
        ->capture_default_str();
    apply_config(cmd_train, "train");

    RenderArgs rd;
    CLI::App* cmd_render = app.add_subcommand("render", "render one view from a checkpoint");
    cmd_render->add_option("ckpt", rd.ckpt, "checkpoint file")->required();
    cmd_render->add_option("bundle", rd.bundle_dir, "bundle directory")->required();
    cmd_render->add_option("view", rd.view, "view index")->required();
    cmd_render->add_option("out", rd.out_prefix, "output prefix (.pfm/.png added)")->required();
    cmd_render->add_option("--normals", rd.normals_dir, "PS normal map directory (zero normals if absent)");
    cmd_render->add_option("--nc", rd.n_coarse, "coarse samples per ray")->capture_default_str();
    cmd_render->add_option("--nf", rd.n_fine, "fine samples per ray")->capture_default_str();
    cmd_render->add_option("--seed", rd.seed, "render seed")->capture_default_str();
    apply_config(cmd_render, "render");

    MeshArgs ms;
    CLI::App* cmd_mesh = app.add_subcommand("mesh", "extract an isosurface mesh");
    cmd_mesh->add_option("ckpt", ms.ckpt, "checkpoint file")->required();
    cmd_mesh->add_option("out", ms.out, "output PLY path")->required();
    cmd_mesh->add_option("--res", ms.res, "density grid resolution")->capture_default_str();
    cmd_mesh->add_option("--iso", ms.iso, "density threshold")->capture_default_str();
    cmd_mesh->add_flag("--iso-sweep", ms.sweep, "extract at thresholds 1,5,10,20,50,100");
    cmd_mesh->add_option("--bundle", ms.bundle_dir, "bundle directory for bounds (default unit box)");
    apply_config(cmd_mesh, "mesh");

    EvalArgs ev;
    CLI::App* cmd_eval = app.add_subcommand("eval", "score meshes/images/depths/normals");
    cmd_eval->add_option("--mesh-pred", ev.mesh_pred, "predicted mesh (PLY)");
    cmd_eval->add_option("--mesh-ref", ev.mesh_ref, "reference mesh (PLY)");
    cmd_eval->add_option("--points", ev.points, "surface samples per mesh")->capture_default_str();
    cmd_eval->add_option("--img-pred", ev.img_pred, "predicted image (PFM)");
    cmd_eval->add_option("--img-ref", ev.img_ref, "reference image (PFM)");
    cmd_eval->add_option("--depth-pred", ev.depth_pred, "predicted depth (PFM)");
    cmd_eval->add_option("--depth-ref", ev.depth_ref, "reference depth (PFM)");
    cmd_eval->add_option("--mask", ev.depth_mask, "mask PNG restricting depth comparison");
    cmd_eval->add_option("--normals-pred", ev.normals_pred, "predicted normal map (PFM)");
    cmd_eval->add_option("--normals-ref", ev.normals_ref, "reference normal map (PFM)");
    cmd_eval->add_option("--angular-csv", ev.angular_csv, "per-pixel angular error CSV output");
    cmd_eval->add_option("--seed", ev.seed, "sampling seed")->capture_default_str();
    cmd_eval->add_option("-o,--out", ev.out, "report JSON path")->capture_default_str();
    apply_config(cmd_eval, "eval");

    AblateArgs ab;
    CLI::App* cmd_ablate = app.add_subcommand("ablate", "conditioning/light/sampling comparisons");
    cmd_ablate->add_option("bundle", ab.bundle_dir, "bundle directory")->required();
    cmd_ablate->add_option("normals", ab.normals_dir, "normal map directory")->required();
    cmd_ablate->add_option("out", ab.out_dir, "output directory")->required();
    cmd_ablate->add_option("--mode", ab.mode, "normals|lights|sampling")->capture_default_str();
    cmd_ablate->add_option("--seeds", ab.seeds, "comma-separated seeds")->capture_default_str();
    cmd_ablate->add_option("--steps", ab.steps, "training steps per run")->capture_default_str();
    cmd_ablate->add_option("--batch", ab.batch, "rays per batch")->capture_default_str();
    cmd_ablate->add_option("--nc", ab.n_coarse, "coarse samples per ray")->capture_default_str();
    cmd_ablate->add_option("--nf", ab.n_fine, "fine samples per ray")->capture_default_str();
    cmd_ablate->add_option("--trunk-layers", ab.trunk_layers, "MLP trunk depth")->capture_default_str();
    cmd_ablate->add_option("--trunk-width", ab.trunk_width, "MLP trunk width")->capture_default_str();
    cmd_ablate->add_option("--holdout", ab.holdout, "held-out view for PSNR (-1 = none)")
        ->capture_default_str();
    cmd_ablate->add_option("--light-index", ab.light_index, "target image per view")
        ->capture_default_str();
    cmd_ablate->add_option("--mesh-res", ab.mesh_res, "density grid resolution")->capture_default_str();
    cmd_ablate->add_option("--chamfer-points", ab.chamfer_points, "surface samples per mesh")
        ->capture_default_str();
    apply_config(cmd_ablate, "ablate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // CLI11 prints help/usage itself; fold all parse failures into 1.
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    set_thread_count(threads);

    try {
        if (cmd_gen->parsed()) return run_gen(gen);
        if (cmd_ps->parsed()) return run_ps(ps);
        if (cmd_train->parsed()) return run_train(tr);
        if (cmd_render->parsed()) return run_render(rd);
        if (cmd_mesh->parsed()) return run_mesh(ms);
        if (cmd_eval->parsed()) return run_eval(ev);
        if (cmd_ablate->parsed()) return run_ablate(ab);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
