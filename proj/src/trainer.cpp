#include "nrf/trainer.hpp"

#include "nrf/kernels.hpp"
#include "nrf/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace nrf {

namespace {
// Stream keys for the per-stage random streams.
constexpr std::uint64_t kKeyBatch = 0x62617463ull;
constexpr std::uint64_t kKeyStrat = 0x73747261ull;
constexpr std::uint64_t kKeyFine = 0x66696e65ull;
}  // namespace

void TrainConfig::validate() const {
    if (batch_rays < 1) throw std::invalid_argument("train config: batch_rays must be >= 1");
    if (!(adam.lr > 0)) throw std::invalid_argument("train config: lr must be positive");
    if (n_coarse < 1 || n_fine < 0) throw std::invalid_argument("train config: bad sample counts");
    if (object_fraction < 0 || object_fraction > 1)
        throw std::invalid_argument("train config: object_fraction must be in [0,1]");
    enc.validate();
}

double mvps_loss(const Vec3d& color_coarse, const Vec3d& color_fine, const Vec3d& target) {
    const Vec3d dc = color_coarse - target;
    const Vec3d df = color_fine - target;
    return dot(dc, dc) + dot(df, df);
}

std::vector<int> select_training_light(const SceneBundle& bundle, int index) {
    std::vector<int> out(bundle.views.size(), index);
    for (std::size_t v = 0; v < bundle.views.size(); ++v)
        if (index < 0 || index >= static_cast<int>(bundle.views[v].lights.size()))
            throw std::invalid_argument("select_training_light: index " + std::to_string(index) +
                                        " out of range for view " + std::to_string(v));
    return out;
}

std::vector<int> select_training_light(const SceneBundle& bundle, std::span<const int> per_view) {
    if (per_view.size() != bundle.views.size())
        throw std::invalid_argument("select_training_light: per-view list length mismatch");
    for (std::size_t v = 0; v < per_view.size(); ++v)
        if (per_view[v] < 0 || per_view[v] >= static_cast<int>(bundle.views[v].lights.size()))
            throw std::invalid_argument("select_training_light: index " +
                                        std::to_string(per_view[v]) + " out of range for view " +
                                        std::to_string(v));
    return {per_view.begin(), per_view.end()};
}

namespace {

struct PixelRef {
    int view;
    int x, y;
};

struct RayPools {
    std::vector<PixelRef> object;      // mask=1 with a valid PS normal
    std::vector<PixelRef> background;  // everything else
    std::vector<double> t_near, t_far; // per view
};

RayPools build_pools(const SceneBundle& bundle, std::span<const NormalMap> normal_maps,
                     const TrainConfig& cfg) {
    RayPools pools;
    std::vector<int> views(cfg.train_views);
    if (views.empty()) {
        views.resize(bundle.views.size());
        for (std::size_t v = 0; v < views.size(); ++v) views[v] = static_cast<int>(v);
    }
    pools.t_near.resize(bundle.views.size());
    pools.t_far.resize(bundle.views.size());
    const Vec3d center = bundle.bounds.center();
    const double radius = bundle.bounds.radius();
    for (int v : views) {
        if (v < 0 || v >= static_cast<int>(bundle.views.size()))
            throw std::invalid_argument("train: view index out of range");
        const ViewRecord& view = bundle.views[v];
        const double dist = norm(view.pose.translation - center);
        pools.t_near[v] = std::max(1e-3, dist - 1.5 * radius);
        pools.t_far[v] = dist + 1.5 * radius;
        const NormalMap& nmap = normal_maps[v];
        for (int y = 0; y < view.intrinsics.height; ++y)
            for (int x = 0; x < view.intrinsics.width; ++x) {
                const std::size_t pix = static_cast<std::size_t>(y) * view.intrinsics.width + x;
                if (view.mask[pix] && nmap.valid[pix]) pools.object.push_back({v, x, y});
                else pools.background.push_back({v, x, y});
            }
    }
    return pools;
}

TrainRay make_ray(const SceneBundle& bundle, std::span<const NormalMap> normal_maps,
                  const RayPools& pools, std::span<const int> light_sel, const PixelRef& ref,
                  bool background) {
    const ViewRecord& view = bundle.views[ref.view];
    TrainRay tr;
    tr.ray = pixel_ray(view.intrinsics, view.pose, {ref.x + 0.5, ref.y + 0.5},
                       pools.t_near[ref.view], pools.t_far[ref.view]);
    tr.background = background;
    if (background) {
        tr.n_ps_world = {0, 0, 0};
    } else {
        tr.n_ps_world = camera_normal_to_world(view.pose,
                                               normalized(normal_maps[ref.view].at(ref.x, ref.y)));
    }
    const float* px = view.images[light_sel[ref.view]].px(ref.x, ref.y);
    tr.target = {px[0], px[1], px[2]};
    return tr;
}

}  // namespace

std::vector<TrainRay> sample_ray_batch(const SceneBundle& bundle,
                                       std::span<const NormalMap> normal_maps,
                                       const TrainConfig& cfg, std::uint64_t step) {
    if (normal_maps.size() != bundle.views.size())
        throw std::invalid_argument("sample_ray_batch: need one normal map per view");
    const std::vector<int> light_sel =
        cfg.per_view_lights.empty()
            ? select_training_light(bundle, cfg.light_index)
            : select_training_light(bundle, std::span<const int>(cfg.per_view_lights));
    const RayPools pools = build_pools(bundle, normal_maps, cfg);

    const int n_obj = static_cast<int>(std::lround(cfg.object_fraction * cfg.batch_rays));
    if (n_obj > 0 && pools.object.empty())
        throw std::invalid_argument("sample_ray_batch: no masked pixels with valid normals");
    if (n_obj < cfg.batch_rays && pools.background.empty())
        throw std::invalid_argument("sample_ray_batch: no background pixels available");

    std::vector<TrainRay> batch;
    batch.reserve(cfg.batch_rays);
    for (int s = 0; s < cfg.batch_rays; ++s) {
        Rng rng(cfg.seed, kKeyBatch, step, static_cast<std::uint64_t>(s));
        const bool object = s < n_obj;
        const auto& pool = object ? pools.object : pools.background;
        const PixelRef& ref = pool[rng.below(pool.size())];
        batch.push_back(make_ray(bundle, normal_maps, pools, light_sel, ref, !object));
    }
    return batch;
}

template <typename T>
BatchStats<T> render_batch(const FieldParamsT<T>& coarse, const FieldParamsT<T>& fine,
                           std::span<const TrainRay> rays, const RenderConfig& rc,
                           std::uint64_t seed, std::uint64_t step, std::size_t ray_index_offset,
                           const FrozenRaySamples<T>* frozen, T* grad_coarse, T* grad_fine) {
    BatchStats<T> stats;
    const int n_rays = static_cast<int>(rays.size());
    if (n_rays == 0) return stats;
    stats.rays = n_rays;

    const int l_pos = coarse.enc.l_pos;
    const int pos_dim = coarse.enc.pos_dim();
    const int dir_dim = coarse.enc.dir_dim();
    const int nrm_dim = coarse.enc.normal_dim();
    const int nc = frozen ? static_cast<int>(frozen->coarse[0].ts.size()) : rc.n_coarse;

    // Per-ray conditioning rows.
    std::vector<T> d_rows(static_cast<std::size_t>(n_rays) * dir_dim);
    std::vector<T> n_rows(static_cast<std::size_t>(n_rays) * nrm_dim);
    for (int r = 0; r < n_rays; ++r) {
        fourier_encode3(Vec3<T>{static_cast<T>(rays[r].ray.direction.x),
                                static_cast<T>(rays[r].ray.direction.y),
                                static_cast<T>(rays[r].ray.direction.z)},
                        coarse.enc.l_dir, d_rows.data() + static_cast<std::size_t>(r) * dir_dim);
        fourier_encode3(Vec3<T>{static_cast<T>(rays[r].n_ps_world.x),
                                static_cast<T>(rays[r].n_ps_world.y),
                                static_cast<T>(rays[r].n_ps_world.z)},
                        coarse.enc.l_normal, n_rows.data() + static_cast<std::size_t>(r) * nrm_dim);
    }

    auto broadcast = [&](const std::vector<T>& rows, int dim, int per_ray, std::vector<T>& out) {
        out.resize(static_cast<std::size_t>(n_rays) * per_ray * dim);
        for (int r = 0; r < n_rays; ++r)
            for (int i = 0; i < per_ray; ++i)
                std::memcpy(out.data() + (static_cast<std::size_t>(r) * per_ray + i) * dim,
                            rows.data() + static_cast<std::size_t>(r) * dim, sizeof(T) * dim);
    };

    // ---- Coarse pass ----
    std::vector<RaySamples<T>> cs(n_rays);
    for (int r = 0; r < n_rays; ++r) {
        if (frozen) {
            cs[r] = frozen->coarse[r];
        } else {
            Rng rng(seed, kKeyStrat, step, ray_index_offset + r);
            cs[r] = stratified_sample<T>(static_cast<T>(rays[r].ray.t_near),
                                         static_cast<T>(rays[r].ray.t_far), nc, rng);
        }
    }
    const std::size_t m_c = static_cast<std::size_t>(n_rays) * nc;
    std::vector<T> xc(m_c * pos_dim), dc_rows, nc_rows;
    for (int r = 0; r < n_rays; ++r)
        encode_positions(rays[r].ray, std::span<const T>(cs[r].ts), l_pos,
                         xc.data() + static_cast<std::size_t>(r) * nc * pos_dim);
    broadcast(d_rows, dir_dim, nc, dc_rows);
    broadcast(n_rows, nrm_dim, nc, nc_rows);

    std::vector<T> sigma_c(m_c), color_c(m_c * 3);
    ForwardCache<T> cache_c;
    field_forward(coarse, xc.data(), dc_rows.data(), nc_rows.data(), static_cast<int>(m_c),
                  sigma_c.data(), color_c.data(), grad_coarse ? &cache_c : nullptr);

    std::vector<RenderOutput<T>> out_c(n_rays);
    std::vector<T> dsigma_c, dcolor_c;
    if (grad_coarse) {
        dsigma_c.assign(m_c, T(0));
        dcolor_c.assign(m_c * 3, T(0));
    }
    for (int r = 0; r < n_rays; ++r) {
        const std::span<const T> sig(sigma_c.data() + static_cast<std::size_t>(r) * nc, nc);
        const T* col = color_c.data() + static_cast<std::size_t>(r) * nc * 3;
        out_c[r] = composite<T>(sig, col, cs[r]);
        const Vec3d cc{out_c[r].color.x, out_c[r].color.y, out_c[r].color.z};
        const Vec3d tgt{rays[r].target.x, rays[r].target.y, rays[r].target.z};
        const Vec3d diff = cc - tgt;
        stats.loss_coarse += dot(diff, diff);
        if (grad_coarse) {
            const Vec3<T> up{static_cast<T>(2 * diff.x), static_cast<T>(2 * diff.y),
                             static_cast<T>(2 * diff.z)};
            composite_backward<T>(sig, col, cs[r], up,
                                  dsigma_c.data() + static_cast<std::size_t>(r) * nc,
                                  dcolor_c.data() + static_cast<std::size_t>(r) * nc * 3);
        }
    }
    if (grad_coarse)
        field_backward(coarse, cache_c, dsigma_c.data(), dcolor_c.data(), grad_coarse);

    // Coarse-only training mode (sampling ablation): no fine pass at all.
    if (rc.n_fine == 0 && !frozen) {
        stats.loss = stats.loss_coarse;
        return stats;
    }

    // ---- Fine pass over the union of samples ----
    std::vector<RaySamples<T>> fs(n_rays);
    for (int r = 0; r < n_rays; ++r) {
        std::vector<T> fine_ts;
        if (frozen) {
            fine_ts = frozen->fine[r];
        } else {
            Rng rng(seed, kKeyFine, step, ray_index_offset + r);
            fine_ts = hierarchical_resample<T>(out_c[r].weights, cs[r], rc.n_fine, rng, nullptr);
        }
        fs[r] = merge_samples<T>(cs[r], fine_ts);
    }
    const int nf = static_cast<int>(fs[0].ts.size());
    const std::size_t m_f = static_cast<std::size_t>(n_rays) * nf;
    std::vector<T> xf(m_f * pos_dim), df_rows, nf_rows;
    for (int r = 0; r < n_rays; ++r)
        encode_positions(rays[r].ray, std::span<const T>(fs[r].ts), l_pos,
                         xf.data() + static_cast<std::size_t>(r) * nf * pos_dim);
    broadcast(d_rows, dir_dim, nf, df_rows);
    broadcast(n_rows, nrm_dim, nf, nf_rows);

    std::vector<T> sigma_f(m_f), color_f(m_f * 3);
    ForwardCache<T> cache_f;
    field_forward(fine, xf.data(), df_rows.data(), nf_rows.data(), static_cast<int>(m_f),
                  sigma_f.data(), color_f.data(), grad_fine ? &cache_f : nullptr);

    std::vector<T> dsigma_f, dcolor_f;
    if (grad_fine) {
        dsigma_f.assign(m_f, T(0));
        dcolor_f.assign(m_f * 3, T(0));
    }
    for (int r = 0; r < n_rays; ++r) {
        const std::span<const T> sig(sigma_f.data() + static_cast<std::size_t>(r) * nf, nf);
        const T* col = color_f.data() + static_cast<std::size_t>(r) * nf * 3;
        const RenderOutput<T> out = composite<T>(sig, col, fs[r]);
        const Vec3d cf{out.color.x, out.color.y, out.color.z};
        const Vec3d tgt{rays[r].target.x, rays[r].target.y, rays[r].target.z};
        const Vec3d diff = cf - tgt;
        stats.loss_fine += dot(diff, diff);
        if (grad_fine) {
            const Vec3<T> up{static_cast<T>(2 * diff.x), static_cast<T>(2 * diff.y),
                             static_cast<T>(2 * diff.z)};
            composite_backward<T>(sig, col, fs[r], up,
                                  dsigma_f.data() + static_cast<std::size_t>(r) * nf,
                                  dcolor_f.data() + static_cast<std::size_t>(r) * nf * 3);
        }
    }
    if (grad_fine)
        field_backward(fine, cache_f, dsigma_f.data(), dcolor_f.data(), grad_fine);

    stats.loss = stats.loss_coarse + stats.loss_fine;
    return stats;
}

TrainResult train(const SceneBundle& bundle, std::span<const NormalMap> normal_maps,
                  const TrainConfig& cfg) {
    cfg.validate();
    if (bundle.views.size() < 2)
        throw std::invalid_argument("train: multi-view optimization needs >= 2 views");
    if (normal_maps.size() != bundle.views.size())
        throw std::invalid_argument("train: need one normal map per view");

    FieldArch arch{cfg.trunk_layers, cfg.trunk_width, cfg.use_view_dir, cfg.use_normals};
    FieldParams coarse = init_field<float>(cfg.enc, arch, hash_combine(cfg.seed, 0x636f6172ull));
    FieldParams fine = init_field<float>(cfg.enc, arch, hash_combine(cfg.seed, 0x66696e65ull));

    AdamState<float> state_c, state_f;
    state_c.init(coarse.values.size());
    state_f.init(fine.values.size());

    // One epoch sweeps (total masked pixels) / batch_rays batches.
    std::size_t masked = 0;
    for (const ViewRecord& view : bundle.views)
        for (auto m : view.mask) masked += m;
    const int steps_per_epoch =
        std::max(1, static_cast<int>((masked + cfg.batch_rays - 1) / cfg.batch_rays));
    const int total_steps = cfg.max_steps > 0 ? cfg.max_steps : steps_per_epoch * cfg.epochs;

    const RenderConfig rc{cfg.n_coarse, cfg.n_fine};
    constexpr int kChunkRays = 32;  // fixed: reduction order never depends on workers

    TrainResult result;
    Checkpoint last_good{coarse, fine};

    for (int step = 0; step < total_steps; ++step) {
        const std::vector<TrainRay> batch =
            sample_ray_batch(bundle, normal_maps, cfg, static_cast<std::uint64_t>(step));

        const std::size_t n_chunks = (batch.size() + kChunkRays - 1) / kChunkRays;
        struct ChunkOut {
            std::vector<float> gc, gf;
            BatchStats<float> stats;
        };
        std::vector<ChunkOut> chunks(n_chunks);
        parallel_chunks(batch.size(), kChunkRays,
                        [&](std::size_t ci, std::size_t b, std::size_t e) {
            ChunkOut& out = chunks[ci];
            out.gc.assign(coarse.values.size(), 0.0f);
            out.gf.assign(fine.values.size(), 0.0f);
            out.stats = render_batch<float>(
                coarse, fine, std::span<const TrainRay>(batch.data() + b, e - b), rc, cfg.seed,
                static_cast<std::uint64_t>(step), b, nullptr, out.gc.data(), out.gf.data());
        });

        BatchStats<float> stats;
        std::vector<float> grad_c(coarse.values.size(), 0.0f);
        std::vector<float> grad_f(fine.values.size(), 0.0f);
        for (const ChunkOut& out : chunks) {  // chunk order: deterministic sum
            stats.loss += out.stats.loss;
            stats.loss_coarse += out.stats.loss_coarse;
            stats.loss_fine += out.stats.loss_fine;
            stats.rays += out.stats.rays;
            kern::axpy(1.0f, out.gc.data(), grad_c.data(), grad_c.size());
            kern::axpy(1.0f, out.gf.data(), grad_f.data(), grad_f.size());
        }

        if (!std::isfinite(stats.loss)) {
            result.diverged = true;
            result.checkpoint = last_good;
            result.steps_run = step;
            return result;
        }

        AdamConfig adam = cfg.adam;
        if (cfg.lr_decay)
            adam.lr = cfg.adam.lr * std::pow(0.1, static_cast<double>(step) / total_steps);
        try {
            adam_step<float>(coarse.values, grad_c, state_c, adam, "coarse");
            adam_step<float>(fine.values, grad_f, state_f, adam, "fine");
        } catch (const std::runtime_error&) {
            result.diverged = true;
            result.checkpoint = last_good;
            result.steps_run = step;
            return result;
        }

        TrainLogRow row;
        row.step = step;
        row.loss_coarse = stats.loss_coarse / stats.rays;
        row.loss_fine = stats.loss_fine / stats.rays;
        const double mse = stats.loss_fine / (3.0 * stats.rays);
        row.psnr_train = mse > 0 ? 10.0 * std::log10(1.0 / mse) : 99.0;
        result.log.push_back(row);

        if ((step + 1) % steps_per_epoch == 0 || step + 1 == total_steps) {
            last_good = Checkpoint{coarse, fine};
            if (!cfg.checkpoint_dir.empty()) {
                std::filesystem::create_directories(cfg.checkpoint_dir);
                const int epoch = (step + 1) / steps_per_epoch;
                char name[64];
                std::snprintf(name, sizeof(name), "checkpoint_epoch_%03d.bin", epoch);
                save_checkpoint((std::filesystem::path(cfg.checkpoint_dir) / name).string(),
                                last_good);
            }
        }
    }

    result.checkpoint = Checkpoint{std::move(coarse), std::move(fine)};
    result.steps_run = total_steps;
    if (!cfg.checkpoint_dir.empty()) {
        std::filesystem::create_directories(cfg.checkpoint_dir);
        save_checkpoint((std::filesystem::path(cfg.checkpoint_dir) / "checkpoint.bin").string(),
                        result.checkpoint);
    }
    if (!cfg.log_path.empty()) write_train_log(cfg.log_path, result.log);
    return result;
}

void write_train_log(const std::string& path, std::span<const TrainLogRow> log) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error(path + ": cannot open for writing");
    f << "step,loss_coarse,loss_fine,psnr_train\n";
    char buf[160];
    for (const TrainLogRow& row : log) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", row.step, row.loss_coarse,
                      row.loss_fine, row.psnr_train);
        f << buf;
    }
}

template BatchStats<float> render_batch<float>(const FieldParamsT<float>&, const FieldParamsT<float>&,
                                               std::span<const TrainRay>, const RenderConfig&,
                                               std::uint64_t, std::uint64_t, std::size_t,
                                               const FrozenRaySamples<float>*, float*, float*);
template BatchStats<double> render_batch<double>(const FieldParamsT<double>&,
                                                 const FieldParamsT<double>&,
                                                 std::span<const TrainRay>, const RenderConfig&,
                                                 std::uint64_t, std::uint64_t, std::size_t,
                                                 const FrozenRaySamples<double>*, double*, double*);

}  // namespace nrf
