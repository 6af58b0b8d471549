#include "nrf/photometric_stereo.hpp"

#include "nrf/kernels.hpp"
#include "nrf/optim.hpp"
#include "nrf/parallel.hpp"
#include "nrf/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace nrf {

namespace {

constexpr double kPi = 3.14159265358979323846;

int zeta(double a, int w) {
    const int idx = static_cast<int>(std::floor(a));
    return idx < 0 ? 0 : (idx >= w ? w - 1 : idx);
}

// Solves the 3x3 system A x = b by Gaussian elimination with partial
// pivoting. Throws when A is rank deficient.
Vec3d solve3(double (&a)[3][3], Vec3d b) {
    int perm[3] = {0, 1, 2};
    double scale = 0;
    for (auto& row : a)
        for (double v : row) scale = std::max(scale, std::abs(v));
    if (scale == 0) throw std::invalid_argument("degenerate light configuration");
    for (int col = 0; col < 3; ++col) {
        int pivot = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::abs(a[perm[r]][col]) > std::abs(a[perm[pivot]][col])) pivot = r;
        std::swap(perm[col], perm[pivot]);
        const double p = a[perm[col]][col];
        if (std::abs(p) < 1e-12 * scale) throw std::invalid_argument("degenerate light configuration");
        for (int r = col + 1; r < 3; ++r) {
            const double f = a[perm[r]][col] / p;
            for (int c = col; c < 3; ++c) a[perm[r]][c] -= f * a[perm[col]][c];
            b[perm[r]] -= f * b[perm[col]];
        }
    }
    Vec3d x;
    for (int col = 2; col >= 0; --col) {
        double s = b[perm[col]];
        for (int c = col + 1; c < 3; ++c) s -= a[perm[col]][c] * x[c];
        x[col] = s / a[perm[col]][col];
    }
    return x;
}

}  // namespace

ObservationMap build_observation_map(std::span<const double> intensities,
                                     std::span<const LightSource> lights, int w) {
    if (intensities.size() != lights.size())
        throw std::invalid_argument("observation map: intensity/light count mismatch");
    if (intensities.empty()) throw std::invalid_argument("observation map: needs >= 1 observation");
    if (w < 1) throw std::invalid_argument("observation map: size must be >= 1");

    double max_val = 0;
    for (std::size_t i = 0; i < intensities.size(); ++i) {
        if (intensities[i] < 0)
            throw std::invalid_argument("observation map: negative intensity");
        max_val = std::max(max_val, intensities[i] / lights[i].intensity);
    }

    ObservationMap map;
    map.w = w;
    map.grid.assign(static_cast<std::size_t>(w) * w, 0.0);
    if (max_val == 0) return map;  // all-shadow pixel: all-zero map

    const double eta = 1.0 / max_val;  // largest entry becomes exactly 1
    for (std::size_t i = 0; i < intensities.size(); ++i) {
        const Vec3d& l = lights[i].direction;
        const int ix = zeta(w * (l.x + 1.0) / 2.0, w);
        const int iy = zeta(w * (l.y + 1.0) / 2.0, w);
        double& cell = map.grid[static_cast<std::size_t>(ix) * w + iy];
        cell = std::max(cell, eta * intensities[i] / lights[i].intensity);
    }
    return map;
}

PsSolution woodham_solve(std::span<const double> intensities,
                         std::span<const LightSource> lights) {
    if (intensities.size() != lights.size())
        throw std::invalid_argument("woodham_solve: intensity/light count mismatch");
    if (lights.size() < 3)
        throw std::invalid_argument("degenerate light configuration: fewer than 3 lights");

    // Normal equations of rows e_i * l_i^T against b_i = I_i.
    double ata[3][3] = {};
    Vec3d atb;
    for (std::size_t i = 0; i < lights.size(); ++i) {
        const Vec3d row = lights[i].direction * lights[i].intensity;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) ata[r][c] += row[r] * row[c];
            atb[r] += row[r] * intensities[i];
        }
    }
    const Vec3d g = solve3(ata, atb);
    const double len = norm(g);
    if (len == 0) throw std::domain_error("woodham_solve: zero response");
    return {g / len, len * kPi};
}

PsSolution shadow_trimmed_solve(std::span<const double> intensities,
                                std::span<const LightSource> lights, double trim_fraction) {
    if (intensities.size() != lights.size())
        throw std::invalid_argument("shadow_trimmed_solve: intensity/light count mismatch");
    if (trim_fraction < 0 || trim_fraction >= 1)
        throw std::invalid_argument("shadow_trimmed_solve: trim fraction must be in [0,1)");
    const std::size_t n = intensities.size();
    const std::size_t drop = static_cast<std::size_t>(std::floor(trim_fraction * n));
    if (n - drop < 3)
        throw std::invalid_argument("degenerate light configuration: fewer than 3 lights after trim");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return intensities[a] / lights[a].intensity < intensities[b] / lights[b].intensity;
    });
    std::vector<bool> dropped(n, false);
    for (std::size_t k = 0; k < drop; ++k) dropped[order[k]] = true;
    // Retained observations keep their original order, so trim 0 reproduces
    // the plain solve exactly.
    std::vector<double> keep_i;
    std::vector<LightSource> keep_l;
    for (std::size_t k = 0; k < n; ++k) {
        if (dropped[k]) continue;
        keep_i.push_back(intensities[k]);
        keep_l.push_back(lights[k]);
    }
    return woodham_solve(keep_i, keep_l);
}

void write_normal_map(const std::string& path, const NormalMap& nmap) {
    write_pfm(path, nmap.normals);
}

NormalMap read_normal_map(const std::string& path) {
    NormalMap nmap;
    nmap.normals = read_pfm(path);
    if (nmap.normals.channels != 3) throw std::runtime_error(path + ": normal map must have 3 channels");
    nmap.width = nmap.normals.width;
    nmap.height = nmap.normals.height;
    nmap.valid.assign(nmap.normals.pixel_count(), 0);
    for (std::size_t p = 0; p < nmap.valid.size(); ++p) {
        const float* n = nmap.normals.data.data() + p * 3;
        nmap.valid[p] = (n[0] != 0.0f || n[1] != 0.0f || n[2] != 0.0f) ? 1 : 0;
    }
    return nmap;
}

namespace {

// Regressor forward for a batch of flattened maps (m x in_dim). Returns raw
// (unnormalized) 3-vectors; caches hidden activations when requested.
void regressor_forward(const PsRegressorParams& p, const float* maps, int m, float* out,
                       std::vector<float>* h1_cache, std::vector<float>* h2_cache) {
    const int in_dim = p.map_size * p.map_size;
    const int h = p.hidden;
    std::vector<float> local1, local2;
    std::vector<float>& h1 = h1_cache ? *h1_cache : local1;
    std::vector<float>& h2 = h2_cache ? *h2_cache : local2;
    h1.resize(static_cast<std::size_t>(m) * h);
    h2.resize(static_cast<std::size_t>(m) * h);

    const float* v = p.values.data();
    kern::gemm(maps, v + p.w1(), h1.data(), m, h, in_dim, false);
    kern::add_bias_rows(h1.data(), v + p.b1(), m, h);
    kern::relu(h1.data(), h1.size());
    kern::gemm(h1.data(), v + p.w2(), h2.data(), m, h, h, false);
    kern::add_bias_rows(h2.data(), v + p.b2(), m, h);
    kern::relu(h2.data(), h2.size());
    kern::gemm(h2.data(), v + p.w3(), out, m, 3, h, false);
    kern::add_bias_rows(out, v + p.b3(), m, 3);
}

double mean_intensity(const ImageF& img, int x, int y) {
    const float* px = img.px(x, y);
    return (static_cast<double>(px[0]) + px[1] + px[2]) / 3.0;
}

}  // namespace

PsRegressorParams train_ps_regressor(const SceneBundle& bundle, const PsTrainConfig& cfg) {
    if (!bundle.ground_truth)
        throw std::invalid_argument("train_ps_regressor: bundle has no ground-truth normals");
    if (cfg.epochs < 1 || cfg.batch < 1 || !(cfg.lr > 0))
        throw std::invalid_argument("train_ps_regressor: bad config");

    // Gather (observation map, GT normal) pairs over masked pixels.
    const int w = cfg.map_size;
    const int in_dim = w * w;
    std::vector<float> maps;
    std::vector<float> targets;
    std::size_t count = 0;
    for (std::size_t v = 0; v < bundle.views.size(); ++v) {
        const ViewRecord& view = bundle.views[v];
        if (view.lights.size() < 3)
            throw std::invalid_argument("train_ps_regressor: views need >= 3 lights");
        const ImageF& gt_n = bundle.ground_truth->normals[v];
        std::vector<double> intensities(view.lights.size());
        for (int y = 0; y < view.intrinsics.height; ++y) {
            for (int x = 0; x < view.intrinsics.width; ++x) {
                const std::size_t pix = static_cast<std::size_t>(y) * view.intrinsics.width + x;
                if (!view.mask[pix]) continue;
                const float* n = gt_n.px(x, y);
                if (n[0] == 0 && n[1] == 0 && n[2] == 0) continue;
                for (std::size_t i = 0; i < view.lights.size(); ++i)
                    intensities[i] = mean_intensity(view.images[i], x, y);
                const ObservationMap map = build_observation_map(intensities, view.lights, w);
                for (double cell : map.grid) maps.push_back(static_cast<float>(cell));
                targets.push_back(n[0]);
                targets.push_back(n[1]);
                targets.push_back(n[2]);
                ++count;
                if (cfg.max_pixels > 0 && count >= static_cast<std::size_t>(cfg.max_pixels)) break;
            }
            if (cfg.max_pixels > 0 && count >= static_cast<std::size_t>(cfg.max_pixels)) break;
        }
        if (cfg.max_pixels > 0 && count >= static_cast<std::size_t>(cfg.max_pixels)) break;
    }
    if (count == 0) throw std::invalid_argument("train_ps_regressor: no valid pixels");

    PsRegressorParams params;
    params.map_size = w;
    params.hidden = cfg.hidden;
    params.seed = cfg.seed;
    params.values.assign(params.total(), 0.0f);
    {
        // Fan-in scaled uniform init, matching the field networks.
        struct BlockRef { std::size_t off, count; int fan_in; };
        const BlockRef blocks[3] = {
            {params.w1(), static_cast<std::size_t>(in_dim) * cfg.hidden, in_dim},
            {params.w2(), static_cast<std::size_t>(cfg.hidden) * cfg.hidden, cfg.hidden},
            {params.w3(), static_cast<std::size_t>(cfg.hidden) * 3, cfg.hidden}};
        for (int b = 0; b < 3; ++b) {
            Rng rng(cfg.seed, 0x70737265ull, static_cast<std::uint64_t>(b));
            const float s = 1.0f / std::sqrt(static_cast<float>(blocks[b].fan_in));
            for (std::size_t i = 0; i < blocks[b].count; ++i)
                params.values[blocks[b].off + i] = static_cast<float>(rng.uniform(-1.0, 1.0)) * s;
        }
    }

    AdamState<float> state;
    state.init(params.values.size());
    AdamConfig adam;
    adam.lr = cfg.lr;

    const int h = cfg.hidden;
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), 0);
    std::vector<float> batch_in, batch_tgt, out, h1, h2, grads;
    std::vector<float> d_out, d_h2, d_h1, scratch;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(cfg.seed, 0x73687566ull, static_cast<std::uint64_t>(epoch));
        for (std::size_t i = count; i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        double epoch_loss = 0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < count; start += cfg.batch) {
            const int m = static_cast<int>(std::min<std::size_t>(cfg.batch, count - start));
            batch_in.resize(static_cast<std::size_t>(m) * in_dim);
            batch_tgt.resize(static_cast<std::size_t>(m) * 3);
            for (int r = 0; r < m; ++r) {
                const std::size_t idx = order[start + r];
                std::memcpy(batch_in.data() + static_cast<std::size_t>(r) * in_dim,
                            maps.data() + idx * in_dim, sizeof(float) * in_dim);
                std::memcpy(batch_tgt.data() + static_cast<std::size_t>(r) * 3,
                            targets.data() + idx * 3, sizeof(float) * 3);
            }
            out.resize(static_cast<std::size_t>(m) * 3);
            regressor_forward(params, batch_in.data(), m, out.data(), &h1, &h2);

            // MSE over the batch.
            d_out.resize(out.size());
            double loss = 0;
            const float inv = 1.0f / (m * 3);
            for (std::size_t i = 0; i < out.size(); ++i) {
                const float diff = out[i] - batch_tgt[i];
                loss += static_cast<double>(diff) * diff;
                d_out[i] = 2.0f * diff * inv;
            }
            epoch_loss += loss / (m * 3);
            ++steps;

            grads.assign(params.values.size(), 0.0f);
            float* g = grads.data();
            const float* v = params.values.data();
            // layer 3
            scratch.resize(static_cast<std::size_t>(h) * m);
            kern::transpose(h2.data(), scratch.data(), m, h);
            kern::gemm(scratch.data(), d_out.data(), g + params.w3(), h, 3, m, true);
            kern::col_sums(d_out.data(), g + params.b3(), m, 3, true);
            d_h2.resize(static_cast<std::size_t>(m) * h);
            {
                std::vector<float> w3t(static_cast<std::size_t>(h) * 3);
                kern::transpose(v + params.w3(), w3t.data(), h, 3);
                kern::gemm(d_out.data(), w3t.data(), d_h2.data(), m, h, 3, false);
            }
            kern::relu_mask_backward(d_h2.data(), h2.data(), d_h2.size());
            // layer 2
            kern::transpose(h1.data(), scratch.data(), m, h);
            kern::gemm(scratch.data(), d_h2.data(), g + params.w2(), h, h, m, true);
            kern::col_sums(d_h2.data(), g + params.b2(), m, h, true);
            d_h1.resize(static_cast<std::size_t>(m) * h);
            {
                std::vector<float> w2t(static_cast<std::size_t>(h) * h);
                kern::transpose(v + params.w2(), w2t.data(), h, h);
                kern::gemm(d_h2.data(), w2t.data(), d_h1.data(), m, h, h, false);
            }
            kern::relu_mask_backward(d_h1.data(), h1.data(), d_h1.size());
            // layer 1
            scratch.resize(static_cast<std::size_t>(in_dim) * m);
            kern::transpose(batch_in.data(), scratch.data(), m, in_dim);
            kern::gemm(scratch.data(), d_h1.data(), g + params.w1(), in_dim, h, m, true);
            kern::col_sums(d_h1.data(), g + params.b1(), m, h, true);

            adam_step<float>(params.values, grads, state, adam, "ps_regressor");
        }
        params.loss_curve.push_back(epoch_loss / std::max<std::size_t>(1, steps));
    }
    params.epochs_trained = cfg.epochs;
    return params;
}

Vec3d predict_ps_regressor(const PsRegressorParams& params, const ObservationMap& map) {
    if (map.w != params.map_size)
        throw std::invalid_argument("predict_ps_regressor: map size mismatch");
    std::vector<float> in(map.grid.begin(), map.grid.end());
    float out[3];
    regressor_forward(params, in.data(), 1, out, nullptr, nullptr);
    const Vec3d n{out[0], out[1], out[2]};
    const double len = norm(n);
    return len > 0 ? n / len : Vec3d{0, 0, -1};
}

void save_ps_regressor(const std::string& path, const PsRegressorParams& params) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(path + ": cannot open for writing");
    const char magic[8] = {'N', 'R', 'F', 'P', 'S', 'R', 'G', '\0'};
    const std::uint32_t version = 1;
    f.write(magic, sizeof(magic));
    f.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::int32_t meta[2] = {params.map_size, params.hidden};
    f.write(reinterpret_cast<const char*>(meta), sizeof(meta));
    const std::uint64_t count = params.values.size();
    f.write(reinterpret_cast<const char*>(&count), sizeof(count));
    f.write(reinterpret_cast<const char*>(params.values.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (!f) throw std::runtime_error(path + ": write error");
}

PsRegressorParams load_ps_regressor(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(path + ": cannot open");
    char magic[8];
    if (!f.read(magic, sizeof(magic)) || std::memcmp(magic, "NRFPSRG\0", 8) != 0)
        throw std::runtime_error(path + ": not a regressor file");
    std::uint32_t version;
    if (!f.read(reinterpret_cast<char*>(&version), sizeof(version)) || version != 1)
        throw std::runtime_error(path + ": unsupported regressor version");
    std::int32_t meta[2];
    if (!f.read(reinterpret_cast<char*>(meta), sizeof(meta)))
        throw std::runtime_error(path + ": truncated regressor header");
    PsRegressorParams params;
    params.map_size = meta[0];
    params.hidden = meta[1];
    std::uint64_t count;
    if (!f.read(reinterpret_cast<char*>(&count), sizeof(count)) || count != params.total())
        throw std::runtime_error(path + ": regressor size mismatch");
    params.values.resize(count);
    if (!f.read(reinterpret_cast<char*>(params.values.data()),
                static_cast<std::streamsize>(count * sizeof(float))))
        throw std::runtime_error(path + ": truncated regressor weights");
    return params;
}

Vec3d rotation_averaged_predict(const PsPredictor& predict,
                                std::span<const double> intensities,
                                std::span<const LightSource> lights, int rotations,
                                bool* fell_back) {
    if (rotations < 1) throw std::invalid_argument("rotation_averaged_predict: rotations must be >= 1");
    if (fell_back) *fell_back = false;
    Vec3d sum{};
    std::vector<LightSource> rotated(lights.begin(), lights.end());
    for (int k = 0; k < rotations; ++k) {
        const double angle = 2.0 * kPi * k / rotations;
        const Mat3 rot = rot_z(angle);
        for (std::size_t i = 0; i < lights.size(); ++i)
            rotated[i].direction = rot * lights[i].direction;
        const Vec3d n = predict(intensities, rotated);
        sum += rot_z(-angle) * n;
    }
    const double len = norm(sum);
    if (len < 1e-12) {
        if (fell_back) *fell_back = true;
        return predict(intensities, lights);
    }
    return sum / len;
}

PsMethod ps_method_from_name(const std::string& name) {
    if (name == "woodham") return PsMethod::woodham;
    if (name == "trimmed") return PsMethod::trimmed;
    if (name == "regressor") return PsMethod::regressor;
    throw std::invalid_argument("unknown PS method: " + name);
}

const char* ps_method_name(PsMethod m) {
    switch (m) {
        case PsMethod::woodham: return "woodham";
        case PsMethod::trimmed: return "trimmed";
        case PsMethod::regressor: return "regressor";
    }
    return "woodham";
}

NormalMap estimate_normal_map(const SceneBundle& bundle, int view_index,
                              const NormalEstimateOptions& opts) {
    if (view_index < 0 || view_index >= static_cast<int>(bundle.views.size()))
        throw std::invalid_argument("estimate_normal_map: view index out of range");
    if (opts.method == PsMethod::regressor && opts.regressor == nullptr)
        throw std::invalid_argument("estimate_normal_map: regressor method needs trained parameters");

    const ViewRecord& view = bundle.views[view_index];
    const int w = view.intrinsics.width, h = view.intrinsics.height;
    NormalMap nmap;
    nmap.width = w;
    nmap.height = h;
    nmap.normals = ImageF(w, h, 3);
    nmap.valid.assign(static_cast<std::size_t>(w) * h, 0);

    PsPredictor regressor_predict;
    if (opts.method == PsMethod::regressor) {
        const PsRegressorParams* reg = opts.regressor;
        regressor_predict = [reg](std::span<const double> I, std::span<const LightSource> L) {
            return predict_ps_regressor(*reg, build_observation_map(I, L, reg->map_size));
        };
    }

    parallel_chunks(static_cast<std::size_t>(w) * h, 512,
                    [&](std::size_t, std::size_t p0, std::size_t p1) {
        std::vector<double> intensities(view.lights.size());
        for (std::size_t pix = p0; pix < p1; ++pix) {
            if (!view.mask[pix]) continue;
            const int x = static_cast<int>(pix % w);
            const int y = static_cast<int>(pix / w);
            double max_i = 0;
            for (std::size_t i = 0; i < view.lights.size(); ++i) {
                intensities[i] = mean_intensity(view.images[i], x, y);
                max_i = std::max(max_i, intensities[i]);
            }
            if (max_i <= 0) continue;  // all-shadow pixel stays invalid
            try {
                Vec3d n;
                switch (opts.method) {
                    case PsMethod::woodham:
                        n = woodham_solve(intensities, view.lights).normal;
                        break;
                    case PsMethod::trimmed:
                        n = shadow_trimmed_solve(intensities, view.lights, opts.trim_fraction).normal;
                        break;
                    case PsMethod::regressor:
                        n = rotation_averaged_predict(regressor_predict, intensities, view.lights,
                                                      opts.rotations);
                        break;
                }
                nmap.normals.at(x, y, 0) = static_cast<float>(n.x);
                nmap.normals.at(x, y, 1) = static_cast<float>(n.y);
                nmap.normals.at(x, y, 2) = static_cast<float>(n.z);
                nmap.valid[pix] = 1;
            } catch (const std::exception&) {
                // per-pixel failure: leave invalid
            }
        }
    });
    return nmap;
}

}  // namespace nrf
