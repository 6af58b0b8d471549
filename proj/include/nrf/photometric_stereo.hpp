#pragma once

#include "nrf/image.hpp"
#include "nrf/scene_data.hpp"
#include "nrf/vec.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace nrf {

// Per-pixel light-space intensity grid. Cell (ix, iy) indexes the light's
// x-y direction projection; grid is stored ix-major. Entries live in [0,1]
// and the maximum written entry is 1 whenever any observation is positive.
struct ObservationMap {
    int w = 32;
    std::vector<double> grid;  // w*w, grid[ix * w + iy]

    double at(int ix, int iy) const { return grid[static_cast<std::size_t>(ix) * w + iy]; }
};

ObservationMap build_observation_map(std::span<const double> intensities,
                                     std::span<const LightSource> lights, int w);

struct PsSolution {
    Vec3d normal;   // unit
    double albedo;  // matches the generator's albedo/pi convention
};

// Least-squares inversion of the Lambertian shading model over all
// observations (shadowed ones included). Throws std::invalid_argument on
// degenerate light configurations and std::domain_error on zero response.
PsSolution woodham_solve(std::span<const double> intensities,
                         std::span<const LightSource> lights);

// Drops the darkest trim_fraction of observations (by I/e) before solving;
// reduces attached-shadow bias.
PsSolution shadow_trimmed_solve(std::span<const double> intensities,
                                std::span<const LightSource> lights, double trim_fraction);

struct NormalMap {
    int width = 0, height = 0;
    ImageF normals;    // 3 channels, camera frame; (0,0,0) where invalid
    MaskImage valid;

    Vec3d at(int x, int y) const {
        const float* n = normals.px(x, y);
        return {n[0], n[1], n[2]};
    }
};

// PFM round trip; validity is encoded by zero vectors.
void write_normal_map(const std::string& path, const NormalMap& nmap);
NormalMap read_normal_map(const std::string& path);

// Small fully-connected regressor (w*w -> hidden -> hidden -> 3) standing in
// for the full observation-map CNN at desk scale.
struct PsRegressorParams {
    int map_size = 32;
    int hidden = 256;
    std::vector<float> values;

    std::uint64_t seed = 0;
    int epochs_trained = 0;
    std::vector<double> loss_curve;  // per-epoch mean MSE

    std::size_t w1() const { return 0; }
    std::size_t b1() const { return w1() + static_cast<std::size_t>(map_size) * map_size * hidden; }
    std::size_t w2() const { return b1() + hidden; }
    std::size_t b2() const { return w2() + static_cast<std::size_t>(hidden) * hidden; }
    std::size_t w3() const { return b2() + hidden; }
    std::size_t b3() const { return w3() + static_cast<std::size_t>(hidden) * 3; }
    std::size_t total() const { return b3() + 3; }
};

struct PsTrainConfig {
    int epochs = 10;
    double lr = 1e-3;
    int batch = 256;
    std::uint64_t seed = 0;
    int map_size = 32;
    int hidden = 256;
    int max_pixels = 0;  // 0 = use every masked pixel
};

PsRegressorParams train_ps_regressor(const SceneBundle& bundle, const PsTrainConfig& cfg);

Vec3d predict_ps_regressor(const PsRegressorParams& params, const ObservationMap& map);

void save_ps_regressor(const std::string& path, const PsRegressorParams& params);
PsRegressorParams load_ps_regressor(const std::string& path);

// A predictor maps one pixel's observations to a camera-frame normal.
using PsPredictor =
    std::function<Vec3d(std::span<const double>, std::span<const LightSource>)>;

// Averages predictions over K rotations of the light x-y projections about
// the view axis, undoing each rotation on the predicted normal. Falls back
// to the unrotated prediction (and sets *fell_back) if the average vanishes.
Vec3d rotation_averaged_predict(const PsPredictor& predict,
                                std::span<const double> intensities,
                                std::span<const LightSource> lights, int rotations,
                                bool* fell_back = nullptr);

enum class PsMethod { woodham, trimmed, regressor };

PsMethod ps_method_from_name(const std::string& name);
const char* ps_method_name(PsMethod m);

struct NormalEstimateOptions {
    PsMethod method = PsMethod::woodham;
    double trim_fraction = 0.25;
    const PsRegressorParams* regressor = nullptr;  // required for PsMethod::regressor
    int rotations = 10;
};

// Per-pixel solve over mask=1 pixels; failures are marked invalid, not fatal.
NormalMap estimate_normal_map(const SceneBundle& bundle, int view_index,
                              const NormalEstimateOptions& opts);

struct DepthMap {
    int width = 0, height = 0;
    ImageF depth;      // 1 channel
    MaskImage valid;
};

void write_depth_map(const std::string& path, const DepthMap& dmap);

// Iterative relaxation of the discrete integrability residual of the
// gradients (p,q) = (-nx/nz, -ny/nz). Pixels with |nz| <= min_nz are
// excluded (reported through the returned valid mask). The result is
// mean-zero over the solved region; `spacing` is the world-unit step between
// adjacent pixels.
DepthMap integrate_normals_horn_brooks(const NormalMap& nmap, const MaskImage& mask,
                                       int iterations, double tolerance,
                                       double spacing = 1.0, double min_nz = 0.01);

// Affine rescale of the valid depths onto [-1, 1].
void rescale_depth_to_unit(DepthMap& dmap);

}  // namespace nrf
