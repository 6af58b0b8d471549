#pragma once

#include "nrf/neural_field.hpp"
#include "nrf/optim.hpp"
#include "nrf/photometric_stereo.hpp"
#include "nrf/scene_data.hpp"
#include "nrf/volume_renderer.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace nrf {

struct TrainConfig {
    int batch_rays = 1024;
    int epochs = 30;
    int max_steps = 0;        // 0 = run epochs * steps_per_epoch
    AdamConfig adam{1e-4, 0.9, 0.999, 1e-8};
    bool lr_decay = false;    // optional exponential decay to 0.1x over the run
    int n_coarse = 64;
    int n_fine = 128;
    std::uint64_t seed = 0;
    bool use_view_dir = true;
    bool use_normals = true;
    double object_fraction = 0.5;  // fraction of each batch from mask=1 pixels
    int light_index = 4;           // target image per view
    std::vector<int> per_view_lights;  // overrides light_index when non-empty
    std::vector<int> train_views;      // empty = all views
    EncodingConfig enc;
    int trunk_layers = 8;
    int trunk_width = 256;
    std::string checkpoint_dir;  // when set, per-epoch checkpoints + final
    std::string log_path;        // when set, CSV (step, losses, psnr)

    void validate() const;
};

// Eq-10-style per-ray term: squared error of both heads against the target.
double mvps_loss(const Vec3d& color_coarse, const Vec3d& color_fine, const Vec3d& target);

// view -> image index used for target colors. Throws on out-of-range indices.
std::vector<int> select_training_light(const SceneBundle& bundle, int index);
std::vector<int> select_training_light(const SceneBundle& bundle, std::span<const int> per_view);

struct TrainRay {
    Ray ray;
    Vec3d n_ps_world;   // zero vector for background rays
    Vec3f target;
    bool background = false;
};

// Deterministic batch draw for one step: object rays from valid-normal mask
// pixels, the rest from background, uniformly over the training views' pixel
// pools. Throws when an object fraction is requested but no masked pixel has
// a valid normal.
std::vector<TrainRay> sample_ray_batch(const SceneBundle& bundle,
                                       std::span<const NormalMap> normal_maps,
                                       const TrainConfig& cfg, std::uint64_t step);

// Optional fixed sample positions (gradient tests freeze these so finite
// differences see a deterministic loss).
template <typename T>
struct FrozenRaySamples {
    std::vector<RaySamples<T>> coarse;
    std::vector<std::vector<T>> fine;
};

template <typename T>
struct BatchStats {
    double loss = 0;         // summed over rays (both heads)
    double loss_coarse = 0;  // summed over rays
    double loss_fine = 0;
    int rays = 0;
};

// Renders a span of rays through both networks, accumulates the batch loss,
// and (when grad pointers are given) accumulates exact parameter gradients.
// Random streams are keyed by (seed, step, ray_index_offset + i); sample
// positions are treated as constants by the backward pass.
template <typename T>
BatchStats<T> render_batch(const FieldParamsT<T>& coarse, const FieldParamsT<T>& fine,
                           std::span<const TrainRay> rays, const RenderConfig& rc,
                           std::uint64_t seed, std::uint64_t step, std::size_t ray_index_offset,
                           const FrozenRaySamples<T>* frozen, T* grad_coarse, T* grad_fine);

struct TrainLogRow {
    int step = 0;
    double loss_coarse = 0;  // per-ray averages
    double loss_fine = 0;
    double psnr_train = 0;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<TrainLogRow> log;
    bool diverged = false;
    int steps_run = 0;
};

TrainResult train(const SceneBundle& bundle, std::span<const NormalMap> normal_maps,
                  const TrainConfig& cfg);

void write_train_log(const std::string& path, std::span<const TrainLogRow> log);

}  // namespace nrf
