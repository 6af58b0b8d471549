#pragma once

#include "nrf/geometry.hpp"
#include "nrf/neural_field.hpp"
#include "nrf/rng.hpp"

#include <span>
#include <vector>

namespace nrf {

// Sorted sample positions along a ray plus inter-sample distances. The last
// delta closes the interval: deltas.back() = t_far - ts.back(), which keeps
// sum(weights) + final transmittance == 1 testable.
template <typename T>
struct RaySamples {
    T t_near = 0, t_far = 0;
    std::vector<T> ts;
    std::vector<T> deltas;

    void rebuild_deltas();
};

// One uniform draw per stratum of [t_near, t_far]; sorted by construction.
template <typename T>
RaySamples<T> stratified_sample(T t_near, T t_far, int n, Rng& rng);

template <typename T>
struct RenderOutput {
    Vec3<T> color{};
    std::vector<T> weights;     // T_i * alpha_i
    T transmittance = 1;        // after the last sample
    T expected_depth = 0;       // sum w_i t_i
};

// Front-to-back quadrature: alpha_i = 1 - exp(-sigma_i * delta_i),
// T_1 = 1, T_{i+1} = T_i (1 - alpha_i). Throws on negative sigma.
template <typename T>
RenderOutput<T> composite(std::span<const T> sigmas, const T* colors /* n x 3 */,
                          const RaySamples<T>& samples);

// d(loss)/d(sigma_i), d(loss)/d(color_i) given d(loss)/d(composited color).
template <typename T>
void composite_backward(std::span<const T> sigmas, const T* colors, const RaySamples<T>& samples,
                        const Vec3<T>& dcolor, T* dsigmas, T* dcolors);

// Inverse-transform draws from the normalized coarse weights (piecewise
// constant over the coarse bins). Zero total weight falls back to uniform
// draws over [t_near, t_far] and sets *fell_back. Returned sorted.
template <typename T>
std::vector<T> hierarchical_resample(std::span<const T> weights, const RaySamples<T>& coarse,
                                     int n_fine, Rng& rng, bool* fell_back = nullptr);

// Sorted union of coarse and fine positions.
template <typename T>
RaySamples<T> merge_samples(const RaySamples<T>& coarse, std::span<const T> fine_ts);

struct RenderConfig {
    int n_coarse = 64;
    int n_fine = 128;
};

template <typename T>
struct RayRender {
    Vec3<T> color_coarse{};
    Vec3<T> color_fine{};
    RenderOutput<T> out_coarse;
    RenderOutput<T> out_fine;
    RaySamples<T> fine_samples;
    bool resample_fallback = false;
};

// Full two-pass render of one ray. The per-ray PS normal (world frame, or
// the zero vector for background rays) conditions every sample; the fine
// network is evaluated on the sorted union of coarse and fine samples.
template <typename T>
RayRender<T> render_ray(const FieldParamsT<T>& coarse, const FieldParamsT<T>& fine, const Ray& ray,
                        const Vec3d& n_ps_world, const RenderConfig& cfg, Rng& rng);

// Encoding helpers shared by the renderer and trainer: fills per-sample rows.
template <typename T>
void encode_positions(const Ray& ray, std::span<const T> ts, int l_pos, T* out_rows);

}  // namespace nrf
