#pragma once

#include "nrf/image.hpp"
#include "nrf/mesh.hpp"
#include "nrf/neural_field.hpp"
#include "nrf/photometric_stereo.hpp"
#include "nrf/scene_data.hpp"
#include "nrf/volume_renderer.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace nrf {

// Full-image render of one view. Per-pixel PS normals (world-converted)
// condition the rays; invalid/background pixels use the zero normal.
ImageF render_view(const Checkpoint& ckpt, const ViewRecord& view, const NormalMap& nmap,
                   const Box3& bounds, const RenderConfig& cfg, std::uint64_t seed);

// 10 log10(peak^2 / MSE), capped at 99 dB for identical images.
double psnr(const ImageF& a, const ImageF& b, double peak = 1.0);

// Uniform-by-area point samples of a mesh surface; deterministic in seed.
std::vector<Vec3d> sample_mesh_points(const Mesh& mesh, int n_points, std::uint64_t seed);

// Symmetric mean nearest-neighbor distance between area-uniform samples of
// the two surfaces (both sampled with the same seed). No registration.
double chamfer_l1(const Mesh& a, const Mesh& b, int n_points = 100000, std::uint64_t seed = 0);

// Ray-cast depth maps (camera-frame z). The field path uses expected depth
// sum(w_i t_i); the mesh path intersects triangles through a BVH.
DepthMap projected_depth(const Checkpoint& ckpt, const ViewRecord& view, const NormalMap& nmap,
                         const Box3& bounds, const RenderConfig& cfg, std::uint64_t seed);
DepthMap projected_depth(const Mesh& mesh, const ViewRecord& view);

// Mean absolute difference after each map is affinely rescaled to [-1,1]
// over the jointly valid pixels.
double depth_l1(const DepthMap& pred, const DepthMap& gt, const MaskImage& mask);

struct AngularErrorStats {
    double mean_deg = 0;
    double median_deg = 0;
    std::size_t count = 0;
};

AngularErrorStats angular_error(const NormalMap& pred, const NormalMap& gt);

// Per-pixel angular error table: x, y, error_degrees.
void write_angular_error_csv(const std::string& path, const NormalMap& pred, const NormalMap& gt);

// Flat metric report; keys are emitted in sorted order.
void write_report_json(const std::string& path, const std::map<std::string, double>& metrics);

void write_per_view_csv(const std::string& path, const std::string& metric,
                        const std::vector<double>& values);

}  // namespace nrf
