#pragma once

#include "nrf/geometry.hpp"
#include "nrf/image.hpp"
#include "nrf/mesh.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace nrf {

// Direction points from the surface toward the light, expressed in the
// owning view's camera frame (+z forward, so lights near the camera have
// negative z). Directional model: no falloff.
struct LightSource {
    Vec3d direction;
    double intensity = 1.0;

    void validate(const std::string& where) const;
};

struct ViewRecord {
    CameraIntrinsics intrinsics;
    Pose pose;                         // camera-to-world
    std::vector<LightSource> lights;
    std::vector<ImageF> images;        // one 3-channel linear image per light
    MaskImage mask;                    // 1 = object pixel

    void validate(const std::string& where) const;
};

// Per-view ground truth from the generator. Normal maps are camera-frame
// unit vectors pointing toward the camera ((0,0,0) marks off-object pixels);
// depth maps hold camera-frame z with +inf off the object.
struct GroundTruth {
    std::vector<ImageF> normals;
    std::vector<ImageF> depths;
    Mesh mesh;
};

struct SceneBundle {
    std::string name = "scene";
    Box3 bounds;
    double world_scale = 1.0;   // scale applied when normalizing into bounds
    std::vector<ViewRecord> views;
    std::optional<GroundTruth> ground_truth;

    void validate() const;
};

enum class ShapeKind { sphere, torus, blend };

const char* shape_name(ShapeKind k);
ShapeKind shape_from_name(const std::string& name);

struct SyntheticSceneConfig {
    ShapeKind shape = ShapeKind::sphere;
    double sphere_radius = 0.5;
    double torus_major = 0.35;
    double torus_minor = 0.15;

    double albedo = 0.8;
    bool checker_albedo = false;
    double checker_scale = 6.0;
    double specular_strength = 0.0;   // Blinn-Phong, 0 disables
    double specular_exponent = 32.0;

    int n_views = 8;
    int n_lights = 16;
    int image_size = 64;
    double light_intensity = 1.0;
    double light_ring_deg = 30.0;     // cone half-angle of the light ring
    double camera_distance = 2.2;
    double camera_elevation_deg = 12.0;  // alternates +/- across views
    double focal_px = 0.0;            // 0 = auto-fit the object

    double noise_std = 0.0;
    bool cast_shadows = false;        // attached shadows only by default
    std::uint64_t seed = 0;
    int gt_mesh_res = 128;

    void validate() const;
};

SceneBundle generate_synthetic_scene(const SyntheticSceneConfig& cfg);

// Bundle directory layout:
//   manifest.json
//   view_{v:03}/img_{i:03}.pfm, view_{v:03}/mask.png
//   gt/normal_{v:03}.pfm, gt/depth_{v:03}.pfm, gt/mesh.ply (optional)
void save_bundle(const SceneBundle& bundle, const std::string& dir);
SceneBundle load_bundle(const std::string& dir);

}  // namespace nrf
