#include "nrf/parallel.hpp"
#include "nrf/rng.hpp"
#include "nrf/scene_data.hpp"
#include "nrf/surface_extraction.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace nrf {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Sdf {
    ShapeKind kind;
    double sphere_r;
    double torus_major, torus_minor;

    double value(const Vec3d& p) const {
        switch (kind) {
            case ShapeKind::sphere:
                return norm(p) - sphere_r;
            case ShapeKind::torus:
                return torus_value(p);
            case ShapeKind::blend: {
                // Sphere sunk into a torus, polynomially blended.
                const double a = norm(p - blend_sphere_center()) - blend_sphere_radius();
                const double b = torus_value(p);
                const double h = blend_h(a, b);
                return b * (1 - h) + a * h - blend_k() * h * (1 - h);
            }
        }
        return 0;
    }

    Vec3d gradient(const Vec3d& p) const {
        switch (kind) {
            case ShapeKind::sphere: {
                const double n = norm(p);
                return n > 0 ? p / n : Vec3d{0, 0, 1};
            }
            case ShapeKind::torus:
                return torus_gradient(p);
            case ShapeKind::blend: {
                const Vec3d pc = p - blend_sphere_center();
                const double npc = norm(pc);
                const double a = npc - blend_sphere_radius();
                const double b = torus_value(p);
                const Vec3d ga = npc > 0 ? pc / npc : Vec3d{0, 0, 1};
                const Vec3d gb = torus_gradient(p);
                // d(smin)/dp reduces to the blend of the two gradients; the
                // h-derivative terms cancel exactly for the polynomial smin.
                const double h = blend_h(a, b);
                return gb * (1 - h) + ga * h;
            }
        }
        return {0, 0, 1};
    }

    double bounding_radius() const {
        switch (kind) {
            case ShapeKind::sphere: return sphere_r;
            case ShapeKind::torus: return torus_major + torus_minor;
            case ShapeKind::blend:
                return std::max(torus_major + torus_minor,
                                norm(blend_sphere_center()) + blend_sphere_radius() + blend_k());
        }
        return 1;
    }

private:
    double torus_value(const Vec3d& p) const {
        const double s = std::sqrt(p.x * p.x + p.z * p.z);
        const double q = s - torus_major;
        return std::sqrt(q * q + p.y * p.y) - torus_minor;
    }

    Vec3d torus_gradient(const Vec3d& p) const {
        const double s = std::sqrt(p.x * p.x + p.z * p.z);
        const double q = s - torus_major;
        const double d2 = std::sqrt(q * q + p.y * p.y);
        if (d2 < 1e-12) return {0, 1, 0};
        const double qs = s > 1e-12 ? q / (d2 * s) : 0.0;
        return {p.x * qs, p.y / d2, p.z * qs};
    }

    Vec3d blend_sphere_center() const { return {0.0, -0.55 * torus_minor - 0.12, 0.0}; }
    double blend_sphere_radius() const { return 0.62 * torus_major; }
    static double blend_k() { return 0.12; }
    static double blend_h(double a, double b) {
        double h = 0.5 + 0.5 * (b - a) / blend_k();
        return h < 0 ? 0 : (h > 1 ? 1 : h);
    }
};

struct Hit {
    bool valid = false;
    double t = 0;
    Vec3d point;
    Vec3d normal;  // world frame, outward
};

Hit intersect(const Sdf& sdf, const Vec3d& origin, const Vec3d& dir, double t_max) {
    Hit hit;
    if (sdf.kind == ShapeKind::sphere) {
        // Closed form keeps ground truth exact to rounding.
        const double b = dot(origin, dir);
        const double c = dot(origin, origin) - sdf.sphere_r * sdf.sphere_r;
        const double disc = b * b - c;
        if (disc < 0) return hit;
        const double sq = std::sqrt(disc);
        double t = -b - sq;
        if (t < 0) t = -b + sq;
        if (t < 0 || t > t_max) return hit;
        hit.valid = true;
        hit.t = t;
        hit.point = origin + dir * t;
        hit.normal = sdf.gradient(hit.point);
        return hit;
    }
    double t = 0;
    for (int step = 0; step < 2048; ++step) {
        const Vec3d p = origin + dir * t;
        const double d = sdf.value(p);
        if (d < 1e-9) {
            hit.valid = true;
            hit.t = t;
            hit.point = p;
            hit.normal = normalized(sdf.gradient(p));
            return hit;
        }
        t += d;
        if (t > t_max) return hit;
    }
    return hit;
}

Vec3d albedo_at(const SyntheticSceneConfig& cfg, const Vec3d& p) {
    if (!cfg.checker_albedo) return {cfg.albedo, cfg.albedo, cfg.albedo};
    const double s = cfg.checker_scale;
    const long long parity = static_cast<long long>(std::floor(p.x * s)) +
                             static_cast<long long>(std::floor(p.y * s)) +
                             static_cast<long long>(std::floor(p.z * s));
    const bool odd = parity & 1;
    const Vec3d tone = odd ? Vec3d{1.15, 0.75, 0.55} : Vec3d{0.55, 0.8, 1.15};
    return tone * cfg.albedo;
}

}  // namespace

SceneBundle generate_synthetic_scene(const SyntheticSceneConfig& cfg) {
    cfg.validate();

    const Sdf sdf{cfg.shape, cfg.sphere_radius, cfg.torus_major, cfg.torus_minor};
    const double obj_radius = sdf.bounding_radius();
    if (cfg.camera_distance <= obj_radius)
        throw std::invalid_argument("synthetic config: camera inside the object bounding sphere");

    SceneBundle bundle;
    bundle.name = std::string("synthetic-") + shape_name(cfg.shape);
    const double half = obj_radius + 0.1;
    bundle.bounds = {{-half, -half, -half}, {half, half, half}};
    bundle.world_scale = 1.0;

    const int size = cfg.image_size;
    const double focal =
        cfg.focal_px > 0
            ? cfg.focal_px
            : 0.35 * size * std::sqrt(cfg.camera_distance * cfg.camera_distance - obj_radius * obj_radius) /
                  obj_radius;
    const double ring = cfg.light_ring_deg * kPi / 180.0;
    const double t_max = cfg.camera_distance + 2.0 * obj_radius;

    GroundTruth gt;
    for (int v = 0; v < cfg.n_views; ++v) {
        ViewRecord view;
        view.intrinsics = {focal, focal, size / 2.0, size / 2.0, size, size};

        const double az = 2.0 * kPi * v / cfg.n_views;
        const double el = (v % 2 == 0 ? 1.0 : -1.0) * cfg.camera_elevation_deg * kPi / 180.0;
        const Vec3d eye{cfg.camera_distance * std::cos(el) * std::sin(az),
                        -cfg.camera_distance * std::sin(el),
                        cfg.camera_distance * std::cos(el) * std::cos(az)};
        view.pose = look_at(eye, {0, 0, 0}, {0, -1, 0});

        // Lights ring around the optical axis, camera frame, pointing from
        // the surface back toward the rig (negative z).
        for (int i = 0; i < cfg.n_lights; ++i) {
            const double phi = 2.0 * kPi * i / cfg.n_lights;
            view.lights.push_back(LightSource{
                normalized(Vec3d{std::sin(ring) * std::cos(phi), std::sin(ring) * std::sin(phi),
                                 -std::cos(ring)}),
                cfg.light_intensity});
        }

        view.mask.assign(static_cast<std::size_t>(size) * size, 0);
        for (int i = 0; i < cfg.n_lights; ++i) view.images.emplace_back(size, size, 3);
        ImageF normal_map(size, size, 3);
        ImageF depth_map(size, size, 1);
        for (auto& d : depth_map.data) d = std::numeric_limits<float>::infinity();

        parallel_chunks(static_cast<std::size_t>(size) * size, 256,
                        [&](std::size_t, std::size_t p0, std::size_t p1) {
            for (std::size_t pix = p0; pix < p1; ++pix) {
                const int px = static_cast<int>(pix % size);
                const int py = static_cast<int>(pix / size);
                const Ray ray = pixel_ray(view.intrinsics, view.pose, {px + 0.5, py + 0.5}, 0, t_max);
                const Hit hit = intersect(sdf, ray.origin, ray.direction, t_max);
                if (!hit.valid) continue;

                view.mask[pix] = 1;
                const Vec3d n_cam = view.pose.to_camera_dir(hit.normal);
                const Vec3d p_cam = view.pose.to_camera_point(hit.point);
                normal_map.at(px, py, 0) = static_cast<float>(n_cam.x);
                normal_map.at(px, py, 1) = static_cast<float>(n_cam.y);
                normal_map.at(px, py, 2) = static_cast<float>(n_cam.z);
                depth_map.at(px, py, 0) = static_cast<float>(p_cam.z);

                const Vec3d rho = albedo_at(cfg, hit.point);
                const Vec3d view_dir = normalized(-p_cam);  // toward camera, camera frame
                for (int i = 0; i < cfg.n_lights; ++i) {
                    const LightSource& light = view.lights[i];
                    const double ndotl = dot(n_cam, light.direction);
                    double shadow = 1.0;
                    if (cfg.cast_shadows && ndotl > 0) {
                        const Vec3d l_world = view.pose.to_world_dir(light.direction);
                        const Hit occ = intersect(sdf, hit.point + hit.normal * 1e-4, l_world,
                                                  4.0 * obj_radius);
                        if (occ.valid) shadow = 0.0;
                    }
                    Vec3d value{0, 0, 0};
                    if (ndotl > 0 && shadow > 0) {
                        double phi_spec = 0.0;
                        if (cfg.specular_strength > 0) {
                            const Vec3d h = normalized(light.direction + view_dir);
                            const double ndoth = std::max(0.0, dot(n_cam, h));
                            phi_spec = cfg.specular_strength * std::pow(ndoth, cfg.specular_exponent);
                        }
                        value = (rho / kPi + Vec3d{phi_spec, phi_spec, phi_spec}) *
                                (light.intensity * ndotl);
                    }
                    if (cfg.noise_std > 0) {
                        Rng rng(cfg.seed, 0x6e6f6973ull, static_cast<std::uint64_t>(v), pix,
                                static_cast<std::uint64_t>(i));
                        const double eps = cfg.noise_std * rng.normal();
                        value += Vec3d{eps, eps, eps};
                    }
                    float* out = view.images[i].px(px, py);
                    out[0] = static_cast<float>(std::max(0.0, value.x));
                    out[1] = static_cast<float>(std::max(0.0, value.y));
                    out[2] = static_cast<float>(std::max(0.0, value.z));
                }
            }
        });

        gt.normals.push_back(std::move(normal_map));
        gt.depths.push_back(std::move(depth_map));
        bundle.views.push_back(std::move(view));
    }

    // Reference mesh from the signed distance itself (negated: inside > iso).
    const DensityGrid sdf_grid = make_grid(bundle.bounds, cfg.gt_mesh_res,
                                           [&](const Vec3d& p) { return -sdf.value(p); });
    gt.mesh = marching_cubes(sdf_grid, 0.0);

    bundle.ground_truth = std::move(gt);
    bundle.validate();
    return bundle;
}

}  // namespace nrf
