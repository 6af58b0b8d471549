#pragma once

#include "nrf/vec.hpp"

#include <stdexcept>

namespace nrf {

// Camera convention used throughout: +z forward, +x right, +y down in pixel
// space. Poses are camera-to-world. Rays are generated through pixel centers;
// callers iterating integer pixels pass (i + 0.5, j + 0.5).

struct Box3 {
    Vec3d min;
    Vec3d max;

    Vec3d center() const { return (min + max) * 0.5; }
    Vec3d extent() const { return max - min; }
    double radius() const { return 0.5 * norm(extent()); }
    bool contains(const Vec3d& p, double tol = 0.0) const {
        return p.x >= min.x - tol && p.x <= max.x + tol && p.y >= min.y - tol &&
               p.y <= max.y + tol && p.z >= min.z - tol && p.z <= max.z + tol;
    }
    bool degenerate() const {
        return !(max.x > min.x) || !(max.y > min.y) || !(max.z > min.z);
    }
};

struct CameraIntrinsics {
    double fx = 0, fy = 0;
    double cx = 0, cy = 0;
    int width = 0, height = 0;

    void validate() const;
};

struct Pose {
    Mat3 rotation;       // camera-to-world
    Vec3d translation;   // camera origin in world units

    void validate(double tol = 1e-9) const;

    Vec3d to_world_point(const Vec3d& p_cam) const { return rotation * p_cam + translation; }
    Vec3d to_world_dir(const Vec3d& d_cam) const { return rotation * d_cam; }
    Vec3d to_camera_point(const Vec3d& p_world) const {
        return rotation.transposed() * (p_world - translation);
    }
    Vec3d to_camera_dir(const Vec3d& d_world) const { return rotation.transposed() * d_world; }
};

struct Ray {
    Vec3d origin;
    Vec3d direction;   // unit
    double t_near = 0;
    double t_far = 0;

    Vec3d at(double t) const { return origin + direction * t; }
};

struct PixelCoord {
    double x = 0, y = 0;
};

// Ray through a (continuous) pixel coordinate. Throws std::invalid_argument
// when px lies outside [0,width) x [0,height).
Ray pixel_ray(const CameraIntrinsics& intr, const Pose& pose, PixelCoord px,
              double t_near, double t_far);

// World point -> pixel coordinate in the same continuous convention.
// Throws std::domain_error for points at or behind the camera plane.
PixelCoord project_point(const CameraIntrinsics& intr, const Pose& pose, const Vec3d& p_world);

// Rotates a unit camera-frame normal into the world frame. Throws
// std::invalid_argument when the input norm deviates from 1 by more than 1e-6.
Vec3d camera_normal_to_world(const Pose& pose, const Vec3d& n_cam);

// Camera-to-world pose looking from `eye` toward `target`. `world_up` fixes
// the roll; pixel +y maps to -world_up.
Pose look_at(const Vec3d& eye, const Vec3d& target, const Vec3d& world_up);

}  // namespace nrf
