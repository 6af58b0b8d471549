#include "nrf/geometry.hpp"

#include <cmath>
#include <string>

namespace nrf {

void CameraIntrinsics::validate() const {
    if (!(fx > 0) || !(fy > 0)) throw std::invalid_argument("intrinsics: focal lengths must be positive");
    if (width <= 0 || height <= 0) throw std::invalid_argument("intrinsics: image size must be positive");
    if (!(cx >= 0 && cx < width) || !(cy >= 0 && cy < height))
        throw std::invalid_argument("intrinsics: principal point outside image");
}

void Pose::validate(double tol) const {
    const Mat3 rtr = rotation.transposed() * rotation;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            const double want = i == j ? 1.0 : 0.0;
            if (std::abs(rtr(i, j) - want) > tol)
                throw std::invalid_argument("pose: rotation is not orthonormal");
        }
    if (std::abs(rotation.det() - 1.0) > tol)
        throw std::invalid_argument("pose: rotation determinant is not +1");
}

Ray pixel_ray(const CameraIntrinsics& intr, const Pose& pose, PixelCoord px,
              double t_near, double t_far) {
    if (!(px.x >= 0 && px.x < intr.width && px.y >= 0 && px.y < intr.height))
        throw std::invalid_argument("pixel_ray: pixel (" + std::to_string(px.x) + ", " +
                                    std::to_string(px.y) + ") outside image bounds");
    const Vec3d d_cam = normalized(Vec3d{(px.x - intr.cx) / intr.fx, (px.y - intr.cy) / intr.fy, 1.0});
    return Ray{pose.translation, pose.to_world_dir(d_cam), t_near, t_far};
}

PixelCoord project_point(const CameraIntrinsics& intr, const Pose& pose, const Vec3d& p_world) {
    const Vec3d p = pose.to_camera_point(p_world);
    if (!(p.z > 0)) throw std::domain_error("project_point: point not in front of camera");
    return {intr.fx * p.x / p.z + intr.cx, intr.fy * p.y / p.z + intr.cy};
}

Vec3d camera_normal_to_world(const Pose& pose, const Vec3d& n_cam) {
    if (std::abs(norm(n_cam) - 1.0) > 1e-6)
        throw std::invalid_argument("camera_normal_to_world: input normal is not unit length");
    return pose.to_world_dir(n_cam);
}

Pose look_at(const Vec3d& eye, const Vec3d& target, const Vec3d& world_up) {
    const Vec3d z = normalized(target - eye);
    Vec3d down = -world_up - z * dot(-world_up, z);
    if (norm(down) < 1e-12) {
        // Looking straight along world_up; pick an arbitrary consistent roll.
        const Vec3d alt = std::abs(z.x) < 0.9 ? Vec3d{1, 0, 0} : Vec3d{0, 0, 1};
        down = alt - z * dot(alt, z);
    }
    const Vec3d y = normalized(down);
    const Vec3d x = cross(y, z);
    return Pose{Mat3::from_cols(x, y, z), eye};
}

}  // namespace nrf
