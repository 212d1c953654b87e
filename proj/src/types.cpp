// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

#include "conesplat/types.hpp"
#include "conesplat/sh.hpp"

#include <algorithm>

namespace conesplat {

Mat3 quaternion_to_rotation(const Vec4& q) {
    const Vec4 n = q.normalized();
    const double w = n[0], x = n[1], y = n[2], z = n[3];
    Mat3 r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

Mat3 covariance(const GaussianPrimitive& primitive) {
    const Mat3 m = quaternion_to_rotation(primitive.rotation) * primitive.scale().asDiagonal();
    return m * m.transpose();
}

GaussianPrimitive make_primitive(int sh_order) {
    if (sh_order < 0 || sh_order > 3) {
        throw DomainError("SH order must be in [0, 3]");
    }
    GaussianPrimitive p;
    p.sh.assign(static_cast<std::size_t>(3 * sh_coeff_count(sh_order)), 0.0);
    return p;
}

void set_dc_color(GaussianPrimitive& primitive, const Vec3& rgb) {
    std::fill(primitive.sh.begin(), primitive.sh.end(), 0.0);
    for (int c = 0; c < 3; ++c) {
        primitive.sh[static_cast<std::size_t>(c)] = (rgb[c] - 0.5) / kShC0;
    }
}

void Camera::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) {
        throw DomainError("camera focal lengths must be positive");
    }
    if (width <= 0 || height <= 0) {
        throw DomainError("camera image size must be positive");
    }
    if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
        throw DomainError("camera principal point outside the image");
    }
    const double err = (rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (!(err <= 1e-6)) {
        throw DomainError("camera rotation is not orthonormal");
    }
    if (!translation.allFinite()) {
        throw DomainError("camera translation is not finite");
    }
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
                       int width, int height) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 right = forward.cross(up);
    if (right.norm() < 1e-12) {
        right = forward.unitOrthogonal();
    }
    right.normalize();
    const Vec3 down = forward.cross(right);

    Camera cam;
    cam.fx = focal;
    cam.fy = focal;
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    cam.width = width;
    cam.height = height;
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = down.transpose();
    cam.rotation.row(2) = forward.transpose();
    cam.translation = -cam.rotation * eye;
    return cam;
}

namespace {

Vec3 camera_direction(const Camera& camera, double u, double v) {
    return Vec3((u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0).normalized();
}

} // namespace

Ray pixel_ray(const Camera& camera, double u, double v) {
    if (!(u >= 0.0 && u < camera.width && v >= 0.0 && v < camera.height)) {
        throw DomainError("pixel coordinate outside the image");
    }
    Ray ray;
    ray.origin = camera.center();
    ray.direction = camera.rotation.transpose() * camera_direction(camera, u, v);
    ray.direction.normalize();
    return ray;
}

Ray pixel_center_ray(const Camera& camera, int px, int py) {
    return pixel_ray(camera, px + 0.5, py + 0.5);
}

double cone_radius(const Camera& camera, double u, double v, double t) {
    if (!(t > 0.0)) {
        throw DomainError("cone_radius requires t > 0");
    }
    // Rotation preserves distances, so camera-space directions suffice.
    const Vec3 d = camera_direction(camera, u, v);
    const Vec3 dx = camera_direction(camera, u + 1.0, v);
    const Vec3 dy = camera_direction(camera, u, v + 1.0);
    return t * 0.5 * ((dx - d).norm() + (dy - d).norm());
}

double pixel_cone_radius(const Camera& camera, int px, int py, double t) {
    return cone_radius(camera, px + 0.5, py + 0.5, t);
}

double scene_extent(const std::vector<Camera>& cameras) {
    if (cameras.empty()) {
        return 1.0;
    }
    Vec3 mean = Vec3::Zero();
    for (const auto& c : cameras) {
        mean += c.center();
    }
    mean /= static_cast<double>(cameras.size());
    double radius = 0.0;
    for (const auto& c : cameras) {
        radius = std::max(radius, (c.center() - mean).norm());
    }
    return radius > 0.0 ? 1.1 * radius : 1.0;
}

} // namespace conesplat
