// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace conesplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

/// Raised for violated preconditions on user-facing operations.
class DomainError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

inline double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

/// Number of SH coefficients per color channel for a given order.
inline int sh_coeff_count(int order) { return (order + 1) * (order + 1); }

/// One splat. Scales are stored as logarithms, opacity as a logit and the
/// rotation as a (w, x, y, z) quaternion that is renormalized after updates.
/// SH coefficients are coefficient-major: sh[l * 3 + channel].
struct GaussianPrimitive {
    Vec3 position = Vec3::Zero();
    Vec3 log_scale = Vec3::Zero();
    Vec4 rotation = Vec4(1.0, 0.0, 0.0, 0.0);
    double opacity_logit = 0.0;
    std::vector<double> sh;

    double opacity() const { return sigmoid(opacity_logit); }
    Vec3 scale() const { return log_scale.array().exp(); }

    bool operator==(const GaussianPrimitive&) const = default;
};

/// Rotation matrix of a (possibly unnormalized) quaternion; normalizes first.
Mat3 quaternion_to_rotation(const Vec4& q);

/// Sigma = R S S^T R^T.
Mat3 covariance(const GaussianPrimitive& primitive);

/// A primitive with zero position, identity rotation and the given SH order.
GaussianPrimitive make_primitive(int sh_order);

/// Encodes a linear RGB color into the DC coefficients (rest zero) so that
/// SH decoding returns `rgb` for every view direction.
void set_dc_color(GaussianPrimitive& primitive, const Vec3& rgb);

struct GaussianScene {
    int sh_order = 1;
    std::vector<GaussianPrimitive> primitives;
    std::vector<GaussianPrimitive> accumulation;
    std::uint64_t iteration = 0;
    std::uint64_t last_inserted = 0;

    std::size_t size() const { return primitives.size(); }
    int coeffs_per_channel() const { return sh_coeff_count(sh_order); }
};

struct Ray {
    Vec3 origin = Vec3::Zero();
    Vec3 direction = Vec3::UnitZ();

    Vec3 at(double t) const { return origin + t * direction; }
};

/// Pinhole camera with a world-to-camera rigid transform. Camera looks along
/// +z, image x to the right and y down. Pixel (i, j) covers [i, i+1) x [j, j+1)
/// in continuous image coordinates, so its center is (i + 0.5, j + 0.5).
struct Camera {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 center() const { return -rotation.transpose() * translation; }
    Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }

    /// Throws DomainError when intrinsics or pose violate the camera invariants.
    void validate() const;

    static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
                          int width, int height);
};

/// Ray through continuous image coordinates (u, v).
Ray pixel_ray(const Camera& camera, double u, double v);

/// Ray through the center of integer pixel (px, py).
Ray pixel_center_ray(const Camera& camera, int px, int py);

/// Pixel cone cross-section radius at distance t, from the directions through
/// (u, v) and its +x / +y neighbours (u + 1, v), (u, v + 1). Neighbours may lie
/// outside the image.
double cone_radius(const Camera& camera, double u, double v, double t);

/// cone_radius evaluated at the center of integer pixel (px, py).
double pixel_cone_radius(const Camera& camera, int px, int py, double t);

/// Row-major, 3-channel linear RGB image.
class ImageBuffer {
  public:
    ImageBuffer() = default;
    ImageBuffer(int width, int height, double fill = 0.0)
        : width_(checked_dim(width)), height_(checked_dim(height)),
          data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3, fill) {}

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

    double& at(int x, int y, int c) { return data_[index(x, y, c)]; }
    double at(int x, int y, int c) const { return data_[index(x, y, c)]; }

    Vec3 pixel(int x, int y) const {
        const std::size_t i = index(x, y, 0);
        return {data_[i], data_[i + 1], data_[i + 2]};
    }
    void set_pixel(int x, int y, const Vec3& rgb) {
        const std::size_t i = index(x, y, 0);
        data_[i] = rgb.x();
        data_[i + 1] = rgb.y();
        data_[i + 2] = rgb.z();
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_size(const ImageBuffer& other) const {
        return width_ == other.width_ && height_ == other.height_;
    }

    bool operator==(const ImageBuffer&) const = default;

  private:
    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width_ + x) * 3 + c;
    }

    static int checked_dim(int n) {
        if (n < 0) {
            throw DomainError("ImageBuffer: negative dimensions");
        }
        return n;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<double> data_;
};

/// Training views: cameras paired with ground-truth images.
struct Dataset {
    std::vector<Camera> cameras;
    std::vector<ImageBuffer> images;
    Vec3 background = Vec3::Zero();

    std::size_t size() const { return cameras.size(); }
    bool empty() const { return cameras.empty(); }
};

/// Radius of the sphere around the mean camera center that contains all
/// camera centers, padded by 10%.
double scene_extent(const std::vector<Camera>& cameras);

} // namespace conesplat
