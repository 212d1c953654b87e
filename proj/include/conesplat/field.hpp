// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "conesplat/types.hpp"

#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

namespace conesplat {

struct FieldSample {
    double density = 0.0;
    Vec3 rgb = Vec3::Zero();
};

struct Aabb {
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Zero();

    bool contains(const Vec3& p) const {
        return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
    }
    Vec3 center() const { return 0.5 * (lo + hi); }
    Vec3 extent() const { return hi - lo; }

    /// Parametric [t0, t1] overlap of the ray with the box (t0 may be negative).
    std::optional<std::pair<double, double>> intersect(const Ray& ray) const;
};

/// Sampleable density + color field. Sampling outside bounds() yields zero density.
class RadianceField {
  public:
    virtual ~RadianceField() = default;
    virtual FieldSample sample(const Vec3& point, const Vec3& dir) const = 0;
    virtual Aabb bounds() const = 0;
};

enum class ShapeKind { Sphere, Box, Slab };

/// Constant-density shape. For Sphere `size.x()` is the radius, for Box `size`
/// holds half extents, for Slab `normal` and `size.x()`/`size.y()` give the
/// signed offsets [lo, hi] of the slab along the normal (through the origin).
/// `softness` > 0 ramps the density smoothly over a shell of that width.
struct Shape {
    ShapeKind kind = ShapeKind::Sphere;
    Vec3 center = Vec3::Zero();
    Vec3 size = Vec3::Ones();
    Vec3 normal = Vec3::UnitZ();
    double density = 1.0;
    Vec3 color = Vec3::Ones();
    /// Color change per world unit, applied relative to `center` and clamped to [0, 1].
    Mat3 color_gradient = Mat3::Zero();
    /// Adds texture_amplitude * sin(2 pi f x) sin(2 pi f y) sin(2 pi f z) to the
    /// color, with (x, y, z) relative to `center` and f = texture_frequency.
    Vec3 texture_amplitude = Vec3::Zero();
    double texture_frequency = 0.0;
    double softness = 0.0;

    /// Signed distance-like function, negative inside.
    double signed_distance(const Vec3& p) const;
    double density_at(const Vec3& p) const;
    Vec3 color_at(const Vec3& p) const;
};

/// Union of analytic shapes. Overlapping densities add; colors are
/// density-weighted.
class AnalyticField final : public RadianceField {
  public:
    AnalyticField(std::vector<Shape> shapes, Aabb bounds);

    FieldSample sample(const Vec3& point, const Vec3& dir) const override;
    Aabb bounds() const override { return bounds_; }
    const std::vector<Shape>& shapes() const { return shapes_; }

  private:
    std::vector<Shape> shapes_;
    Aabb bounds_;
};

/// Multi-resolution dense grids of (density, r, g, b) logits with vertex-centered
/// trilinear interpolation. density = exp(sum over levels), rgb = sigmoid(sum).
class DenseGridField final : public RadianceField {
  public:
    static constexpr int kChannels = 4;

    DenseGridField(Aabb bounds, std::vector<int> resolutions, double initial_density = 1e-2);

    FieldSample sample(const Vec3& point, const Vec3& dir) const override;
    Aabb bounds() const override { return bounds_; }

    const std::vector<int>& resolutions() const { return resolutions_; }
    std::size_t parameter_count() const { return params_.size(); }
    std::vector<float>& parameters() { return params_; }
    const std::vector<float>& parameters() const { return params_; }

    /// Eight (parameter offset, weight) pairs per level; offset addresses the
    /// density channel of a vertex, color channels follow contiguously.
    struct Corner {
        std::size_t offset;
        double weight;
    };
    /// Returns false outside bounds. `corners` receives 8 entries per level.
    bool corners(const Vec3& point, std::vector<Corner>& corners) const;

    /// Summed (pre-activation) logits at a point, or nullopt outside bounds.
    std::optional<Vec4> logits(const Vec3& point) const;

    void save(const std::filesystem::path& path) const;
    static DenseGridField load(const std::filesystem::path& path);

    bool operator==(const DenseGridField& o) const {
        return bounds_.lo == o.bounds_.lo && bounds_.hi == o.bounds_.hi &&
               resolutions_ == o.resolutions_ && params_ == o.params_;
    }

  private:
    Aabb bounds_;
    std::vector<int> resolutions_;
    std::vector<std::size_t> level_offsets_;
    std::vector<float> params_;
};

enum class SamplePoint { SegmentStart, SegmentMidpoint };

struct MarchResult {
    std::vector<double> t;
    std::vector<double> alpha;
    /// Transmittance before each segment's absorption; starts at 1.
    std::vector<double> transmittance;
    /// Transmittance after the last segment.
    double final_transmittance = 1.0;
    Vec3 color = Vec3::Zero();
};

/// Uniform-step volume rendering over [t_near, t_far] with n_steps segments.
/// Color is composited over black; the direction passed to the field is `dir`.
MarchResult march(const RadianceField& field, const Ray& ray, double t_near, double t_far,
                  int n_steps, SamplePoint sample_point = SamplePoint::SegmentStart,
                  const Vec3& dir = Vec3::Zero());

/// Start distance t_k of the first segment with transmittance_before > 0.5 >=
/// transmittance_after; nullopt when transmittance never crosses 0.5.
std::optional<double> median_depth(const RadianceField& field, const Ray& ray, double t_near,
                                   double t_far, int n_steps);

/// Median depth plus the marched color along the ray (zero view direction),
/// with the march interval clipped to the field bounds.
struct RayProbe {
    double median_depth;
    Vec3 color;
};
std::optional<RayProbe> probe_ray(const RadianceField& field, const Ray& ray, int n_steps);

/// March interval of a ray clipped to the field bounds, or nullopt if it misses.
std::optional<std::pair<double, double>> march_interval(const RadianceField& field,
                                                        const Ray& ray);

ImageBuffer render_field(const RadianceField& field, const Camera& camera, int n_steps,
                         const Vec3& background = Vec3::Zero());

struct GridTrainConfig {
    int iterations = 20000;
    int batch_rays = 4096;
    int n_steps = 512;
    double learning_rate = 1e-2;
    std::uint64_t seed = 0;
};

struct GridTrainReport {
    std::vector<double> losses;
    double final_loss = 0.0;
};

/// Adam on the per-ray mean squared error between marched and ground-truth
/// pixels, over random pixel batches. Throws DomainError on non-finite loss.
GridTrainReport train_grid(DenseGridField& field, const Dataset& dataset,
                           const GridTrainConfig& config);

} // namespace conesplat
