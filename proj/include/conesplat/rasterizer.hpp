// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "conesplat/types.hpp"

#include <limits>
#include <optional>
#include <vector>

namespace conesplat {

/// Screen-space footprint of a primitive.
struct Projected2D {
    Vec2 mean = Vec2::Zero();
    Mat2 cov = Mat2::Identity();
    double depth = 0.0;
    /// Cull radius in pixels (cull_sigma standard deviations of the major axis).
    double radius = 0.0;
};

enum class LowPassMode {
    /// Adds the dilation to the 2D covariance diagonal.
    Dilate,
    /// Dilation plus opacity compensation sqrt(det(cov) / det(cov + dilation I)).
    Compensated,
};

struct RenderOptions {
    bool low_pass = true;
    double dilation = 0.3;
    LowPassMode low_pass_mode = LowPassMode::Dilate;
    Vec3 background = Vec3::Zero();
    bool record_depth = false;
    bool record_blend_count = false;
    /// Compositing stops once transmittance falls below this value.
    double transmittance_floor = 1e-4;
    double alpha_max = 0.999;
    /// Footprint radius in standard deviations; infinity disables culling.
    double cull_sigma = 3.0;
    double near_plane = 0.01;
    /// Tile-binned traversal. Produces the same output as the untiled path.
    bool tiled = true;
    int tile_size = 16;

    void validate() const;
};

/// Blend-count threshold: contributions with alpha above this are counted.
inline constexpr double kBlendCountAlpha = 1.0 / 255.0;

struct RenderOutput {
    ImageBuffer color;
    std::optional<std::vector<double>> depth;
    std::optional<std::vector<int>> blend_count;
};

/// EWA projection. Returns nullopt for primitives at or behind the near plane
/// and for degenerate 2D covariances.
std::optional<Projected2D> project(const GaussianPrimitive& primitive, const Camera& camera,
                                   const RenderOptions& options = {});

/// exp(-1/2 d^T cov^-1 d) with d = pixel_center - mean; 0 for singular covariances.
double kernel_response(const Vec2& pixel_center, const Projected2D& proj);

struct PrimitiveGradient {
    Vec3 position = Vec3::Zero();
    Vec3 log_scale = Vec3::Zero();
    Vec4 rotation = Vec4::Zero();
    double opacity_logit = 0.0;
    std::vector<double> sh;
};

/// Prepared render of one scene from one camera. Projection, colors and the
/// depth order are computed once and shared by forward and backward passes.
/// The scene must outlive the rasterizer.
class Rasterizer {
  public:
    Rasterizer(const GaussianScene& scene, const Camera& camera, const RenderOptions& options);
    ~Rasterizer();
    Rasterizer(const Rasterizer&) = delete;
    Rasterizer& operator=(const Rasterizer&) = delete;

    RenderOutput forward() const;

    /// Composited color of a single pixel.
    Vec3 render_pixel(int px, int py) const;

    /// Gradients of sum_pixels <grad_color, C> with respect to every primitive
    /// parameter. Deterministic for any worker count.
    std::vector<PrimitiveGradient> backward(const ImageBuffer& grad_color) const;

    /// Indices of primitives that survived projection, front to back.
    std::vector<std::size_t> depth_order() const;

  private:
    struct Splat;
    struct Contribution;

    template <typename Visit>
    void composite(int px, int py, Visit&& visit) const;

    const GaussianScene& scene_;
    Camera camera_;
    RenderOptions options_;
    std::vector<Splat> splats_;
    std::vector<std::vector<std::uint32_t>> tiles_;
    int tiles_x_ = 0;
    int tiles_y_ = 0;
};

RenderOutput render(const GaussianScene& scene, const Camera& camera,
                    const RenderOptions& options = {});

std::vector<PrimitiveGradient> render_backward(const GaussianScene& scene, const Camera& camera,
                                               const RenderOptions& options,
                                               const ImageBuffer& grad_color);

} // namespace conesplat
