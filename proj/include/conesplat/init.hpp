// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "conesplat/field.hpp"
#include "conesplat/types.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace conesplat {

struct PixelSample {
    std::size_t image = 0;
    int u = 0;
    int v = 0;

    bool operator==(const PixelSample&) const = default;
};

/// I.i.d. uniform draws over every (image, pixel) pair of the cameras' pixel domains.
std::vector<PixelSample> sample_pixels_uniform(std::span<const Camera> cameras,
                                               std::size_t p_init, std::uint64_t seed);

/// Mean Euclidean distance from each point to its k nearest other points.
std::vector<double> knn_mean_distance(std::span<const Vec3> points, int k = 3);

enum class ScaleSource {
    /// Mean distance to the three nearest initial centers.
    Knn,
    /// Pixel-cone footprint at the median depth, scaled by lambda_scale.
    Cone,
    /// Ten times the pixel footprint.
    TenPixels,
};

struct InitConfig {
    std::size_t p_init = 1'000'000;
    std::optional<std::size_t> budget;
    int sh_order = 1;
    int n_steps = 512;
    double opacity = 0.1;
    double scale_floor = 1e-6;
    double lambda_scale = 2.0;
    /// Total draws allowed are retry_factor * target count.
    double retry_factor = 10.0;
    ScaleSource scale_source = ScaleSource::Knn;
    std::uint64_t seed = 0;

    /// min(p_init, budget).
    std::size_t target_count() const;
};

/// Builds a primitive at `position` with identity rotation, the configured
/// opacity, isotropic `scale` and DC color `rgb`.
GaussianPrimitive seed_primitive(const Vec3& position, double scale, const Vec3& rgb,
                                 int sh_order, double opacity);

/// Places one primitive per sampled pixel at the field's median depth along the
/// pixel ray. Pixels without a median depth are redrawn until the target count
/// is met or the retry cap is hit. Throws DomainError if fewer than 1% of the
/// target could be placed.
GaussianScene initialize_scene(const RadianceField& field, std::span<const Camera> cameras,
                               const InitConfig& config);

} // namespace conesplat
