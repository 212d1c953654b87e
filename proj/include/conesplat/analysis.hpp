// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "conesplat/loss.hpp"
#include "conesplat/rasterizer.hpp"
#include "conesplat/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace conesplat {

/// 10 log10(1 / MSE) with peak 1; +infinity for identical images.
double psnr(const ImageBuffer& a, const ImageBuffer& b);

/// Formats a PSNR value, printing "inf" for identical images.
std::string format_psnr(double db);

struct BlendCountStats {
    /// Mean count over all pixels of all views.
    double mean = 0.0;
    std::vector<double> per_view;
    std::size_t pixels = 0;
};

/// Counts, per pixel, the composited primitives with alpha above 1/255.
BlendCountStats blend_count_stats(const GaussianScene& scene, const std::vector<Camera>& cameras,
                                  const RenderOptions& options = {});

struct Histogram {
    std::vector<double> edges;
    std::vector<std::size_t> counts;
    std::size_t underflow = 0;
    std::size_t overflow = 0;
    bool log_spaced = false;
    /// Reference lines, e.g. the smallest scale covering one pixel per view.
    std::vector<double> annotations;

    std::size_t total() const;
};

/// Histogram over [lo, hi]; values equal to hi land in the last bin.
Histogram make_histogram(const std::vector<double>& values, int bins, double lo, double hi,
                         bool log_spaced);

/// Histogram with the range taken from the data (widened when all values agree).
Histogram auto_histogram(const std::vector<double>& values, int bins, bool log_spaced);

/// World-space isotropic scale whose on-axis footprint diameter (2 sigma) is one pixel.
double min_pixel_scale(double focal, double depth);

/// Median camera-space depth of the primitives in front of the camera.
std::optional<double> median_primitive_depth(const GaussianScene& scene, const Camera& camera);

/// All 3N scale values on log-spaced bins; one annotation per camera at
/// min_pixel_scale(fx, median primitive depth).
Histogram scale_histogram(const GaussianScene& scene, int bins,
                          const std::vector<Camera>& cameras = {});

/// Image-space extent of the scale parameter: sqrt(largest eigenvalue of the
/// 2D covariance) in pixels, without the low-pass dilation. A primitive spawned
/// with scale lambda * r_cone measures lambda pixels. nullopt behind the camera
/// or outside the image.
std::optional<double> perceived_size(const GaussianPrimitive& primitive, const Camera& camera);

Histogram perceived_size_histogram(const GaussianScene& scene, const std::vector<Camera>& cameras,
                                   int bins, bool log_spaced = false);

std::string histogram_csv(const Histogram& h);
std::string histogram_json(const Histogram& h);

} // namespace conesplat
