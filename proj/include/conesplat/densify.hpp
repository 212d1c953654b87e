// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "conesplat/field.hpp"
#include "conesplat/types.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace conesplat {

struct DensifyConfig {
    /// Hard cap on the primitive count; without one the growth rule applies.
    std::optional<std::size_t> budget;
    double beta = 0.02;
    double lambda_scale = 2.0;
    double prune_threshold = 0.005;
    int interval = 100;
    /// Ray-march resolution for median-depth queries.
    int n_steps = 512;
    double spawn_opacity = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Per-pixel absolute error, averaged over the three channels.
struct ErrorMap {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

ErrorMap error_map(const ImageBuffer& render, const ImageBuffer& gt);

struct PixelCoord {
    int x = 0;
    int y = 0;

    bool operator==(const PixelCoord&) const = default;
};

/// Weighted sampling without replacement: each successive draw picks a
/// remaining pixel with probability proportional to its error. Implemented with
/// exponential keys (log(u) / w), which has the same distribution. Returns an
/// empty list for an all-zero map; n is capped at the number of positive pixels.
std::vector<PixelCoord> sample_error_pixels(const ErrorMap& errors, std::size_t n,
                                            std::mt19937_64& rng);
std::vector<PixelCoord> sample_error_pixels(const ErrorMap& errors, std::size_t n,
                                            std::uint64_t seed);

struct SpawnStats {
    std::size_t requested = 0;
    std::size_t spawned = 0;
    std::size_t skipped = 0;
};

/// One isotropic primitive per pixel at the field's median depth, sized
/// lambda_scale * cone_radius. Pixels without a median depth are skipped.
std::vector<GaussianPrimitive> spawn_gaussians(const std::vector<PixelCoord>& pixels,
                                               const Camera& camera, const RadianceField& field,
                                               const DensifyConfig& config, int sh_order,
                                               SpawnStats* stats = nullptr);

/// round(max(0.2 n_gs, 1.2 n_last) / 100), rounding halves up.
std::size_t n_sample_budget(std::size_t n_gs, std::size_t n_last);

/// round(beta n_gs / 100), rounding halves up.
std::size_t n_sample_growth(std::size_t n_gs, double beta);

/// Removes primitives with opacity strictly below the threshold, keeping the
/// order of survivors. Returns the removed count; `survivors` receives the
/// original indices of kept primitives when given.
std::size_t prune(GaussianScene& scene, double threshold,
                  std::vector<std::size_t>* survivors = nullptr);

struct MergeResult {
    std::size_t pruned = 0;
    std::size_t accumulated = 0;
    std::size_t inserted = 0;
    std::size_t total = 0;
    /// Original indices of primitives kept by pruning; inserted ones follow them.
    std::vector<std::size_t> survivors;
};

/// Prunes, then appends the accumulation set. Under a budget a uniformly random
/// subset of the accumulation is dropped so the total equals the budget.
MergeResult merge(GaussianScene& scene, const DensifyConfig& config, std::mt19937_64& rng);

} // namespace conesplat
