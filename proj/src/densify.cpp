// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

#include "conesplat/densify.hpp"
#include "conesplat/init.hpp"
#include "conesplat/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace conesplat {

void DensifyConfig::validate() const {
    if (!(beta >= 0.0)) {
        throw DomainError("beta must be non-negative");
    }
    if (!(prune_threshold > 0.0 && prune_threshold < 1.0)) {
        throw DomainError("prune threshold must lie in (0, 1)");
    }
    if (interval < 1) {
        throw DomainError("densification interval must be at least 1");
    }
    if (!(lambda_scale > 0.0)) {
        throw DomainError("lambda_scale must be positive");
    }
    if (n_steps < 1) {
        throw DomainError("n_steps must be at least 1");
    }
    if (!(spawn_opacity > 0.0 && spawn_opacity < 1.0)) {
        throw DomainError("spawn opacity must lie in (0, 1)");
    }
}

ErrorMap error_map(const ImageBuffer& render, const ImageBuffer& gt) {
    if (!render.same_size(gt)) {
        throw DomainError("error_map: image sizes differ");
    }
    ErrorMap out;
    out.width = render.width();
    out.height = render.height();
    out.values.resize(render.pixel_count());
    const auto& a = render.data();
    const auto& b = gt.data();
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        out.values[i] = (std::abs(a[3 * i] - b[3 * i]) + std::abs(a[3 * i + 1] - b[3 * i + 1]) +
                         std::abs(a[3 * i + 2] - b[3 * i + 2])) /
                        3.0;
    }
    return out;
}

std::vector<PixelCoord> sample_error_pixels(const ErrorMap& errors, std::size_t n,
                                            std::mt19937_64& rng) {
    struct Keyed {
        double key;
        std::size_t index;
    };
    std::vector<Keyed> keyed;
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (std::size_t i = 0; i < errors.values.size(); ++i) {
        const double w = errors.values[i];
        if (!std::isfinite(w)) {
            throw DomainError("error map contains non-finite values");
        }
        if (w > 0.0) {
            double u = uniform(rng);
            while (u <= 0.0) {
                u = uniform(rng);
            }
            keyed.push_back({std::log(u) / w, i});
        }
    }
    n = std::min(n, keyed.size());
    std::partial_sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(n), keyed.end(),
                      [](const Keyed& a, const Keyed& b) {
                          return a.key > b.key || (a.key == b.key && a.index < b.index);
                      });
    std::vector<PixelCoord> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto idx = keyed[i].index;
        out.push_back({static_cast<int>(idx % static_cast<std::size_t>(errors.width)),
                       static_cast<int>(idx / static_cast<std::size_t>(errors.width))});
    }
    return out;
}

std::vector<PixelCoord> sample_error_pixels(const ErrorMap& errors, std::size_t n,
                                            std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return sample_error_pixels(errors, n, rng);
}

std::vector<GaussianPrimitive> spawn_gaussians(const std::vector<PixelCoord>& pixels,
                                               const Camera& camera, const RadianceField& field,
                                               const DensifyConfig& config, int sh_order,
                                               SpawnStats* stats) {
    std::vector<std::optional<GaussianPrimitive>> staged(pixels.size());
    parallel_for(0, pixels.size(), [&](std::size_t i) {
        const PixelCoord px = pixels[i];
        const Ray ray = pixel_center_ray(camera, px.x, px.y);
        const auto probe = probe_ray(field, ray, config.n_steps);
        if (!probe) {
            return;
        }
        const double scale =
            config.lambda_scale * pixel_cone_radius(camera, px.x, px.y, probe->median_depth);
        staged[i] = seed_primitive(ray.at(probe->median_depth), scale, probe->color, sh_order,
                                   config.spawn_opacity);
    });
    std::vector<GaussianPrimitive> out;
    out.reserve(pixels.size());
    for (auto& p : staged) {
        if (p) {
            out.push_back(std::move(*p));
        }
    }
    if (stats) {
        stats->requested += pixels.size();
        stats->spawned += out.size();
        stats->skipped += pixels.size() - out.size();
    }
    return out;
}

std::size_t n_sample_budget(std::size_t n_gs, std::size_t n_last) {
    // max(0.2 a, 1.2 b) / 100 == max(2 a, 12 b) / 1000, exact in integers.
    const std::size_t scaled = std::max(2 * n_gs, 12 * n_last);
    return (scaled + 500) / 1000;
}

std::size_t n_sample_growth(std::size_t n_gs, double beta) {
    if (!(beta >= 0.0)) {
        throw DomainError("beta must be non-negative");
    }
    return static_cast<std::size_t>(std::floor(beta * static_cast<double>(n_gs) / 100.0 + 0.5));
}

std::size_t prune(GaussianScene& scene, double threshold, std::vector<std::size_t>* survivors) {
    if (survivors) {
        survivors->clear();
    }
    std::size_t write = 0;
    const std::size_t n = scene.primitives.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (scene.primitives[i].opacity() < threshold) {
            continue;
        }
        if (write != i) {
            scene.primitives[write] = std::move(scene.primitives[i]);
        }
        if (survivors) {
            survivors->push_back(i);
        }
        ++write;
    }
    scene.primitives.resize(write);
    return n - write;
}

MergeResult merge(GaussianScene& scene, const DensifyConfig& config, std::mt19937_64& rng) {
    MergeResult out;
    out.pruned = prune(scene, config.prune_threshold, &out.survivors);
    out.accumulated = scene.accumulation.size();

    auto& acc = scene.accumulation;
    if (config.budget) {
        const std::size_t room =
            *config.budget > scene.primitives.size() ? *config.budget - scene.primitives.size() : 0;
        if (acc.size() > room) {
            // Partial Fisher-Yates picks a uniform subset; keep spawn order among the kept.
            std::vector<std::size_t> order(acc.size());
            std::iota(order.begin(), order.end(), 0);
            for (std::size_t i = 0; i < room; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
                std::swap(order[i], order[pick(rng)]);
            }
            order.resize(room);
            std::sort(order.begin(), order.end());
            std::vector<GaussianPrimitive> kept;
            kept.reserve(room);
            for (const std::size_t i : order) {
                kept.push_back(std::move(acc[i]));
            }
            acc = std::move(kept);
        }
    }
    out.inserted = acc.size();
    for (auto& p : acc) {
        scene.primitives.push_back(std::move(p));
    }
    acc.clear();
    scene.last_inserted = out.inserted;
    out.total = scene.primitives.size();
    return out;
}

} // namespace conesplat
