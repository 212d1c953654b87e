// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

#include "conesplat/init.hpp"
#include "conesplat/parallel.hpp"

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>

#include <algorithm>
#include <cmath>
#include <random>

namespace conesplat {

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;

std::vector<PixelSample> sample_pixels_uniform(std::span<const Camera> cameras,
                                               std::size_t p_init, std::uint64_t seed) {
    if (cameras.empty()) {
        throw DomainError("cannot sample pixels from an empty dataset");
    }
    if (p_init < 1) {
        throw DomainError("p_init must be at least 1");
    }
    // Cumulative pixel counts so one uniform index addresses any (image, pixel).
    std::vector<std::uint64_t> cumulative;
    std::uint64_t total = 0;
    for (const auto& cam : cameras) {
        total += static_cast<std::uint64_t>(cam.width) * static_cast<std::uint64_t>(cam.height);
        cumulative.push_back(total);
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::uint64_t> pick(0, total - 1);
    std::vector<PixelSample> out;
    out.reserve(p_init);
    for (std::size_t i = 0; i < p_init; ++i) {
        const std::uint64_t g = pick(rng);
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), g);
        const std::size_t image = static_cast<std::size_t>(it - cumulative.begin());
        const std::uint64_t local = g - (image == 0 ? 0 : cumulative[image - 1]);
        const auto width = static_cast<std::uint64_t>(cameras[image].width);
        out.push_back({image, static_cast<int>(local % width), static_cast<int>(local / width)});
    }
    return out;
}

std::vector<double> knn_mean_distance(std::span<const Vec3> points, int k) {
    if (k < 1 || points.size() <= static_cast<std::size_t>(k)) {
        throw DomainError("knn_mean_distance needs more than k points");
    }
    using Point = bg::model::point<double, 3, bg::cs::cartesian>;
    using Entry = std::pair<Point, std::size_t>;
    std::vector<Entry> entries;
    entries.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        entries.emplace_back(Point(points[i].x(), points[i].y(), points[i].z()), i);
    }
    const bgi::rtree<Entry, bgi::quadratic<16>> tree(entries.begin(), entries.end());

    std::vector<double> out(points.size(), 0.0);
    parallel_for(0, points.size(), [&](std::size_t i) {
        std::vector<Entry> found;
        tree.query(bgi::nearest(entries[i].first, static_cast<unsigned>(k + 1)),
                   std::back_inserter(found));
        std::vector<double> dists;
        bool skipped_self = false;
        for (const auto& e : found) {
            if (!skipped_self && e.second == i) {
                skipped_self = true;
                continue;
            }
            dists.push_back((points[e.second] - points[i]).norm());
        }
        std::sort(dists.begin(), dists.end());
        dists.resize(static_cast<std::size_t>(k));
        double sum = 0.0;
        for (const double d : dists) {
            sum += d;
        }
        out[i] = sum / k;
    });
    return out;
}

std::size_t InitConfig::target_count() const {
    return budget ? std::min(p_init, *budget) : p_init;
}

GaussianPrimitive seed_primitive(const Vec3& position, double scale, const Vec3& rgb,
                                 int sh_order, double opacity) {
    GaussianPrimitive p = make_primitive(sh_order);
    p.position = position;
    p.log_scale = Vec3::Constant(std::log(scale));
    p.opacity_logit = logit(opacity);
    set_dc_color(p, rgb);
    return p;
}

GaussianScene initialize_scene(const RadianceField& field, std::span<const Camera> cameras,
                               const InitConfig& config) {
    if (cameras.empty()) {
        throw DomainError("initialization needs at least one camera");
    }
    if (config.n_steps < 1 || !(config.opacity > 0.0 && config.opacity < 1.0) ||
        !(config.scale_floor > 0.0)) {
        throw DomainError("invalid initialization configuration");
    }
    for (const auto& cam : cameras) {
        cam.validate();
    }
    const std::size_t target = config.target_count();
    if (target < 1) {
        throw DomainError("initialization target count must be at least 1");
    }
    const auto max_draws =
        static_cast<std::size_t>(std::ceil(config.retry_factor * static_cast<double>(target)));

    struct Accepted {
        PixelSample pixel;
        Vec3 position;
        double depth;
        Vec3 color;
    };
    std::vector<Accepted> accepted;
    std::size_t draws = 0;
    std::uint64_t round = 0;
    while (accepted.size() < target && draws < max_draws) {
        const std::size_t want = std::min(target - accepted.size(), max_draws - draws);
        const auto pixels = sample_pixels_uniform(cameras, want, config.seed + round);
        draws += want;
        ++round;
        std::vector<std::optional<Accepted>> probed(pixels.size());
        parallel_for(0, pixels.size(), [&](std::size_t i) {
            const PixelSample& px = pixels[i];
            const Ray ray = pixel_center_ray(cameras[px.image], px.u, px.v);
            const auto probe = probe_ray(field, ray, config.n_steps);
            if (probe) {
                probed[i] = Accepted{px, ray.at(probe->median_depth), probe->median_depth,
                                     probe->color};
            }
        });
        for (auto& p : probed) {
            if (p) {
                accepted.push_back(*p);
            }
        }
    }
    const auto minimum = static_cast<std::size_t>(std::ceil(0.01 * static_cast<double>(target)));
    if (accepted.size() < minimum || accepted.empty()) {
        throw DomainError("proxy field is degenerate: only " + std::to_string(accepted.size()) +
                          " of " + std::to_string(target) + " samples had a median depth");
    }

    std::vector<double> scales(accepted.size());
    const bool use_knn = config.scale_source == ScaleSource::Knn && accepted.size() >= 2;
    if (use_knn) {
        std::vector<Vec3> positions;
        positions.reserve(accepted.size());
        for (const auto& a : accepted) {
            positions.push_back(a.position);
        }
        const int k = static_cast<int>(std::min<std::size_t>(3, accepted.size() - 1));
        scales = knn_mean_distance(positions, k);
    } else {
        const double factor = config.scale_source == ScaleSource::TenPixels
                                  ? 10.0 * config.lambda_scale
                                  : config.lambda_scale;
        for (std::size_t i = 0; i < accepted.size(); ++i) {
            const auto& a = accepted[i];
            scales[i] = factor *
                        pixel_cone_radius(cameras[a.pixel.image], a.pixel.u, a.pixel.v, a.depth);
        }
    }

    GaussianScene scene;
    scene.sh_order = config.sh_order;
    scene.primitives.reserve(accepted.size());
    for (std::size_t i = 0; i < accepted.size(); ++i) {
        scene.primitives.push_back(seed_primitive(accepted[i].position,
                                                  std::max(scales[i], config.scale_floor),
                                                  accepted[i].color, config.sh_order,
                                                  config.opacity));
    }
    return scene;
}

} // namespace conesplat
