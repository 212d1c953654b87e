// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

#include "conesplat/gradcheck.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace conesplat {

double GradCheckReport::max() const { return *std::max_element(worst.begin(), worst.end()); }

std::string GradCheckReport::to_json() const {
    nlohmann::json j;
    for (std::size_t g = 0; g < kGroups.size(); ++g) {
        j["worst_rel_error"][kGroups[g]] = worst[g];
    }
    j["max_rel_error"] = max();
    return j.dump(2);
}

namespace {

// Address of parameter k of group g, or nullptr past the group's end.
double* param(GaussianPrimitive& p, std::size_t g, std::size_t k) {
    switch (g) {
    case 0: return k < 3 ? &p.position[static_cast<Eigen::Index>(k)] : nullptr;
    case 1: return k < 3 ? &p.log_scale[static_cast<Eigen::Index>(k)] : nullptr;
    case 2: return k < 4 ? &p.rotation[static_cast<Eigen::Index>(k)] : nullptr;
    case 3: return k < 1 ? &p.opacity_logit : nullptr;
    default: return k < p.sh.size() ? &p.sh[k] : nullptr;
    }
}

double grad_of(const PrimitiveGradient& d, std::size_t g, std::size_t k) {
    switch (g) {
    case 0: return d.position[static_cast<Eigen::Index>(k)];
    case 1: return d.log_scale[static_cast<Eigen::Index>(k)];
    case 2: return d.rotation[static_cast<Eigen::Index>(k)];
    case 3: return d.opacity_logit;
    default: return d.sh[k];
    }
}

} // namespace

GradCheckReport gradient_check(const GaussianScene& scene, const Camera& camera,
                               const RenderOptions& options, const ImageBuffer& weights,
                               double step) {
    const auto grads = render_backward(scene, camera, options, weights);
    auto loss = [&](const GaussianScene& s) {
        const ImageBuffer img = render(s, camera, options).color;
        double sum = 0.0;
        for (std::size_t i = 0; i < img.data().size(); ++i) {
            sum += img.data()[i] * weights.data()[i];
        }
        return sum;
    };
    GradCheckReport report;
    GaussianScene work = scene;
    for (std::size_t g = 0; g < GradCheckReport::kGroups.size(); ++g) {
        double scale = 0.0;
        for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
            for (std::size_t k = 0; param(work.primitives[i], g, k); ++k) {
                scale = std::max(scale, std::abs(grad_of(grads[i], g, k)));
            }
        }
        const double floor = std::max(1e-3 * scale, 1e-9);
        for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
            for (std::size_t k = 0; double* x = param(work.primitives[i], g, k); ++k) {
                const double x0 = *x;
                *x = x0 + step;
                const double lp = loss(work);
                *x = x0 - step;
                const double lm = loss(work);
                *x = x0;
                const double fd = (lp - lm) / (2.0 * step);
                const double a = grad_of(grads[i], g, k);
                const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), floor});
                report.worst[g] = std::max(report.worst[g], rel);
            }
        }
    }
    return report;
}

GradCheckCase random_gradcheck_case(int primitives, int size, int sh_order, std::uint64_t seed) {
    if (primitives < 1 || size < 1) {
        throw DomainError("gradcheck needs at least one primitive and one pixel");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    GradCheckCase c;
    c.camera.fx = c.camera.fy = 1.2 * size;
    c.camera.cx = c.camera.cy = size / 2.0;
    c.camera.width = c.camera.height = size;
    c.scene.sh_order = sh_order;
    for (int i = 0; i < primitives; ++i) {
        GaussianPrimitive p = make_primitive(sh_order);
        p.position = Vec3(0.8 * u(rng), 0.8 * u(rng), 4.0 + u(rng));
        p.log_scale = Vec3(std::log(0.3) + 0.4 * u(rng), std::log(0.3) + 0.4 * u(rng),
                           std::log(0.3) + 0.4 * u(rng));
        p.rotation = Vec4(1.0 + u(rng), u(rng), u(rng), u(rng)).normalized();
        p.opacity_logit = 1.5 * u(rng);
        for (auto& k : p.sh) {
            k = 0.5 * u(rng);
        }
        c.scene.primitives.push_back(p);
    }
    c.options.cull_sigma = std::numeric_limits<double>::infinity();
    c.options.background = Vec3(0.1, 0.2, 0.3);
    c.weights = ImageBuffer(size, size);
    for (auto& w : c.weights.data()) {
        w = u(rng);
    }
    return c;
}

} // namespace conesplat
