// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

// Central-difference gradient check of the rasterizer, shared by the unit
// tests and the acceptance binary.

#pragma once

#include "conesplat/rasterizer.hpp"
#include "oracles.hpp"

#include <array>
#include <functional>
#include <limits>
#include <string>

namespace oracle {

struct GradCheckResult {
    // Worst per-component relative error per group: position, log_scale,
    // rotation, opacity_logit, sh.
    std::array<double, 5> worst{};
    double max() const { return *std::max_element(worst.begin(), worst.end()); }
};

inline const std::array<std::string, 5>& group_names() {
    static const std::array<std::string, 5> names = {"position", "log_scale", "rotation",
                                                     "opacity", "sh"};
    return names;
}

// Loss = sum over pixels of <weights, color>. Relative errors use a floor of
// 1e-3 times the largest analytic magnitude in the group so near-zero entries
// are judged on an absolute scale.
inline GradCheckResult check_gradients(const GaussianScene& scene, const Camera& cam,
                                       const RenderOptions& opts, const ImageBuffer& weights,
                                       double h = 1e-5) {
    const auto grads = render_backward(scene, cam, opts, weights);
    auto loss = [&](const GaussianScene& s) {
        const ImageBuffer img = render(s, cam, opts).color;
        double sum = 0.0;
        for (std::size_t i = 0; i < img.data().size(); ++i) {
            sum += img.data()[i] * weights.data()[i];
        }
        return sum;
    };
    using Access = std::function<double&(GaussianPrimitive&)>;
    std::array<std::vector<std::pair<std::function<double(const PrimitiveGradient&)>, Access>>, 5>
        groups;
    for (int a = 0; a < 3; ++a) {
        groups[0].push_back({[a](const PrimitiveGradient& g) { return g.position[a]; },
                             [a](GaussianPrimitive& p) -> double& { return p.position[a]; }});
        groups[1].push_back({[a](const PrimitiveGradient& g) { return g.log_scale[a]; },
                             [a](GaussianPrimitive& p) -> double& { return p.log_scale[a]; }});
    }
    for (int a = 0; a < 4; ++a) {
        groups[2].push_back({[a](const PrimitiveGradient& g) { return g.rotation[a]; },
                             [a](GaussianPrimitive& p) -> double& { return p.rotation[a]; }});
    }
    groups[3].push_back({[](const PrimitiveGradient& g) { return g.opacity_logit; },
                         [](GaussianPrimitive& p) -> double& { return p.opacity_logit; }});
    for (std::size_t k = 0; k < scene.primitives.front().sh.size(); ++k) {
        groups[4].push_back({[k](const PrimitiveGradient& g) { return g.sh[k]; },
                             [k](GaussianPrimitive& p) -> double& { return p.sh[k]; }});
    }

    GradCheckResult result;
    GaussianScene work = scene;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        double scale = 0.0;
        for (const auto& g : grads) {
            for (const auto& [get, access] : groups[gi]) {
                scale = std::max(scale, std::abs(get(g)));
            }
        }
        const double floor = std::max(1e-3 * scale, 1e-9);
        for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
            for (const auto& [get, access] : groups[gi]) {
                double& x = access(work.primitives[i]);
                const double x0 = x;
                x = x0 + h;
                const double lp = loss(work);
                x = x0 - h;
                const double lm = loss(work);
                x = x0;
                const double fd = (lp - lm) / (2.0 * h);
                result.worst[gi] = std::max(result.worst[gi], rel_error(get(grads[i]), fd, floor));
            }
        }
    }
    return result;
}

inline RenderOptions gradcheck_options() {
    RenderOptions o;
    o.cull_sigma = std::numeric_limits<double>::infinity();
    o.background = Vec3(0.1, 0.2, 0.3);
    return o;
}

inline ImageBuffer random_weights(std::mt19937_64& rng, int w, int h) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    ImageBuffer img(w, h);
    for (auto& v : img.data()) {
        v = u(rng);
    }
    return img;
}

} // namespace oracle
