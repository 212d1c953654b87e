// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "conesplat/rasterizer.hpp"

#include <array>
#include <cstdint>
#include <string>

namespace conesplat {

/// Worst relative error per parameter group between render_backward and
/// central differences of sum(weights * render).
struct GradCheckReport {
    static constexpr std::array<const char*, 5> kGroups = {"position", "log_scale", "rotation",
                                                           "opacity", "sh"};
    std::array<double, 5> worst{};
    double max() const;
    std::string to_json() const;
};

/// Relative errors use a floor of 1e-3 times the group's largest analytic
/// gradient, so entries near zero are judged on an absolute scale.
GradCheckReport gradient_check(const GaussianScene& scene, const Camera& camera,
                               const RenderOptions& options, const ImageBuffer& weights,
                               double step = 1e-5);

/// Random scene in front of a size x size camera with culling disabled, plus
/// random loss weights; the setup used by the gradcheck command.
struct GradCheckCase {
    GaussianScene scene;
    Camera camera;
    RenderOptions options;
    ImageBuffer weights;
};
GradCheckCase random_gradcheck_case(int primitives, int size, int sh_order, std::uint64_t seed);

} // namespace conesplat
