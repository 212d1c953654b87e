// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "conesplat/field.hpp"
#include "conesplat/rasterizer.hpp"
#include "conesplat/types.hpp"

#include <string>
#include <vector>

namespace conesplat {

/// Lower bound on per-frustum alpha so empty segments keep a finite logit.
inline constexpr double kFrustumAlphaFloor = 1e-12;

/// One isotropic primitive per conical frustum of a pixel cone, ordered near to far.
struct FrustumGaussianSet {
    std::vector<GaussianPrimitive> primitives;
    int u = 0;
    int v = 0;
    /// Segment boundaries t_0 < ... < t_n.
    std::vector<double> bounds;
};

struct FrustumOptions {
    double lambda_scale = 2.0;
    int sh_order = 0;
};

/// Centers at segment midpoints on the pixel-center ray; opacity is the
/// segment's volume-rendering alpha with density sampled at the midpoint;
/// scale is lambda_scale times the cone radius there.
FrustumGaussianSet frustums_to_gaussians(const RadianceField& field, const Camera& camera, int u,
                                         int v, double t_near, double t_far, int n_segments,
                                         const FrustumOptions& options = {});

/// Renderer settings under which splatting the frustum set reproduces the
/// march: no low-pass, no alpha clamp, no early stop, no culling, black background.
RenderOptions equivalence_render_options();

struct PixelEquivalence {
    int u = 0;
    int v = 0;
    Vec3 splat = Vec3::Zero();
    Vec3 march = Vec3::Zero();
    double max_abs_diff = 0.0;
    std::vector<double> splat_alpha;
    std::vector<double> march_alpha;
};

struct EquivalenceReport {
    double max_abs_diff = 0.0;
    double tolerance = 1e-9;
    bool passed = true;
    std::vector<PixelEquivalence> pixels;

    /// Per-pixel diagnostics including the alpha traces of failing pixels.
    std::string describe() const;
    std::string to_json() const;
};

struct EquivalenceOptions {
    FrustumOptions frustum;
    RenderOptions render = equivalence_render_options();
    double tolerance = 1e-9;
};

/// Renders each probe pixel from only its own frustum primitives and compares
/// with a midpoint-sampled march over the same segments.
EquivalenceReport verify_equivalence(const RadianceField& field, const Camera& camera,
                                     const std::vector<std::pair<int, int>>& pixels, double t_near,
                                     double t_far, int n_segments,
                                     const EquivalenceOptions& options = {});

/// A 3x3 grid of probe pixels spread over the image.
std::vector<std::pair<int, int>> probe_grid(const Camera& camera);

} // namespace conesplat
