// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "conesplat/field.hpp"
#include "conesplat/types.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

namespace conesplat {

/// Cameras evenly spaced in azimuth around `target`, world z up.
struct CameraRing {
    int count = 20;
    double radius = 4.0;
    /// Elevation above the target in degrees.
    double elevation_deg = 25.0;
    /// Azimuth of the first camera in degrees.
    double azimuth_offset_deg = 0.0;
    /// Defaults to the centroid of the shape centers.
    std::optional<Vec3> target;
};

struct SyntheticSceneSpec {
    std::vector<Shape> shapes;
    Aabb bounds{Vec3::Constant(-1.5), Vec3::Constant(1.5)};
    CameraRing ring;
    /// Extra cameras kept out of training.
    std::optional<CameraRing> holdout;
    int width = 128;
    int height = 128;
    /// Focal length in pixels; <= 0 picks 1.1 * width.
    double focal = 0.0;
    Vec3 background = Vec3::Zero();
    /// Ground-truth march resolution.
    int gt_steps = 2048;
    /// Random azimuth jitter in degrees applied per camera (0 disables).
    double azimuth_jitter_deg = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticScene {
    std::shared_ptr<AnalyticField> field;
    Dataset train;
    Dataset holdout;
};

std::vector<Camera> ring_cameras(const SyntheticSceneSpec& spec, const CameraRing& ring,
                                 std::uint64_t seed);

SyntheticScene generate(const SyntheticSceneSpec& spec);

/// Three soft-edged textured shapes, 20 training views and 4 held-out views at 128x128.
SyntheticSceneSpec standard_scene_spec();

} // namespace conesplat
