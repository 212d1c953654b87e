// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

#include "conesplat/synthetic.hpp"
#include "conesplat/parallel.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace conesplat {

namespace {

Vec3 shape_centroid(const std::vector<Shape>& shapes) {
    Vec3 c = Vec3::Zero();
    for (const auto& s : shapes) {
        c += s.center;
    }
    return c / static_cast<double>(shapes.size());
}

void check_ring(const CameraRing& ring) {
    if (ring.count < 1 || !(ring.radius > 0.0) || !(std::abs(ring.elevation_deg) < 90.0)) {
        throw DomainError("invalid camera ring");
    }
}

} // namespace

void SyntheticSceneSpec::validate() const {
    if (shapes.empty()) {
        throw DomainError("synthetic scene needs at least one shape");
    }
    if (!(bounds.hi.array() > bounds.lo.array()).all()) {
        throw DomainError("synthetic scene bounds must have positive extent");
    }
    if (width < 1 || height < 1 || gt_steps < 1) {
        throw DomainError("invalid synthetic image size or step count");
    }
    check_ring(ring);
    if (ring.count < 3) {
        throw DomainError("a training scene needs at least 3 cameras");
    }
    if (holdout) {
        check_ring(*holdout);
    }
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        const Shape& s = shapes[i];
        Vec3 half = Vec3::Zero();
        if (s.kind == ShapeKind::Sphere) {
            half = Vec3::Constant(s.size.x());
        } else if (s.kind == ShapeKind::Box) {
            half = s.size;
        }
        half.array() += 0.5 * std::max(s.softness, 0.0);
        if (!bounds.contains(s.center - half) || !bounds.contains(s.center + half)) {
            throw DomainError("shape " + std::to_string(i) + " lies outside the field bounds");
        }
    }
}

std::vector<Camera> ring_cameras(const SyntheticSceneSpec& spec, const CameraRing& ring,
                                 std::uint64_t seed) {
    const Vec3 target = ring.target.value_or(shape_centroid(spec.shapes));
    const double focal = spec.focal > 0.0 ? spec.focal : 1.1 * spec.width;
    const double deg = std::numbers::pi / 180.0;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jitter(-1.0, 1.0);
    std::vector<Camera> cams;
    for (int i = 0; i < ring.count; ++i) {
        double az = ring.azimuth_offset_deg + 360.0 * i / ring.count;
        if (spec.azimuth_jitter_deg > 0.0) {
            az += spec.azimuth_jitter_deg * jitter(rng);
        }
        const double el = ring.elevation_deg * deg;
        az *= deg;
        const Vec3 eye = target + ring.radius * Vec3(std::cos(el) * std::cos(az),
                                                     std::cos(el) * std::sin(az), std::sin(el));
        cams.push_back(Camera::look_at(eye, target, Vec3::UnitZ(), focal, spec.width, spec.height));
    }
    return cams;
}

SyntheticScene generate(const SyntheticSceneSpec& spec) {
    spec.validate();
    SyntheticScene out;
    out.field = std::make_shared<AnalyticField>(spec.shapes, spec.bounds);
    out.train.cameras = ring_cameras(spec, spec.ring, spec.seed);
    out.train.background = spec.background;
    if (spec.holdout) {
        out.holdout.cameras = ring_cameras(spec, *spec.holdout, spec.seed + 1);
        out.holdout.background = spec.background;
    }
    for (Dataset* d : {&out.train, &out.holdout}) {
        d->images.resize(d->cameras.size());
        for (std::size_t i = 0; i < d->cameras.size(); ++i) {
            d->images[i] = render_field(*out.field, d->cameras[i], spec.gt_steps, spec.background);
        }
    }
    return out;
}

SyntheticSceneSpec standard_scene_spec() {
    SyntheticSceneSpec spec;

    Shape sphere;
    sphere.kind = ShapeKind::Sphere;
    sphere.center = Vec3(-0.35, 0.2, 0.45);
    sphere.size = Vec3::Constant(0.45);
    sphere.density = 25.0;
    sphere.color = Vec3(0.85, 0.25, 0.2);
    sphere.color_gradient << 0.0, 0.0, 0.6,
                             0.8, 0.0, 0.0,
                             0.0, 0.7, 0.0;
    sphere.softness = 0.06;
    sphere.texture_amplitude = Vec3(0.25, 0.3, 0.3);
    sphere.texture_frequency = 2.5;

    Shape box;
    box.kind = ShapeKind::Box;
    box.center = Vec3(0.45, -0.3, 0.3);
    box.size = Vec3(0.3, 0.35, 0.3);
    box.density = 25.0;
    box.color = Vec3(0.2, 0.7, 0.3);
    box.color_gradient << 0.9, 0.0, 0.0,
                          0.0, 0.0, 0.5,
                          0.0, -0.9, 0.0;
    box.softness = 0.06;
    box.texture_amplitude = Vec3(0.3, 0.25, 0.3);
    box.texture_frequency = 3.0;

    Shape plate;
    plate.kind = ShapeKind::Box;
    plate.center = Vec3(0.0, 0.0, -0.1);
    plate.size = Vec3(1.1, 1.1, 0.08);
    plate.density = 25.0;
    plate.color = Vec3(0.5, 0.5, 0.6);
    plate.color_gradient << 0.35, 0.0, 0.0,
                            0.0, 0.35, 0.0,
                            -0.2, 0.2, 0.0;
    plate.softness = 0.06;
    plate.texture_amplitude = Vec3(0.3, 0.3, 0.25);
    plate.texture_frequency = 2.0;

    spec.shapes = {sphere, box, plate};
    spec.ring.count = 20;
    spec.ring.radius = 4.0;
    spec.ring.elevation_deg = 30.0;
    CameraRing holdout = spec.ring;
    holdout.count = 4;
    holdout.elevation_deg = 40.0;
    holdout.azimuth_offset_deg = 45.0 / 2.0;
    spec.holdout = holdout;
    return spec;
}

} // namespace conesplat
