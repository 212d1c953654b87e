// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

// Small shared scenes for tests that need a dataset.

#pragma once

#include "conesplat/init.hpp"
#include "conesplat/synthetic.hpp"

namespace fixture {

using namespace conesplat;

inline SyntheticSceneSpec tiny_spec(int size = 24, int views = 6) {
    SyntheticSceneSpec spec;
    Shape s;
    s.kind = ShapeKind::Sphere;
    s.size = Vec3::Constant(0.7);
    s.density = 30.0;
    s.softness = 0.1;
    s.color = Vec3(0.9, 0.2, 0.2);
    s.color_gradient = 0.2 * Mat3::Identity();
    Shape b;
    b.kind = ShapeKind::Box;
    b.center = Vec3(0.5, -0.4, 0.3);
    b.size = Vec3(0.3, 0.3, 0.3);
    b.density = 30.0;
    b.softness = 0.1;
    b.color = Vec3(0.2, 0.3, 0.9);
    spec.shapes = {s, b};
    spec.ring.count = views;
    spec.ring.radius = 4.0;
    spec.width = size;
    spec.height = size;
    spec.gt_steps = 256;
    return spec;
}

inline const SyntheticScene& tiny_scene() {
    static const SyntheticScene scene = generate(tiny_spec());
    return scene;
}

inline GaussianScene tiny_init(std::size_t n = 150, int sh_order = 1, std::uint64_t seed = 1) {
    InitConfig cfg;
    cfg.p_init = n;
    cfg.sh_order = sh_order;
    cfg.n_steps = 256;
    cfg.seed = seed;
    return initialize_scene(*tiny_scene().field, tiny_scene().train.cameras, cfg);
}

} // namespace fixture
