// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

#include "conesplat/init.hpp"
#include "conesplat/sh.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace conesplat;

namespace {

std::vector<Camera> ring(int n, int size, double focal, double dist = 5.0) {
    std::vector<Camera> cams;
    for (int i = 0; i < n; ++i) {
        const double a = 2.0 * M_PI * i / n;
        cams.push_back(Camera::look_at(Vec3(dist * std::cos(a), dist * std::sin(a), 1.5), Vec3::Zero(),
                                       Vec3::UnitZ(), focal, size, size));
    }
    return cams;
}

AnalyticField opaque_sphere(double r) {
    Shape s;
    s.kind = ShapeKind::Sphere;
    s.size = Vec3::Constant(r);
    s.density = 1e4;
    s.color = Vec3(0.8, 0.3, 0.1);
    return AnalyticField({s}, {Vec3::Constant(-1.5), Vec3::Constant(1.5)});
}

} // namespace

TEST(SamplePixels, SinglePixelDomain) {
    const std::vector<Camera> cams = {oracle::test_camera(1, 1, 1.0)};
    const auto s = sample_pixels_uniform(cams, 1, 7);
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s[0], (PixelSample{0, 0, 0}));
}

TEST(SamplePixels, TwoImagesSplitEvenlyWithinBinomialBound) {
    const std::vector<Camera> cams = {oracle::test_camera(16, 16, 10.0), oracle::test_camera(16, 16, 10.0)};
    const std::size_t n = 1'000'000;
    const auto s = sample_pixels_uniform(cams, n, 123);
    std::size_t first = 0;
    for (const auto& p : s) {
        first += p.image == 0;
        ASSERT_LT(p.u, 16);
        ASSERT_LT(p.v, 16);
    }
    const double sigma = std::sqrt(n * 0.25);
    EXPECT_LT(std::abs(static_cast<double>(first) - n / 2.0), 4.0 * sigma);
}

TEST(SamplePixels, UnequalImagesWeightedByPixelCount) {
    const std::vector<Camera> cams = {oracle::test_camera(30, 10, 10.0), oracle::test_camera(10, 10, 10.0)};
    const std::size_t n = 400'000;
    const auto s = sample_pixels_uniform(cams, n, 5);
    std::size_t first = 0;
    for (const auto& p : s) {
        first += p.image == 0;
    }
    const double p0 = 0.75;
    EXPECT_LT(std::abs(static_cast<double>(first) - n * p0), 4.0 * std::sqrt(n * p0 * (1 - p0)));
}

TEST(SamplePixels, DeterministicUnderSeed) {
    const std::vector<Camera> cams = {oracle::test_camera(9, 7, 5.0), oracle::test_camera(4, 5, 5.0)};
    EXPECT_EQ(sample_pixels_uniform(cams, 1000, 42), sample_pixels_uniform(cams, 1000, 42));
    EXPECT_NE(sample_pixels_uniform(cams, 1000, 42), sample_pixels_uniform(cams, 1000, 43));
}

TEST(SamplePixels, EmptyDatasetThrows) {
    EXPECT_THROW(sample_pixels_uniform({}, 10, 0), DomainError);
    const std::vector<Camera> cams = {oracle::test_camera(2, 2, 1.0)};
    EXPECT_THROW(sample_pixels_uniform(cams, 0, 0), DomainError);
}

TEST(Knn, TetrahedronEdgeLength) {
    const std::vector<Vec3> pts = {Vec3(1, 1, 1), Vec3(1, -1, -1), Vec3(-1, 1, -1), Vec3(-1, -1, 1)};
    for (const double d : knn_mean_distance(pts, 3)) {
        EXPECT_NEAR(d, std::sqrt(8.0), 1e-12);
    }
}

TEST(Knn, CollinearHandEnumeration) {
    const std::vector<Vec3> pts = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(3, 0, 0), Vec3(4, 0, 0)};
    const auto d = knn_mean_distance(pts, 3);
    EXPECT_NEAR(d[0], 2.0, 1e-12);
    EXPECT_NEAR(d[2], (1 + 1 + 2) / 3.0, 1e-12);
    EXPECT_NEAR(d[4], 2.0, 1e-12);
}

TEST(Knn, DuplicatesGiveZeroContributions) {
    const std::vector<Vec3> pts = {Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3(3, 0, 0)};
    EXPECT_NEAR(knn_mean_distance(pts, 3)[0], 0.0, 1e-15);
}

TEST(Knn, MatchesBruteForce) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Vec3> pts;
    for (int i = 0; i < 300; ++i) {
        pts.emplace_back(u(rng), u(rng), u(rng));
    }
    const auto d = knn_mean_distance(pts, 3);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::vector<double> all;
        for (std::size_t j = 0; j < pts.size(); ++j) {
            if (j != i) {
                all.push_back((pts[i] - pts[j]).norm());
            }
        }
        std::sort(all.begin(), all.end());
        EXPECT_NEAR(d[i], (all[0] + all[1] + all[2]) / 3.0, 1e-12);
    }
}

TEST(Knn, TooFewPointsThrows) {
    const std::vector<Vec3> pts = {Vec3::Zero(), Vec3::Ones(), Vec3::UnitX()};
    EXPECT_THROW(knn_mean_distance(pts, 3), DomainError);
}

TEST(Initialize, PrimitivesLieOnSphereSurface) {
    const double r = 1.0;
    const AnalyticField field = opaque_sphere(r);
    const auto cams = ring(6, 24, 30.0);
    InitConfig cfg;
    cfg.p_init = 400;
    cfg.n_steps = 512;
    cfg.seed = 3;
    const GaussianScene scene = initialize_scene(field, cams, cfg);
    ASSERT_EQ(scene.primitives.size(), 400u);
    // March interval spans at most the box diagonal; one step is that over n_steps.
    const double step = std::sqrt(3.0) * 3.0 / cfg.n_steps;
    for (const auto& p : scene.primitives) {
        EXPECT_LE(std::abs(p.position.norm() - r), step);
    }
}

TEST(Initialize, OpacityRotationAndViewIndependentColor) {
    const AnalyticField field = opaque_sphere(1.0);
    const auto cams = ring(4, 16, 20.0);
    InitConfig cfg;
    cfg.p_init = 100;
    cfg.sh_order = 2;
    const GaussianScene scene = initialize_scene(field, cams, cfg);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n;
    for (const auto& p : scene.primitives) {
        EXPECT_NEAR(sigmoid(p.opacity_logit), 0.1, 1e-9);
        EXPECT_EQ(p.rotation, Vec4(1, 0, 0, 0));
        EXPECT_GT(p.scale().minCoeff(), 0.0);
        for (std::size_t k = 3; k < p.sh.size(); ++k) {
            EXPECT_EQ(p.sh[k], 0.0);
        }
        const Vec3 c0 = eval_sh(p.sh, Vec3::UnitZ(), ShOrder(2));
        const Vec3 c1 = eval_sh(p.sh, Vec3(n(rng), n(rng), n(rng)).normalized(), ShOrder(2));
        EXPECT_EQ(c0, c1);
        EXPECT_NEAR((c0 - Vec3(0.8, 0.3, 0.1)).norm(), 0.0, 1e-3);
    }
}

TEST(Initialize, EmptyFieldFails) {
    const AnalyticField field({}, {Vec3::Constant(-1), Vec3::Constant(1)});
    InitConfig cfg;
    cfg.p_init = 50;
    EXPECT_THROW(initialize_scene(field, ring(3, 8, 10.0), cfg), DomainError);
}

TEST(Initialize, BudgetCapsTargetCount) {
    InitConfig cfg;
    cfg.p_init = 1000;
    cfg.budget = 120;
    EXPECT_EQ(cfg.target_count(), 120u);
    const GaussianScene scene = initialize_scene(opaque_sphere(1.0), ring(4, 16, 20.0), cfg);
    EXPECT_EQ(scene.primitives.size(), 120u);
}

TEST(Initialize, MissedRaysAreResampled) {
    // A small sphere covers a fraction of the pixels; resampling still fills the target.
    const AnalyticField field = opaque_sphere(0.4);
    InitConfig cfg;
    cfg.p_init = 200;
    // About a quarter of the pixels hit, so the first round of 200 draws falls short.
    const GaussianScene scene = initialize_scene(field, ring(4, 16, 60.0), cfg);
    EXPECT_EQ(scene.primitives.size(), 200u);
}

TEST(Initialize, KnnScalesMatchOracle) {
    InitConfig cfg;
    cfg.p_init = 150;
    cfg.seed = 9;
    const GaussianScene scene = initialize_scene(opaque_sphere(1.0), ring(4, 16, 20.0), cfg);
    std::vector<Vec3> pos;
    for (const auto& p : scene.primitives) {
        pos.push_back(p.position);
    }
    for (std::size_t i = 0; i < pos.size(); ++i) {
        std::vector<double> d;
        for (std::size_t j = 0; j < pos.size(); ++j) {
            if (i != j) {
                d.push_back((pos[i] - pos[j]).norm());
            }
        }
        std::sort(d.begin(), d.end());
        const double expect = std::max(1e-6, (d[0] + d[1] + d[2]) / 3.0);
        EXPECT_NEAR(scene.primitives[i].scale().x(), expect, 1e-12 * std::max(1.0, expect));
    }
}

TEST(Initialize, ConeScaleSource) {
    InitConfig cfg;
    cfg.p_init = 50;
    cfg.scale_source = ScaleSource::Cone;
    const auto cams = ring(3, 16, 20.0);
    const GaussianScene scene = initialize_scene(opaque_sphere(1.0), cams, cfg);
    for (const auto& p : scene.primitives) {
        // Footprint at distance ~4 with focal 20: about 2 * 4 / 20.
        EXPECT_GT(p.scale().x(), 0.2);
        EXPECT_LT(p.scale().x(), 0.6);
    }
}

TEST(Initialize, BitReproducible) {
    InitConfig cfg;
    cfg.p_init = 80;
    cfg.seed = 77;
    const auto cams = ring(4, 16, 20.0);
    const GaussianScene a = initialize_scene(opaque_sphere(1.0), cams, cfg);
    const GaussianScene b = initialize_scene(opaque_sphere(1.0), cams, cfg);
    EXPECT_EQ(a.primitives, b.primitives);
}
