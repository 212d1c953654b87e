// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

#include "conesplat/analysis.hpp"
#include "conesplat/field.hpp"
#include "conesplat/synthetic.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

using namespace conesplat;

namespace {

Aabb box(double r) { return {Vec3::Constant(-r), Vec3::Constant(r)}; }

Shape sphere(const Vec3& c, double radius, double density, const Vec3& color, double soft = 0.0) {
    Shape s;
    s.kind = ShapeKind::Sphere;
    s.center = c;
    s.size = Vec3::Constant(radius);
    s.density = density;
    s.color = color;
    s.softness = soft;
    return s;
}

Shape slab_from(double z0, double z1, double density) {
    Shape s;
    s.kind = ShapeKind::Slab;
    s.normal = Vec3::UnitZ();
    s.size = Vec3(z0, z1, 0.0);
    s.density = density;
    s.color = Vec3(0.3, 0.6, 0.9);
    return s;
}

Shape constant_box(double density, double r) {
    Shape s;
    s.kind = ShapeKind::Box;
    s.size = Vec3::Constant(r);
    s.density = density;
    s.color = Vec3(0.2, 0.4, 0.8);
    return s;
}

const Ray kAxis{Vec3::Zero(), Vec3::UnitZ()};

} // namespace

TEST(March, EmptyFieldIsBlackAndClear) {
    const AnalyticField f({}, box(10));
    const MarchResult m = march(f, kAxis, 0.1, 5.0, 64);
    EXPECT_EQ(m.color, Vec3::Zero());
    EXPECT_EQ(m.final_transmittance, 1.0);
}

TEST(March, HalfAlphaSegment) {
    const double delta = 0.5;
    const AnalyticField f({constant_box(std::log(2.0) / delta, 100.0)}, box(100));
    const MarchResult m = march(f, kAxis, 1.0, 1.0 + delta, 1);
    EXPECT_NEAR(m.alpha[0], 0.5, 1e-15);
}

TEST(March, OpaqueSphereChordAbsorption) {
    const Vec3 c(0, 0, 3);
    const AnalyticField f({sphere(c, 1.0, 1e4, Vec3(1, 0, 0))}, box(10));
    const MarchResult m = march(f, kAxis, 0.1, 6.0, 2048);
    EXPECT_LT(m.final_transmittance, 1e-6);
    EXPECT_NEAR((m.color - Vec3(1, 0, 0) * (1.0 - m.final_transmittance)).norm(), 0.0, 1e-3);
}

TEST(March, TransmittanceIsProductOfAlphas) {
    std::mt19937_64 rng(3);
    const AnalyticField f({sphere(Vec3(0.1, 0, 2), 0.8, 3.0, Vec3(0.5, 0.5, 0.2), 0.3),
                           sphere(Vec3(-0.1, 0.1, 3), 0.7, 5.0, Vec3(0.1, 0.9, 0.2), 0.2)},
                          box(10));
    const MarchResult m = march(f, kAxis, 0.2, 5.0, 300);
    double t = 1.0;
    for (std::size_t i = 0; i < m.alpha.size(); ++i) {
        EXPECT_GE(m.alpha[i], 0.0);
        EXPECT_LE(m.alpha[i], 1.0);
        EXPECT_NEAR(m.transmittance[i], t, 1e-12);
        if (i > 0) {
            EXPECT_LE(m.transmittance[i], m.transmittance[i - 1]);
        }
        t *= 1.0 - m.alpha[i];
    }
    EXPECT_NEAR(m.final_transmittance, t, 1e-12);
    EXPECT_EQ(m.transmittance.front(), 1.0);
}

TEST(March, ConstantDensityTelescopes) {
    const double sigma = 0.7;
    const AnalyticField f({constant_box(sigma, 100.0)}, box(100));
    for (const int n : {1, 7, 64, 1000}) {
        const MarchResult m = march(f, kAxis, 0.5, 4.0, n);
        EXPECT_NEAR(m.final_transmittance, std::exp(-sigma * 3.5), 1e-9);
    }
}

TEST(March, InvalidIntervalThrows) {
    const AnalyticField f({}, box(1));
    EXPECT_THROW(march(f, kAxis, 0.0, 1.0, 4), DomainError);
    EXPECT_THROW(march(f, kAxis, 2.0, 1.0, 4), DomainError);
    EXPECT_THROW(march(f, kAxis, 0.1, 1.0, 0), DomainError);
}

TEST(MedianDepth, EmptyFieldHasNone) {
    const AnalyticField f({}, box(10));
    EXPECT_FALSE(median_depth(f, kAxis, 0.1, 10.0, 256));
}

TEST(MedianDepth, OpaqueSlabWithinOneStep) {
    const AnalyticField f({slab_from(5.0, 1e3, 1e4)}, box(20));
    const double delta = (10.0 - 0.1) / 1024;
    const auto t = median_depth(f, kAxis, 0.1, 10.0, 1024);
    ASSERT_TRUE(t);
    EXPECT_GE(*t, 5.0 - delta);
    EXPECT_LE(*t, 5.0 + delta);
}

TEST(MedianDepth, NoCrossingWhenMediumStaysAboveHalf) {
    // Total optical depth -ln(0.6): transmittance tends to 0.6, never reaching 0.5.
    const double len = 9.9;
    const AnalyticField f({constant_box(-std::log(0.6) / len, 100.0)}, box(100));
    EXPECT_FALSE(median_depth(f, kAxis, 0.1, 10.0, 512));
}

TEST(MedianDepth, StableUnderRefinement) {
    const AnalyticField f({slab_from(3.3, 1e3, 50.0)}, box(20));
    const double coarse_delta = (8.0 - 0.1) / 64;
    const auto a = median_depth(f, kAxis, 0.1, 8.0, 64);
    for (const int n : {128, 512, 4096}) {
        const auto b = median_depth(f, kAxis, 0.1, 8.0, n);
        ASSERT_TRUE(a && b);
        EXPECT_LE(std::abs(*a - *b), coarse_delta);
    }
}

TEST(MedianDepth, MatchesMarchTransmittanceRule) {
    const AnalyticField f({sphere(Vec3(0, 0, 3), 1.0, 2.0, Vec3::Ones(), 0.4)}, box(10));
    const MarchResult m = march(f, kAxis, 0.1, 6.0, 400);
    const auto t = median_depth(f, kAxis, 0.1, 6.0, 400);
    ASSERT_TRUE(t);
    for (std::size_t k = 0; k < m.t.size(); ++k) {
        const double after = k + 1 < m.t.size() ? m.transmittance[k + 1] : m.final_transmittance;
        if (m.transmittance[k] > 0.5 && after <= 0.5) {
            EXPECT_EQ(*t, m.t[k]);
            return;
        }
    }
    FAIL() << "march never crossed 0.5";
}

TEST(RenderField, EmptyFieldIsBlack) {
    const AnalyticField f({}, box(2));
    const Camera cam = Camera::look_at(Vec3(0, -5, 0), Vec3::Zero(), Vec3::UnitZ(), 20.0, 16, 16);
    const ImageBuffer img = render_field(f, cam, 32);
    for (const double v : img.data()) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(RenderField, SphereSilhouetteRadius) {
    const double r = 1.0, dist = 5.0, focal = 60.0;
    const int size = 96;
    const AnalyticField f({sphere(Vec3::Zero(), r, 1e3, Vec3::Ones())}, box(1.5));
    const Camera cam = Camera::look_at(Vec3(0, -dist, 0), Vec3::Zero(), Vec3::UnitZ(), focal, size, size);
    const ImageBuffer img = render_field(f, cam, 512);
    // Tangent-cone silhouette: radius f * tan(asin(r / d)).
    const double expect = focal * std::tan(std::asin(r / dist));
    double area = 0.0;
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            area += img.at(x, y, 0);
        }
    }
    EXPECT_NEAR(std::sqrt(area / M_PI), expect, 1.0);
}

TEST(RenderField, DoublingStepsConvergesForSmoothField) {
    const AnalyticField f({sphere(Vec3(0.2, 0, 0), 0.8, 4.0, Vec3(0.9, 0.3, 0.1), 0.4)}, box(1.5));
    const Camera cam = Camera::look_at(Vec3(0, -4, 1), Vec3::Zero(), Vec3::UnitZ(), 30.0, 24, 24);
    const ImageBuffer a = render_field(f, cam, 1024);
    const ImageBuffer b = render_field(f, cam, 2048);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    }
    EXPECT_LT(worst, 1e-3);
}

TEST(RenderField, BackgroundFillsResidualTransmittance) {
    const AnalyticField f({}, box(1));
    const Camera cam = Camera::look_at(Vec3(0, -4, 0), Vec3::Zero(), Vec3::UnitZ(), 10.0, 4, 4);
    const ImageBuffer img = render_field(f, cam, 8, Vec3(0.2, 0.3, 0.4));
    EXPECT_EQ(img.pixel(1, 2), Vec3(0.2, 0.3, 0.4));
}

TEST(DenseGrid, InitialDensityAndColor) {
    const DenseGridField g(box(1), {4, 8});
    const FieldSample s = g.sample(Vec3(0.1, 0.2, -0.3), Vec3::Zero());
    EXPECT_NEAR(s.density, 1e-2, 1e-9);
    EXPECT_NEAR((s.rgb - Vec3::Constant(0.5)).norm(), 0.0, 1e-9);
    EXPECT_EQ(g.sample(Vec3(2, 0, 0), Vec3::Zero()).density, 0.0);
}

TEST(DenseGrid, ResolutionsMustIncrease) {
    EXPECT_THROW(DenseGridField(box(1), {8, 8}), DomainError);
    EXPECT_THROW(DenseGridField(box(1), {}), DomainError);
}

TEST(DenseGrid, TrilinearIsContinuousAndExactOnLinearData) {
    DenseGridField g(box(1), {5});
    // Vertex values set to a linear function reproduce it everywhere inside.
    const int n = 5;
    auto& p = g.parameters();
    for (int z = 0; z < n; ++z) {
        for (int y = 0; y < n; ++y) {
            for (int x = 0; x < n; ++x) {
                const Vec3 pos = Vec3(x, y, z) / (n - 1) * 2.0 - Vec3::Ones();
                const std::size_t base = static_cast<std::size_t>(((z * n + y) * n + x) * 4);
                p[base] = static_cast<float>(0.5 * pos.x() - 0.25 * pos.y() + pos.z());
            }
        }
    }
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        const Vec3 q(u(rng), u(rng), u(rng));
        const auto l = g.logits(q);
        ASSERT_TRUE(l);
        EXPECT_NEAR((*l)[0], 0.5 * q.x() - 0.25 * q.y() + q.z(), 1e-6);
    }
    // Continuity across a cell face.
    const double face = -1.0 + 2.0 / 4.0;
    EXPECT_NEAR((*g.logits(Vec3(face - 1e-12, 0.3, 0.1)))[0], (*g.logits(Vec3(face + 1e-12, 0.3, 0.1)))[0], 1e-9);
}

TEST(DenseGrid, SaveLoadRoundTrip) {
    DenseGridField g(box(1.5), {4, 6});
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    for (auto& v : g.parameters()) {
        v = u(rng);
    }
    const auto path = std::filesystem::temp_directory_path() / "conesplat_grid_roundtrip.bin";
    g.save(path);
    const DenseGridField h = DenseGridField::load(path);
    EXPECT_TRUE(g == h);
    std::filesystem::remove(path);
}

TEST(TrainGrid, ZeroIterationsLeavesFieldUnchanged) {
    DenseGridField g(box(1), {4});
    const DenseGridField before = g;
    Dataset d;
    d.cameras.push_back(Camera::look_at(Vec3(0, -4, 0), Vec3::Zero(), Vec3::UnitZ(), 10.0, 4, 4));
    d.images.emplace_back(4, 4);
    GridTrainConfig c;
    c.iterations = 0;
    train_grid(g, d, c);
    EXPECT_TRUE(g == before);
}

TEST(TrainGrid, SelfDistillationLossDecreases) {
    // Target: the rendering of a fixed random grid, so the target is exactly realizable.
    DenseGridField teacher(box(1), {6});
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    for (std::size_t i = 0; i < teacher.parameters().size(); ++i) {
        teacher.parameters()[i] = i % 4 == 0 ? std::log(1.5f) + u(rng) : 2.0f * u(rng);
    }
    Dataset d;
    for (int k = 0; k < 4; ++k) {
        const double a = k * M_PI / 2.0;
        d.cameras.push_back(Camera::look_at(Vec3(4 * std::cos(a), 4 * std::sin(a), 1.0), Vec3::Zero(),
                                            Vec3::UnitZ(), 14.0, 12, 12));
        d.images.push_back(render_field(teacher, d.cameras.back(), 48));
    }
    DenseGridField student(box(1), {6});
    GridTrainConfig c;
    c.iterations = 150;
    c.batch_rays = 128;
    c.n_steps = 48;
    c.learning_rate = 5e-2;
    const GridTrainReport r = train_grid(student, d, c);
    auto window = [&](std::size_t from) {
        double s = 0.0;
        for (std::size_t i = from; i < from + 30; ++i) {
            s += r.losses[i];
        }
        return s / 30.0;
    };
    EXPECT_LT(window(60), window(0));
    EXPECT_LT(window(120), window(60));
}

TEST(TrainGrid, SphereHeldOutPsnrFloor) {
    // 20-view analytic sphere, one 64^3 level, 2k iterations; images, batch and
    // march steps scaled down for the desk. Achieved 29.32 dB when pinned.
    SyntheticSceneSpec spec;
    Shape s;
    s.kind = ShapeKind::Sphere;
    s.size = Vec3::Constant(0.8);
    s.density = 20.0;
    s.color = Vec3(0.9, 0.5, 0.2);
    s.softness = 0.1;
    spec.shapes = {s};
    spec.bounds = {Vec3::Constant(-1.2), Vec3::Constant(1.2)};
    spec.ring.count = 20;
    spec.ring.radius = 3.5;
    CameraRing holdout = spec.ring;
    holdout.count = 1;
    holdout.azimuth_offset_deg = 9.0;
    spec.holdout = holdout;
    spec.width = spec.height = 32;
    spec.gt_steps = 512;
    const SyntheticScene sc = generate(spec);

    DenseGridField field(spec.bounds, {64});
    GridTrainConfig c;
    c.iterations = 2000;
    c.batch_rays = 256;
    c.n_steps = 128;
    c.seed = 3;
    train_grid(field, sc.train, c);
    const ImageBuffer img = render_field(field, sc.holdout.cameras[0], c.n_steps, spec.background);
    const double db = psnr(img, sc.holdout.images[0]);
    EXPECT_GT(db, 25.0);
    EXPECT_GE(db, 29.0);
}

TEST(TrainGrid, DivergenceReportsIteration) {
    DenseGridField g(box(1), {4});
    Dataset d;
    d.cameras.push_back(Camera::look_at(Vec3(0, -4, 0), Vec3::Zero(), Vec3::UnitZ(), 10.0, 4, 4));
    d.images.emplace_back(4, 4, std::numeric_limits<double>::quiet_NaN());
    GridTrainConfig c;
    c.iterations = 3;
    c.batch_rays = 8;
    c.n_steps = 8;
    try {
        train_grid(g, d, c);
        FAIL() << "expected divergence";
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("iteration 0"), std::string::npos);
    }
}

TEST(ProbeRay, ReturnsMedianDepthAndColor) {
    const AnalyticField f({sphere(Vec3(0, 0, 3), 1.0, 1e3, Vec3(0.2, 0.8, 0.4))}, box(5));
    const auto p = probe_ray(f, kAxis, 1024);
    ASSERT_TRUE(p);
    EXPECT_NEAR(p->median_depth, 2.0, 10.0 / 1024 + 1e-9);
    EXPECT_NEAR((p->color - Vec3(0.2, 0.8, 0.4)).norm(), 0.0, 1e-3);
}
