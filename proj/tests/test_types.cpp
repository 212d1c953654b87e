// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

#include "conesplat/types.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <numbers>
#include <random>

using namespace conesplat;

namespace {

Camera camera_100() {
    Camera c;
    c.fx = c.fy = 100.0;
    c.cx = c.cy = 50.0;
    c.width = c.height = 200;
    return c;
}

} // namespace

TEST(PixelRay, PrincipalPointMapsToOpticalAxis) {
    const Ray r = pixel_ray(camera_100(), 50.0, 50.0);
    EXPECT_NEAR((r.direction - Vec3(0, 0, 1)).norm(), 0.0, 1e-15);
}

TEST(PixelRay, OffAxisPixelFollowsPinholeModel) {
    const Ray r = pixel_ray(camera_100(), 150.0, 50.0);
    EXPECT_NEAR((r.direction - Vec3(1, 0, 1).normalized()).norm(), 0.0, 1e-15);
    EXPECT_NEAR(r.direction.norm(), 1.0, 1e-12);
}

TEST(PixelRay, OriginIsCameraCenter) {
    Camera c = camera_100();
    // World-to-camera translation of a camera centred at (1, 2, 3) with identity rotation.
    c.translation = -Vec3(1, 2, 3);
    const Ray r = pixel_ray(c, 10.0, 20.0);
    EXPECT_NEAR((r.origin - Vec3(1, 2, 3)).norm(), 0.0, 1e-15);
}

TEST(PixelRay, OutOfRangeThrows) {
    EXPECT_THROW(pixel_ray(camera_100(), -1.0, 5.0), DomainError);
    EXPECT_THROW(pixel_ray(camera_100(), 5.0, 200.0), DomainError);
}

TEST(PixelRay, PixelCenterUsesHalfOffset) {
    const Camera c = camera_100();
    const Ray a = pixel_center_ray(c, 49, 49);
    const Ray b = pixel_ray(c, 49.5, 49.5);
    EXPECT_EQ(a.direction, b.direction);
}

TEST(PixelRay, AdjacentPixelAngleBound) {
    const Camera c = camera_100();
    const Vec3 d0 = pixel_ray(c, 50.0, 50.0).direction;
    for (const auto& [dx, dy] : {std::pair{1, 0}, {0, 1}, {1, 1}, {-1, 1}}) {
        const Vec3 d1 = pixel_ray(c, 50.0 + dx, 50.0 + dy).direction;
        const double angle = std::acos(std::clamp(d0.dot(d1), -1.0, 1.0));
        EXPECT_LE(angle, std::atan(std::sqrt(2.0) / 100.0) + 1e-12);
    }
}

TEST(ConeRadius, CenterPixelMatchesInverseFocal) {
    const double r = cone_radius(camera_100(), 50.0, 50.0, 10.0);
    EXPECT_NEAR(r, 0.1, 1e-4);
}

TEST(ConeRadius, LinearInDistance) {
    const Camera c = camera_100();
    EXPECT_DOUBLE_EQ(cone_radius(c, 37.5, 12.5, 20.0), 2.0 * cone_radius(c, 37.5, 12.5, 10.0));
}

TEST(ConeRadius, OffAxisIsSmaller) {
    const Camera c = camera_100();
    EXPECT_LT(cone_radius(c, 190.0, 190.0, 10.0), 10.0 / 100.0);
}

TEST(ConeRadius, MatchesExplicitFormula) {
    const Camera c = camera_100();
    const double u = 120.25, v = 33.5, t = 3.0;
    auto dir = [&](double a, double b) {
        return Vec3((a - c.cx) / c.fx, (b - c.cy) / c.fy, 1.0).normalized();
    };
    const Vec3 d = dir(u, v);
    const double expect = t * ((dir(u + 1, v) - d).norm() + (dir(u, v + 1) - d).norm()) / 2.0;
    EXPECT_NEAR(cone_radius(c, u, v, t), expect, 1e-14);
}

TEST(ConeRadius, BorderPixelExtrapolates) {
    const Camera c = camera_100();
    EXPECT_GT(pixel_cone_radius(c, 199, 199, 1.0), 0.0);
}

TEST(ConeRadius, NonPositiveDistanceThrows) {
    EXPECT_THROW(cone_radius(camera_100(), 5.0, 5.0, 0.0), DomainError);
    EXPECT_THROW(cone_radius(camera_100(), 5.0, 5.0, -1.0), DomainError);
}

TEST(Covariance, IdentityForUnitScales) {
    const GaussianPrimitive p = make_primitive(0);
    EXPECT_TRUE(covariance(p).isApprox(Mat3::Identity(), 1e-15));
}

TEST(Covariance, SquaresScales) {
    GaussianPrimitive p = make_primitive(0);
    p.log_scale = Vec3(std::log(2.0), 0.0, 0.0);
    EXPECT_TRUE(covariance(p).isApprox(Vec3(4, 1, 1).asDiagonal().toDenseMatrix(), 1e-14));
}

TEST(Covariance, QuarterTurnAboutZSwapsAxes) {
    GaussianPrimitive p = make_primitive(0);
    p.log_scale = Vec3(std::log(2.0), 0.0, 0.0);
    const double h = std::numbers::pi / 4.0;
    p.rotation = Vec4(std::cos(h), 0.0, 0.0, std::sin(h));
    // Explicit R diag(4,1,1) R^T with R the 90 degree z rotation.
    Mat3 r;
    r << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    const Mat3 expect = r * Vec3(4, 1, 1).asDiagonal() * r.transpose();
    EXPECT_TRUE(covariance(p).isApprox(expect, 1e-14));
    EXPECT_TRUE(expect.isApprox(Vec3(1, 4, 1).asDiagonal().toDenseMatrix(), 1e-14));
}

TEST(Covariance, SpectrumEqualsSquaredScales) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        GaussianPrimitive p = make_primitive(0);
        p.log_scale = Vec3(u(rng), u(rng), u(rng));
        p.rotation = Vec4(u(rng), u(rng), u(rng), u(rng));
        const Mat3 sigma = covariance(p);
        EXPECT_TRUE(sigma.isApprox(sigma.transpose(), 1e-14));
        Eigen::SelfAdjointEigenSolver<Mat3> eig(sigma);
        Vec3 expect = (2.0 * p.log_scale).array().exp();
        std::sort(expect.data(), expect.data() + 3);
        EXPECT_NEAR((eig.eigenvalues() - expect).norm(), 0.0, 1e-12 * expect.maxCoeff());
    }
}

TEST(Quaternion, MatchesHandWrittenFormula) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const Vec4 q(u(rng), u(rng), u(rng), u(rng));
        EXPECT_TRUE(quaternion_to_rotation(q).isApprox(oracle::quat_matrix(q), 1e-13));
    }
}

TEST(Camera, ValidateRejectsBadIntrinsics) {
    Camera c = camera_100();
    c.fx = 0.0;
    EXPECT_THROW(c.validate(), DomainError);
    c = camera_100();
    c.cx = 200.0;
    EXPECT_THROW(c.validate(), DomainError);
    c = camera_100();
    c.rotation(0, 0) = 2.0;
    EXPECT_THROW(c.validate(), DomainError);
}

TEST(Camera, LookAtCentersTarget) {
    const Vec3 target(0.3, -0.2, 0.5);
    const Camera c = Camera::look_at(Vec3(4, 1, 2), target, Vec3::UnitZ(), 120.0, 64, 48);
    c.validate();
    const Vec3 p = c.to_camera(target);
    EXPECT_GT(p.z(), 0.0);
    EXPECT_NEAR(c.fx * p.x() / p.z() + c.cx, c.cx, 1e-9);
    EXPECT_NEAR(c.fy * p.y() / p.z() + c.cy, c.cy, 1e-9);
    EXPECT_NEAR((c.center() - Vec3(4, 1, 2)).norm(), 0.0, 1e-12);
}

TEST(Primitive, DcColorDecodesExactly) {
    GaussianPrimitive p = make_primitive(1);
    set_dc_color(p, Vec3(0.2, 0.7, 1.3));
    EXPECT_NEAR((oracle::sh_color(p, 1, Vec3(0.3, -1, 2)) - Vec3(0.2, 0.7, 1.3)).norm(), 0.0, 1e-14);
    EXPECT_NEAR(p.opacity(), 0.5, 1e-15);
}

TEST(ImageBuffer, RowMajorLayout) {
    ImageBuffer img(3, 2);
    img.set_pixel(2, 1, Vec3(1, 2, 3));
    EXPECT_EQ(img.data()[(1 * 3 + 2) * 3 + 1], 2.0);
    EXPECT_EQ(img.pixel(2, 1), Vec3(1, 2, 3));
    EXPECT_THROW(ImageBuffer(-1, 2), DomainError);
}
