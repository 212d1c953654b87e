// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

// Reference implementations used only by tests. They follow the textbook
// formulas directly and share no code with the library beyond data types.

#pragma once

#include "conesplat/field.hpp"
#include "conesplat/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace oracle {

using namespace conesplat;

inline Mat3 quat_matrix(Vec4 q) {
    q.normalize();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

// Real SH up to order 3 written out by hand (3DGS constants and sign convention).
inline Vec3 sh_color(const GaussianPrimitive& p, int order, const Vec3& dir_in) {
    const Vec3 d = dir_in.normalized();
    const double x = d.x(), y = d.y(), z = d.z();
    const double k1 = 0.4886025119029199;
    const double basis[16] = {0.28209479177387814,
                              -k1 * y,
                              k1 * z,
                              -k1 * x,
                              1.0925484305920792 * x * y,
                              -1.0925484305920792 * y * z,
                              0.31539156525252005 * (3 * z * z - 1),
                              -1.0925484305920792 * x * z,
                              0.5462742152960396 * (x * x - y * y),
                              -0.5900435899266435 * y * (3 * x * x - y * y),
                              2.890611442640554 * x * y * z,
                              -0.4570457994644658 * y * (5 * z * z - 1),
                              0.3731763325901154 * z * (5 * z * z - 3),
                              -0.4570457994644658 * x * (5 * z * z - 1),
                              1.445305721320277 * z * (x * x - y * y),
                              -0.5900435899266435 * x * (x * x - 3 * y * y)};
    const int used = (order + 1) * (order + 1);
    Vec3 c = Vec3::Zero();
    for (int k = 0; k < used; ++k) {
        for (int ch = 0; ch < 3; ++ch) {
            c[ch] += basis[k] * p.sh[static_cast<std::size_t>(3 * k + ch)];
        }
    }
    return (c.array() + 0.5).cwiseMax(0.0);
}

struct Footprint {
    bool valid = false;
    double depth = 0.0;
    Vec2 mean;
    Mat2 cov;
    Vec3 color;
    double opacity = 0.0;
};

inline Footprint footprint(const GaussianPrimitive& p, const Camera& cam, int sh_order,
                           bool low_pass, double dilation = 0.3, double near = 0.01) {
    Footprint f;
    const Vec3 c = cam.rotation * p.position + cam.translation;
    if (c.z() <= near) {
        return f;
    }
    const Mat3 r = quat_matrix(p.rotation);
    const Vec3 s = p.log_scale.array().exp();
    const Mat3 sigma = r * s.asDiagonal() * s.asDiagonal() * r.transpose();
    Eigen::Matrix<double, 2, 3> j;
    j << cam.fx / c.z(), 0, -cam.fx * c.x() / (c.z() * c.z()),
         0, cam.fy / c.z(), -cam.fy * c.y() / (c.z() * c.z());
    f.cov = j * cam.rotation * sigma * cam.rotation.transpose() * j.transpose();
    if (low_pass) {
        f.cov(0, 0) += dilation;
        f.cov(1, 1) += dilation;
    }
    f.mean = Vec2(cam.fx * c.x() / c.z() + cam.cx, cam.fy * c.y() / c.z() + cam.cy);
    f.depth = c.z();
    f.color = sh_color(p, sh_order, p.position - cam.center());
    f.opacity = 1.0 / (1.0 + std::exp(-p.opacity_logit));
    f.valid = f.cov.determinant() > 0.0;
    return f;
}

struct PixelResult {
    Vec3 color = Vec3::Zero();
    int blend_count = 0;
};

// Sort every primitive by camera depth, composite front to back without culling.
inline PixelResult composite_pixel(const GaussianScene& scene, const Camera& cam, int px, int py,
                                   const Vec3& background, bool low_pass, double alpha_max = 0.999,
                                   double floor = 1e-4) {
    std::vector<Footprint> fps;
    for (const auto& p : scene.primitives) {
        fps.push_back(footprint(p, cam, scene.sh_order, low_pass));
    }
    std::vector<std::size_t> order(fps.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fps[a].depth < fps[b].depth; });
    const Vec2 center(px + 0.5, py + 0.5);
    PixelResult out;
    double t = 1.0;
    for (const std::size_t i : order) {
        const Footprint& f = fps[i];
        if (!f.valid) {
            continue;
        }
        const Vec2 d = center - f.mean;
        const double k = std::exp(-0.5 * d.dot(f.cov.inverse() * d));
        const double a = std::min(alpha_max, f.opacity * k);
        out.color += t * a * f.color;
        if (a > 1.0 / 255.0) {
            ++out.blend_count;
        }
        t *= 1.0 - a;
        if (t < floor) {
            break;
        }
    }
    out.color += t * background;
    return out;
}

inline GaussianScene random_scene(std::mt19937_64& rng, int n, int sh_order, double spread = 1.0) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    GaussianScene scene;
    scene.sh_order = sh_order;
    for (int i = 0; i < n; ++i) {
        GaussianPrimitive p = make_primitive(sh_order);
        p.position = Vec3(spread * u(rng), spread * u(rng), 4.0 + 1.5 * u(rng));
        p.log_scale = Vec3(std::log(0.25 + 0.15 * u(rng)), std::log(0.25 + 0.15 * u(rng)),
                           std::log(0.25 + 0.15 * u(rng)));
        p.rotation = Vec4(u(rng), u(rng), u(rng), u(rng)).normalized();
        p.opacity_logit = 1.5 * u(rng);
        for (auto& k : p.sh) {
            k = 0.6 * u(rng);
        }
        scene.primitives.push_back(p);
    }
    return scene;
}

inline Camera test_camera(int w, int h, double f) {
    Camera c;
    c.fx = c.fy = f;
    c.cx = w / 2.0;
    c.cy = h / 2.0;
    c.width = w;
    c.height = h;
    return c;
}

// Pixel cone radius: mean distance at range t between the unit camera-space
// direction through (u, v) and those through its +x and +y neighbours.
inline double cone_radius(const Camera& cam, double u, double v, double t) {
    auto dir = [&](double a, double b) {
        return Vec3((a - cam.cx) / cam.fx, (b - cam.cy) / cam.fy, 1.0).normalized();
    };
    const Vec3 d = dir(u, v);
    return t * 0.5 * ((dir(u + 1, v) - d).norm() + (dir(u, v + 1) - d).norm());
}

inline Vec3 dc_color(const GaussianPrimitive& p) {
    return (0.28209479177387814 * Vec3(p.sh[0], p.sh[1], p.sh[2])).array() + 0.5;
}

// Two-sided comparison of an analytic and a finite-difference derivative.
inline double rel_error(double analytic, double numeric, double abs_floor) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), abs_floor});
}

// Ray-sphere chord [t0, t1] for a unit-direction ray; empty when it misses.
inline std::optional<std::pair<double, double>> sphere_chord(const Ray& ray, const Vec3& c, double r) {
    const Vec3 oc = ray.origin - c;
    const double b = oc.dot(ray.direction);
    const double disc = b * b - (oc.squaredNorm() - r * r);
    if (disc < 0) {
        return std::nullopt;
    }
    const double s = std::sqrt(disc);
    return std::make_pair(-b - s, -b + s);
}

} // namespace oracle
