// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

#include "conesplat/rasterizer.hpp"
#include "conesplat/parallel.hpp"
#include "conesplat/sh.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace conesplat {

void RenderOptions::validate() const {
    if (!(dilation >= 0.0)) {
        throw DomainError("low-pass dilation must be non-negative");
    }
    if (!(transmittance_floor >= 0.0 && transmittance_floor < 1.0)) {
        throw DomainError("transmittance floor must lie in [0, 1)");
    }
    if (!(alpha_max > 0.0 && alpha_max <= 1.0)) {
        throw DomainError("alpha_max must lie in (0, 1]");
    }
    if (!(cull_sigma > 0.0)) {
        throw DomainError("cull_sigma must be positive");
    }
    if (tile_size < 1) {
        throw DomainError("tile size must be positive");
    }
}

namespace {

struct Projection {
    Vec3 cam_point;
    Eigen::Matrix<double, 2, 3> jacobian;
    Mat3 cov_cam;  // W Sigma W^T
    Mat2 cov_raw;  // J W Sigma W^T J^T
    Mat2 cov;      // after low-pass
    double compensation = 1.0;
    Vec2 mean;
};

std::optional<Projection> project_full(const GaussianPrimitive& p, const Camera& camera,
                                       const RenderOptions& options) {
    Projection out;
    out.cam_point = camera.to_camera(p.position);
    const double x = out.cam_point.x(), y = out.cam_point.y(), z = out.cam_point.z();
    if (!(z > options.near_plane)) {
        return std::nullopt;
    }
    const double iz = 1.0 / z;
    out.mean = Vec2(camera.fx * x * iz + camera.cx, camera.fy * y * iz + camera.cy);
    out.jacobian << camera.fx * iz, 0.0, -camera.fx * x * iz * iz, 0.0, camera.fy * iz,
        -camera.fy * y * iz * iz;
    out.cov_cam = camera.rotation * covariance(p) * camera.rotation.transpose();
    out.cov_raw = out.jacobian * out.cov_cam * out.jacobian.transpose();
    out.cov_raw(0, 1) = out.cov_raw(1, 0) = 0.5 * (out.cov_raw(0, 1) + out.cov_raw(1, 0));
    out.cov = out.cov_raw;
    if (options.low_pass) {
        out.cov.diagonal().array() += options.dilation;
        if (options.low_pass_mode == LowPassMode::Compensated) {
            const double det_raw = out.cov_raw.determinant();
            const double det = out.cov.determinant();
            out.compensation = det_raw > 0.0 && det > 0.0 ? std::sqrt(det_raw / det) : 0.0;
        }
    }
    if (!(out.cov.determinant() > 0.0) || !out.cov.allFinite()) {
        return std::nullopt;
    }
    return out;
}

double major_sigma(const Mat2& cov) {
    const double mid = 0.5 * (cov(0, 0) + cov(1, 1));
    const double det = cov.determinant();
    const double lambda = mid + std::sqrt(std::max(0.1, mid * mid - det));
    return std::sqrt(lambda);
}

// dR/dq_k for a unit quaternion (w, x, y, z).
std::array<Mat3, 4> rotation_derivatives(const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    std::array<Mat3, 4> d;
    d[0] << 0.0, -2 * z, 2 * y, 2 * z, 0.0, -2 * x, -2 * y, 2 * x, 0.0;
    d[1] << 0.0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
    d[2] << -4 * y, 2 * x, 2 * w, 2 * x, 0.0, 2 * z, -2 * w, 2 * z, -4 * y;
    d[3] << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0.0;
    return d;
}

constexpr int kBlockRows = 8;

// Screen-space gradient accumulator for one primitive.
struct Grad2D {
    double mean[2];
    double conic[3];  // d/dA00, d/dA01 (= d/dA10), d/dA11
    double opacity;
    double compensation;
    double color[3];
};

} // namespace

struct Rasterizer::Splat {
    std::uint32_t index;
    Projection proj;
    Mat2 conic;
    double opacity;
    Vec3 color;
    Vec3 view_dir;
    double view_dist;
    int x0, x1, y0, y1;  // inclusive pixel range
};

struct Rasterizer::Contribution {
    std::uint32_t splat;
    double alpha;
    double transmittance;
    double kernel;
    bool clamped;
};

std::optional<Projected2D> project(const GaussianPrimitive& primitive, const Camera& camera,
                                   const RenderOptions& options) {
    const auto full = project_full(primitive, camera, options);
    if (!full) {
        return std::nullopt;
    }
    Projected2D out;
    out.mean = full->mean;
    out.cov = full->cov;
    out.depth = full->cam_point.z();
    out.radius = options.cull_sigma * major_sigma(full->cov);
    return out;
}

double kernel_response(const Vec2& pixel_center, const Projected2D& proj) {
    const double det = proj.cov.determinant();
    if (!(det > 0.0)) {
        return 0.0;
    }
    const Vec2 d = pixel_center - proj.mean;
    const double power = -0.5 * d.dot(proj.cov.inverse() * d);
    return std::exp(std::min(0.0, power));
}

Rasterizer::Rasterizer(const GaussianScene& scene, const Camera& camera,
                       const RenderOptions& options)
    : scene_(scene), camera_(camera), options_(options) {
    camera_.validate();
    options_.validate();
    const ShOrder order(scene.sh_order);
    const Vec3 cam_center = camera_.center();

    std::vector<std::optional<Splat>> staged(scene.primitives.size());
    parallel_for(0, scene.primitives.size(), [&](std::size_t i) {
        const GaussianPrimitive& p = scene.primitives[i];
        auto proj = project_full(p, camera_, options_);
        if (!proj) {
            return;
        }
        Splat s;
        s.index = static_cast<std::uint32_t>(i);
        s.proj = *proj;
        s.conic = proj->cov.inverse();
        s.opacity = p.opacity();
        const Vec3 v = p.position - cam_center;
        s.view_dist = v.norm();
        s.view_dir = s.view_dist > 0.0 ? Vec3(v / s.view_dist) : Vec3::UnitZ();
        s.color = eval_sh(p.sh, s.view_dir, order);

        if (std::isinf(options_.cull_sigma)) {
            s.x0 = 0;
            s.y0 = 0;
            s.x1 = camera_.width - 1;
            s.y1 = camera_.height - 1;
        } else {
            const double r = options_.cull_sigma * major_sigma(proj->cov);
            // Pixel centers px + 0.5 within [mean - r, mean + r].
            const double lo_x = std::ceil(proj->mean.x() - r - 0.5);
            const double hi_x = std::floor(proj->mean.x() + r - 0.5);
            const double lo_y = std::ceil(proj->mean.y() - r - 0.5);
            const double hi_y = std::floor(proj->mean.y() + r - 0.5);
            s.x0 = static_cast<int>(std::clamp(lo_x, 0.0, static_cast<double>(camera_.width)));
            s.x1 = static_cast<int>(std::clamp(hi_x, -1.0, camera_.width - 1.0));
            s.y0 = static_cast<int>(std::clamp(lo_y, 0.0, static_cast<double>(camera_.height)));
            s.y1 = static_cast<int>(std::clamp(hi_y, -1.0, camera_.height - 1.0));
            if (s.x0 > s.x1 || s.y0 > s.y1) {
                return;
            }
        }
        staged[i] = std::move(s);
    });
    for (auto& s : staged) {
        if (s) {
            splats_.push_back(std::move(*s));
        }
    }
    std::stable_sort(splats_.begin(), splats_.end(), [](const Splat& a, const Splat& b) {
        if (a.proj.cam_point.z() != b.proj.cam_point.z()) {
            return a.proj.cam_point.z() < b.proj.cam_point.z();
        }
        return a.index < b.index;
    });

    if (options_.tiled) {
        const int ts = options_.tile_size;
        tiles_x_ = (camera_.width + ts - 1) / ts;
        tiles_y_ = (camera_.height + ts - 1) / ts;
        tiles_.assign(static_cast<std::size_t>(tiles_x_) * tiles_y_, {});
        for (std::size_t k = 0; k < splats_.size(); ++k) {
            const Splat& s = splats_[k];
            for (int ty = s.y0 / ts; ty <= s.y1 / ts; ++ty) {
                for (int tx = s.x0 / ts; tx <= s.x1 / ts; ++tx) {
                    tiles_[static_cast<std::size_t>(ty) * tiles_x_ + tx].push_back(
                        static_cast<std::uint32_t>(k));
                }
            }
        }
    }
}

Rasterizer::~Rasterizer() = default;

std::vector<std::size_t> Rasterizer::depth_order() const {
    std::vector<std::size_t> out;
    out.reserve(splats_.size());
    for (const auto& s : splats_) {
        out.push_back(s.index);
    }
    return out;
}

// Calls visit(splat_slot, alpha, transmittance_before, kernel, clamped) front to
// back and returns the final transmittance.
template <typename Visit>
void Rasterizer::composite(int px, int py, Visit&& visit) const {
    const Vec2 center(px + 0.5, py + 0.5);
    double transmittance = 1.0;
    auto step = [&](std::uint32_t k) {
        const Splat& s = splats_[k];
        if (px < s.x0 || px > s.x1 || py < s.y0 || py > s.y1) {
            return true;
        }
        const Vec2 d = center - s.proj.mean;
        const double power =
            -0.5 * (s.conic(0, 0) * d.x() * d.x() + 2.0 * s.conic(0, 1) * d.x() * d.y() +
                    s.conic(1, 1) * d.y() * d.y());
        const double kernel = std::exp(std::min(0.0, power));
        double alpha = s.opacity * s.proj.compensation * kernel;
        bool clamped = false;
        if (alpha > options_.alpha_max) {
            alpha = options_.alpha_max;
            clamped = true;
        }
        visit(k, alpha, transmittance, kernel, clamped);
        transmittance *= 1.0 - alpha;
        return !(transmittance < options_.transmittance_floor);
    };
    if (options_.tiled) {
        const int ts = options_.tile_size;
        const auto& list = tiles_[static_cast<std::size_t>(py / ts) * tiles_x_ + px / ts];
        for (const std::uint32_t k : list) {
            if (!step(k)) {
                break;
            }
        }
    } else {
        for (std::uint32_t k = 0; k < splats_.size(); ++k) {
            if (!step(k)) {
                break;
            }
        }
    }
}

Vec3 Rasterizer::render_pixel(int px, int py) const {
    if (px < 0 || px >= camera_.width || py < 0 || py >= camera_.height) {
        throw DomainError("render_pixel outside the image");
    }
    Vec3 color = Vec3::Zero();
    double last_t = 1.0;
    composite(px, py, [&](std::uint32_t k, double alpha, double t, double, bool) {
        color += splats_[k].color * (alpha * t);
        last_t = t * (1.0 - alpha);
    });
    return color + last_t * options_.background;
}

RenderOutput Rasterizer::forward() const {
    const int w = camera_.width, h = camera_.height;
    RenderOutput out;
    out.color = ImageBuffer(w, h);
    if (options_.record_depth) {
        out.depth.emplace(static_cast<std::size_t>(w) * h, 0.0);
    }
    if (options_.record_blend_count) {
        out.blend_count.emplace(static_cast<std::size_t>(w) * h, 0);
    }
    parallel_for(0, static_cast<std::size_t>(h), [&](std::size_t row) {
        const int py = static_cast<int>(row);
        for (int px = 0; px < w; ++px) {
            Vec3 color = Vec3::Zero();
            double depth = 0.0;
            int count = 0;
            double last_t = 1.0;
            composite(px, py, [&](std::uint32_t k, double alpha, double t, double, bool) {
                const double weight = alpha * t;
                color += splats_[k].color * weight;
                depth += splats_[k].proj.cam_point.z() * weight;
                if (alpha > kBlendCountAlpha) {
                    ++count;
                }
                last_t = t * (1.0 - alpha);
            });
            out.color.set_pixel(px, py, color + last_t * options_.background);
            const std::size_t i = static_cast<std::size_t>(py) * w + px;
            if (out.depth) {
                (*out.depth)[i] = depth;
            }
            if (out.blend_count) {
                (*out.blend_count)[i] = count;
            }
        }
    });
    return out;
}

std::vector<PrimitiveGradient> Rasterizer::backward(const ImageBuffer& grad_color) const {
    if (grad_color.width() != camera_.width || grad_color.height() != camera_.height) {
        throw DomainError("gradient image size does not match the camera");
    }
    const int w = camera_.width, h = camera_.height;
    const std::size_t n_splats = splats_.size();
    const std::size_t n_blocks = static_cast<std::size_t>((h + kBlockRows - 1) / kBlockRows);

    // One screen-space accumulator per fixed row block, reduced in block order.
    std::vector<std::vector<Grad2D>> block_grads(n_blocks);
    parallel_for(0, n_blocks, [&](std::size_t b) {
        auto& acc = block_grads[b];
        acc.assign(n_splats, Grad2D{});
        std::vector<Contribution> list;
        const int row_end = std::min(h, static_cast<int>((b + 1) * kBlockRows));
        for (int py = static_cast<int>(b) * kBlockRows; py < row_end; ++py) {
            for (int px = 0; px < w; ++px) {
                const Vec3 g = grad_color.pixel(px, py);
                if (g.isZero(0.0)) {
                    continue;
                }
                list.clear();
                composite(px, py, [&](std::uint32_t k, double alpha, double t, double kernel,
                                      bool clamped) {
                    list.push_back({k, alpha, t, kernel, clamped});
                });
                const Vec2 center(px + 0.5, py + 0.5);
                // Color seen behind contribution i, normalized by the transmittance after it.
                Vec3 behind = options_.background;
                for (auto it = list.rbegin(); it != list.rend(); ++it) {
                    const Splat& s = splats_[it->splat];
                    Grad2D& gs = acc[it->splat];
                    const double weight = it->alpha * it->transmittance;
                    for (int c = 0; c < 3; ++c) {
                        gs.color[c] += weight * g[c];
                    }
                    const double d_alpha = it->transmittance * (s.color - behind).dot(g);
                    behind = s.color * it->alpha + (1.0 - it->alpha) * behind;
                    if (it->clamped) {
                        continue;
                    }
                    const double comp = s.proj.compensation;
                    gs.opacity += d_alpha * comp * it->kernel;
                    gs.compensation += d_alpha * s.opacity * it->kernel;
                    const double d_kernel = d_alpha * s.opacity * comp;
                    const double k = it->kernel;
                    const Vec2 d = center - s.proj.mean;
                    const Vec2 ad = s.conic * d;
                    gs.mean[0] += d_kernel * k * ad.x();
                    gs.mean[1] += d_kernel * k * ad.y();
                    gs.conic[0] += -0.5 * d_kernel * k * d.x() * d.x();
                    gs.conic[1] += -0.5 * d_kernel * k * d.x() * d.y();
                    gs.conic[2] += -0.5 * d_kernel * k * d.y() * d.y();
                }
            }
        }
    });

    std::vector<Grad2D> total(n_splats, Grad2D{});
    for (const auto& acc : block_grads) {
        for (std::size_t k = 0; k < n_splats; ++k) {
            Grad2D& t = total[k];
            const Grad2D& a = acc[k];
            for (int i = 0; i < 2; ++i) t.mean[i] += a.mean[i];
            for (int i = 0; i < 3; ++i) t.conic[i] += a.conic[i];
            for (int i = 0; i < 3; ++i) t.color[i] += a.color[i];
            t.opacity += a.opacity;
            t.compensation += a.compensation;
        }
    }

    const ShOrder order(scene_.sh_order);
    const std::size_t n_coeffs = static_cast<std::size_t>(3 * order.coeffs());
    std::vector<PrimitiveGradient> grads(scene_.primitives.size());
    for (auto& g : grads) {
        g.sh.assign(n_coeffs, 0.0);
    }
    const Mat3& world_rot = camera_.rotation;
    parallel_for(0, n_splats, [&](std::size_t k) {
        const Splat& s = splats_[k];
        const Grad2D& g2 = total[k];
        const GaussianPrimitive& p = scene_.primitives[s.index];
        PrimitiveGradient& out = grads[s.index];
        const Projection& pr = s.proj;

        // Color through SH, including the view-direction dependence on position.
        const Vec3 d_dir = eval_sh_backward(p.sh, s.view_dir, order,
                                            Vec3(g2.color[0], g2.color[1], g2.color[2]), out.sh);
        Vec3 d_position = Vec3::Zero();
        if (s.view_dist > 0.0) {
            d_position += (Mat3::Identity() - s.view_dir * s.view_dir.transpose()) * d_dir /
                          s.view_dist;
        }

        // Opacity through the sigmoid.
        out.opacity_logit = g2.opacity * s.opacity * (1.0 - s.opacity);

        // Conic -> 2D covariance.
        Mat2 d_conic;
        d_conic << g2.conic[0], g2.conic[1], g2.conic[1], g2.conic[2];
        Mat2 d_cov_raw = -s.conic * d_conic * s.conic;
        if (options_.low_pass && options_.low_pass_mode == LowPassMode::Compensated &&
            pr.compensation > 0.0) {
            d_cov_raw += g2.compensation * 0.5 * pr.compensation *
                         (pr.cov_raw.inverse() - pr.cov.inverse());
        }

        // 2D covariance -> camera-space covariance and projection Jacobian.
        const auto& jac = pr.jacobian;
        const Mat3 d_cov_cam = jac.transpose() * d_cov_raw * jac;
        const Eigen::Matrix<double, 2, 3> d_jac = 2.0 * d_cov_raw * jac * pr.cov_cam;

        // Jacobian and mean -> camera-space point.
        const double x = pr.cam_point.x(), y = pr.cam_point.y(), z = pr.cam_point.z();
        const double iz = 1.0 / z, iz2 = iz * iz, iz3 = iz2 * iz;
        const double fx = camera_.fx, fy = camera_.fy;
        Vec3 d_cam;
        d_cam.x() = g2.mean[0] * fx * iz + d_jac(0, 2) * (-fx * iz2);
        d_cam.y() = g2.mean[1] * fy * iz + d_jac(1, 2) * (-fy * iz2);
        d_cam.z() = g2.mean[0] * (-fx * x * iz2) + g2.mean[1] * (-fy * y * iz2) +
                    d_jac(0, 0) * (-fx * iz2) + d_jac(0, 2) * (2.0 * fx * x * iz3) +
                    d_jac(1, 1) * (-fy * iz2) + d_jac(1, 2) * (2.0 * fy * y * iz3);
        d_position += world_rot.transpose() * d_cam;
        out.position = d_position;

        // Camera-space covariance -> world covariance -> scale and rotation.
        const Mat3 d_sigma = world_rot.transpose() * d_cov_cam * world_rot;
        const Vec4 q_unit = p.rotation.normalized();
        const Mat3 rot = quaternion_to_rotation(p.rotation);
        const Vec3 scale = p.scale();
        const Mat3 m = rot * scale.asDiagonal();
        const Mat3 d_m = (d_sigma + d_sigma.transpose()) * m;
        const Mat3 rt_dm = rot.transpose() * d_m;
        for (int a = 0; a < 3; ++a) {
            out.log_scale[a] = rt_dm(a, a) * scale[a];
        }
        const Mat3 d_rot = d_m * scale.asDiagonal();
        const auto dr = rotation_derivatives(q_unit);
        Vec4 d_q_unit;
        for (int i = 0; i < 4; ++i) {
            d_q_unit[i] = (d_rot.array() * dr[static_cast<std::size_t>(i)].array()).sum();
        }
        const double q_norm = p.rotation.norm();
        out.rotation = (d_q_unit - q_unit * q_unit.dot(d_q_unit)) / q_norm;
    });
    return grads;
}

RenderOutput render(const GaussianScene& scene, const Camera& camera,
                    const RenderOptions& options) {
    return Rasterizer(scene, camera, options).forward();
}

std::vector<PrimitiveGradient> render_backward(const GaussianScene& scene, const Camera& camera,
                                               const RenderOptions& options,
                                               const ImageBuffer& grad_color) {
    return Rasterizer(scene, camera, options).backward(grad_color);
}

} // namespace conesplat
