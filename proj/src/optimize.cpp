// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

#include "conesplat/optimize.hpp"
#include "conesplat/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace conesplat {

namespace {

constexpr std::size_t kPos = 0;
constexpr std::size_t kScale = 3;
constexpr std::size_t kRot = 6;
constexpr std::size_t kOpacity = 10;
constexpr std::size_t kSh = 11;

} // namespace

double LearningRates::position_at(int iteration, int total_iters, double extent) const {
    if (total_iters <= 0) {
        return position_init * extent;
    }
    const double t = std::clamp(static_cast<double>(iteration) / total_iters, 0.0, 1.0);
    return extent * std::exp((1.0 - t) * std::log(position_init) + t * std::log(position_final));
}

std::size_t parameter_width(int sh_order) {
    return kSh + 3 * static_cast<std::size_t>(sh_coeff_count(sh_order));
}

Adam::Adam(int sh_order, double beta1, double beta2, double eps)
    : sh_order_(sh_order), width_(parameter_width(sh_order)), beta1_(beta1), beta2_(beta2),
      eps_(eps) {}

void Adam::resize(std::size_t rows) {
    rows_ = rows;
    m_.resize(rows * width_, 0.0);
    v_.resize(rows * width_, 0.0);
}

void Adam::step(GaussianScene& scene, const std::vector<PrimitiveGradient>& grads,
                const std::vector<double>& opacity_extra, const LearningRates& lr,
                double position_lr) {
    const std::size_t n = scene.primitives.size();
    if (grads.size() != n || (!opacity_extra.empty() && opacity_extra.size() != n)) {
        throw DomainError("Adam: gradient count does not match the scene");
    }
    if (scene.sh_order != sh_order_) {
        throw DomainError("Adam: SH order mismatch");
    }
    if (rows_ != n) {
        resize(n);
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const std::size_t nsh = width_ - kSh;

    std::vector<double> g(width_), step_size(width_);
    std::fill(step_size.begin() + kPos, step_size.begin() + kScale, position_lr);
    std::fill(step_size.begin() + kScale, step_size.begin() + kRot, lr.scale);
    std::fill(step_size.begin() + kRot, step_size.begin() + kOpacity, lr.rotation);
    step_size[kOpacity] = lr.opacity;
    std::fill(step_size.begin() + kSh, step_size.begin() + kSh + 3, lr.sh_dc);
    std::fill(step_size.begin() + kSh + 3, step_size.end(), lr.sh_rest);

    for (std::size_t i = 0; i < n; ++i) {
        GaussianPrimitive& p = scene.primitives[i];
        const PrimitiveGradient& gr = grads[i];
        for (int k = 0; k < 3; ++k) {
            g[kPos + k] = gr.position[k];
            g[kScale + k] = gr.log_scale[k];
        }
        for (int k = 0; k < 4; ++k) {
            g[kRot + k] = gr.rotation[k];
        }
        g[kOpacity] = gr.opacity_logit + (opacity_extra.empty() ? 0.0 : opacity_extra[i]);
        for (std::size_t k = 0; k < nsh; ++k) {
            g[kSh + k] = gr.sh.empty() ? 0.0 : gr.sh[k];
        }

        double* m = m_.data() + i * width_;
        double* v = v_.data() + i * width_;
        std::vector<double> delta(width_);
        for (std::size_t k = 0; k < width_; ++k) {
            m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
            v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
            delta[k] = step_size[k] * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
        }
        for (int k = 0; k < 3; ++k) {
            p.position[k] -= delta[kPos + k];
            p.log_scale[k] -= delta[kScale + k];
        }
        for (int k = 0; k < 4; ++k) {
            p.rotation[k] -= delta[kRot + k];
        }
        p.opacity_logit -= delta[kOpacity];
        for (std::size_t k = 0; k < nsh; ++k) {
            p.sh[k] -= delta[kSh + k];
        }
    }
}

void Adam::remap(const std::vector<std::size_t>& survivors, std::size_t inserted) {
    std::vector<double> m((survivors.size() + inserted) * width_, 0.0);
    std::vector<double> v(m.size(), 0.0);
    for (std::size_t r = 0; r < survivors.size(); ++r) {
        const std::size_t src = survivors[r];
        if (src >= rows_) {
            continue;
        }
        std::copy_n(m_.begin() + static_cast<std::ptrdiff_t>(src * width_), width_,
                    m.begin() + static_cast<std::ptrdiff_t>(r * width_));
        std::copy_n(v_.begin() + static_cast<std::ptrdiff_t>(src * width_), width_,
                    v.begin() + static_cast<std::ptrdiff_t>(r * width_));
    }
    m_ = std::move(m);
    v_ = std::move(v);
    rows_ = survivors.size() + inserted;
}

void normalize_rotations(GaussianScene& scene) {
    for (auto& p : scene.primitives) {
        const double n = p.rotation.norm();
        if (n > 0.0 && std::isfinite(n)) {
            p.rotation /= n;
        } else {
            p.rotation = Vec4(1.0, 0.0, 0.0, 0.0);
        }
    }
}

void TrainConfig::validate() const {
    if (total_iters < 0) {
        throw DomainError("total_iters must be non-negative");
    }
    if (densify_until < 0 || densify_until > total_iters) {
        throw DomainError("densify_until must lie in [0, total_iters]");
    }
    if (!(lambda_dssim >= 0.0 && lambda_dssim <= 1.0)) {
        throw DomainError("lambda_dssim must lie in [0, 1]");
    }
    if (!(lambda_opacity >= 0.0)) {
        throw DomainError("lambda_opacity must be non-negative");
    }
    if (log_interval < 1) {
        throw DomainError("log_interval must be at least 1");
    }
    for (const double rate : {lr.position_init, lr.position_final, lr.opacity, lr.scale,
                              lr.rotation, lr.sh_dc, lr.sh_rest}) {
        if (!(rate > 0.0 && std::isfinite(rate))) {
            throw DomainError("learning rates must be positive and finite");
        }
    }
    render.validate();
}

TrainResult train(GaussianScene& scene, const Dataset& dataset, const RadianceField& field,
                  const TrainConfig& config, const DensifyConfig& densify,
                  const TrainHooks& hooks) {
    config.validate();
    densify.validate();
    if (dataset.empty() || dataset.images.size() != dataset.cameras.size()) {
        throw DomainError("training needs a non-empty dataset with one image per camera");
    }
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        dataset.cameras[i].validate();
        if (dataset.images[i].width() != dataset.cameras[i].width ||
            dataset.images[i].height() != dataset.cameras[i].height) {
            throw DomainError("image " + std::to_string(i) + " does not match its camera");
        }
    }

    TrainResult result;
    const double extent = config.extent > 0.0 ? config.extent : scene_extent(dataset.cameras);
    RenderOptions render_opts = config.render;
    render_opts.background = dataset.background;

    std::mt19937_64 view_rng(config.seed);
    std::mt19937_64 densify_rng(densify.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();

    Adam adam(scene.sh_order);
    std::size_t pruned_since = 0;
    std::size_t inserted_since = 0;
    const int start = static_cast<int>(scene.iteration);

    for (int it = start; it < config.total_iters; ++it) {
        if (cursor == order.size()) {
            std::shuffle(order.begin(), order.end(), view_rng);
            cursor = 0;
        }
        const std::size_t view = order[cursor++];
        const Camera& cam = dataset.cameras[view];
        const ImageBuffer& gt = dataset.images[view];

        ImageBuffer rendered;
        std::vector<PrimitiveGradient> grads;
        LossResult loss;
        {
            const Rasterizer rast(scene, cam, render_opts);
            rendered = rast.forward().color;
            loss = photometric_loss(rendered, gt, config.lambda_dssim, config.ssim);
            const PenaltyResult penalty =
                opacity_penalty(scene, config.lambda_opacity, config.penalty_mode,
                                config.penalty_reduction);
            if (!std::isfinite(loss.value) || !std::isfinite(penalty.value)) {
                throw DomainError("non-finite loss at iteration " + std::to_string(it));
            }
            grads = rast.backward(loss.grad);
            adam.step(scene, grads, penalty.grad, config.lr,
                      config.lr.position_at(it, config.total_iters, extent));
        }
        normalize_rotations(scene);

        if (config.densify && it < config.densify_until) {
            const std::size_t n_gs = scene.primitives.size();
            const std::size_t n = densify.budget ? n_sample_budget(n_gs, scene.last_inserted)
                                                 : n_sample_growth(n_gs, densify.beta);
            if (n > 0) {
                const auto pixels = sample_error_pixels(error_map(rendered, gt), n, densify_rng);
                auto spawned = spawn_gaussians(pixels, cam, field, densify, scene.sh_order);
                if (hooks.on_spawn) {
                    hooks.on_spawn(spawned, cam);
                }
                for (auto& p : spawned) {
                    scene.accumulation.push_back(std::move(p));
                }
            }
        }

        const int done = it + 1;
        scene.iteration = static_cast<std::uint64_t>(done);
        if (done % densify.interval == 0 && done <= config.densify_until) {
            const MergeResult m = merge(scene, densify, densify_rng);
            adam.remap(m.survivors, m.inserted);
            result.merges.push_back({done, m.pruned, m.accumulated, m.inserted, m.total});
            if (hooks.on_merge) {
                hooks.on_merge(scene, result.merges.back());
            }
            pruned_since += m.pruned;
            inserted_since += m.inserted;
        }

        result.final_loss = loss.value;
        if (done % config.log_interval == 0 || done == config.total_iters) {
            TrainRecord rec{done, loss.value, psnr(rendered, gt),
                            scene.primitives.size(), pruned_since, inserted_since};
            pruned_since = 0;
            inserted_since = 0;
            if (hooks.on_record) {
                hooks.on_record(rec);
            }
            result.records.push_back(rec);
        }
        if (hooks.checkpoint_interval > 0 && hooks.on_checkpoint &&
            done % hooks.checkpoint_interval == 0) {
            hooks.on_checkpoint(scene, done);
        }
    }
    return result;
}

} // namespace conesplat
