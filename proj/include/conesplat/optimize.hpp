// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "conesplat/densify.hpp"
#include "conesplat/field.hpp"
#include "conesplat/loss.hpp"
#include "conesplat/rasterizer.hpp"
#include "conesplat/types.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace conesplat {

/// Per-group Adam step sizes. Position rates are multiplied by the scene
/// extent and decay log-linearly from `position_init` to `position_final`.
struct LearningRates {
    double position_init = 1.6e-4;
    double position_final = 1.6e-6;
    double opacity = 5e-2;
    double scale = 5e-3;
    double rotation = 1e-3;
    double sh_dc = 2.5e-3;
    double sh_rest = 2.5e-3 / 20.0;

    double position_at(int iteration, int total_iters, double extent) const;
};

/// Flat parameter layout of one primitive inside the optimizer:
/// position(3) log_scale(3) rotation(4) opacity_logit(1) sh(3 * coeffs).
std::size_t parameter_width(int sh_order);

/// Adam with one row of moments per primitive. Rows follow the primitives
/// through pruning and insertion via remap().
class Adam {
  public:
    Adam(int sh_order, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-15);

    /// One update of every primitive; gradients are indexed like the primitives.
    void step(GaussianScene& scene, const std::vector<PrimitiveGradient>& grads,
              const std::vector<double>& opacity_extra, const LearningRates& lr,
              double position_lr);

    /// Keeps rows listed in `survivors` (in order) then appends `inserted` zero rows.
    void remap(const std::vector<std::size_t>& survivors, std::size_t inserted);

    std::size_t rows() const { return rows_; }
    long step_count() const { return t_; }
    const std::vector<double>& first_moment() const { return m_; }
    const std::vector<double>& second_moment() const { return v_; }

  private:
    void resize(std::size_t rows);

    int sh_order_;
    std::size_t width_;
    double beta1_, beta2_, eps_;
    long t_ = 0;
    std::size_t rows_ = 0;
    std::vector<double> m_;
    std::vector<double> v_;
};

/// Normalizes each rotation quaternion; a zero quaternion becomes identity.
void normalize_rotations(GaussianScene& scene);

struct TrainConfig {
    int total_iters = 30000;
    /// Last iteration that samples new primitives; merges (prune + insert) run
    /// every interval up to and including it.
    int densify_until = 25000;
    /// Turns error-guided insertion off; pruning at merge time still runs.
    bool densify = true;
    double lambda_dssim = 0.2;
    double lambda_opacity = 2e-4;
    OpacityPenaltyMode penalty_mode = OpacityPenaltyMode::Signed;
    /// Mean keeps the penalty's weight relative to the image loss independent
    /// of the primitive count.
    PenaltyReduction penalty_reduction = PenaltyReduction::Mean;
    LearningRates lr;
    SsimParams ssim;
    RenderOptions render;
    /// Scene extent scaling the position learning rate; <= 0 derives it from the cameras.
    double extent = 0.0;
    /// All reductions already run in a fixed order; the flag is kept so callers
    /// can state the requirement explicitly.
    bool deterministic = true;
    std::uint64_t seed = 0;
    int log_interval = 100;

    void validate() const;
};

struct TrainRecord {
    int iteration = 0;
    double loss = 0.0;
    double psnr = 0.0;
    std::size_t n_gaussians = 0;
    /// Totals since the previous record.
    std::size_t pruned = 0;
    std::size_t inserted = 0;
};

struct MergeRecord {
    int iteration = 0;
    std::size_t pruned = 0;
    std::size_t accumulated = 0;
    std::size_t inserted = 0;
    std::size_t total = 0;
};

struct TrainResult {
    std::vector<TrainRecord> records;
    std::vector<MergeRecord> merges;
    double final_loss = 0.0;
};

struct TrainHooks {
    /// Called every `checkpoint_interval` iterations (0 disables).
    int checkpoint_interval = 0;
    std::function<void(const GaussianScene&, int iteration)> on_checkpoint;
    std::function<void(const TrainRecord&)> on_record;
    /// Primitives spawned in one iteration together with the view they came from.
    std::function<void(const std::vector<GaussianPrimitive>&, const Camera&)> on_spawn;
    /// Scene state right after each merge.
    std::function<void(const GaussianScene&, const MergeRecord&)> on_merge;
};

/// Photometric optimization with error-guided densification. `field` answers
/// median-depth queries for inserted primitives. Resumes from scene.iteration.
/// Throws DomainError naming the iteration when the loss becomes non-finite.
TrainResult train(GaussianScene& scene, const Dataset& dataset, const RadianceField& field,
                  const TrainConfig& config, const DensifyConfig& densify,
                  const TrainHooks& hooks = {});

} // namespace conesplat
