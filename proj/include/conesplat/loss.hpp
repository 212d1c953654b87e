// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "conesplat/types.hpp"

#include <vector>

namespace conesplat {

/// Gaussian-windowed SSIM with reflect padding; constants for dynamic range 1.
struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double c1 = 0.01 * 0.01;
    double c2 = 0.03 * 0.03;
};

/// Mean SSIM over pixels and channels.
double ssim(const ImageBuffer& a, const ImageBuffer& b, const SsimParams& params = {});

/// SSIM and its exact gradient with respect to `a`.
struct SsimResult {
    double value = 0.0;
    ImageBuffer grad;
};
SsimResult ssim_with_grad(const ImageBuffer& a, const ImageBuffer& b,
                          const SsimParams& params = {});

struct LossResult {
    double value = 0.0;
    ImageBuffer grad;
};

/// (1 - lambda) * MAE + lambda * (1 - SSIM) and its gradient with respect to
/// the render. The MAE subgradient at zero residual is zero.
LossResult photometric_loss(const ImageBuffer& render, const ImageBuffer& gt,
                            double lambda_dssim, const SsimParams& params = {});

enum class OpacityPenaltyMode {
    /// lambda * sum(logit): constant downward pressure on every logit.
    Signed,
    /// lambda * sum(|logit|).
    Absolute,
};

enum class PenaltyReduction {
    /// Per-logit gradient lambda.
    Sum,
    /// Divided by the primitive count: per-logit gradient lambda / N.
    Mean,
};

struct PenaltyResult {
    double value = 0.0;
    std::vector<double> grad;
};

PenaltyResult opacity_penalty(const GaussianScene& scene, double lambda_opacity,
                              OpacityPenaltyMode mode = OpacityPenaltyMode::Signed,
                              PenaltyReduction reduction = PenaltyReduction::Sum);

} // namespace conesplat
