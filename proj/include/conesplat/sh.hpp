// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "conesplat/types.hpp"

#include <array>
#include <span>

namespace conesplat {

inline constexpr double kShC0 = 0.28209479177387814;

/// SH order in [0, 3]; L = (order + 1)^2 coefficients per channel.
class ShOrder {
  public:
    explicit ShOrder(int order) : order_(order) {
        if (order < 0 || order > 3) {
            throw DomainError("SH order must be in [0, 3]");
        }
    }
    int value() const { return order_; }
    int coeffs() const { return sh_coeff_count(order_); }

  private:
    int order_;
};

/// Real SH basis values Y_l(dir) and their gradients with respect to the
/// (unnormalized) direction components. Entries beyond L are left untouched.
void sh_basis(const Vec3& dir, ShOrder order, std::span<double> values,
              std::span<Vec3> gradients = {});

/// Decoded color max(0, sum_l k_l Y_l(dir) + 0.5) per channel.
/// `coeffs` holds 3 * L values, coefficient-major (k[l * 3 + c]).
Vec3 eval_sh(std::span<const double> coeffs, const Vec3& dir, ShOrder order);

struct ShJacobian {
    /// rgb_wrt_coeffs(c, l * 3 + c') is d rgb_c / d k[l * 3 + c'].
    Eigen::MatrixXd rgb_wrt_coeffs;
    Mat3 rgb_wrt_dir;
};

ShJacobian eval_sh_grad(std::span<const double> coeffs, const Vec3& dir, ShOrder order);

/// Vector-Jacobian product of eval_sh: accumulates dL/dk into `coeff_grad`
/// and returns dL/ddir for an upstream dL/drgb. Clamped channels pass no gradient.
Vec3 eval_sh_backward(std::span<const double> coeffs, const Vec3& dir, ShOrder order,
                      const Vec3& grad_rgb, std::span<double> coeff_grad);

} // namespace conesplat
