// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

#include "conesplat/sh.hpp"

namespace conesplat {

namespace {

constexpr double kShC1 = 0.4886025119029199;
constexpr std::array<double, 5> kShC2 = {1.0925484305920792, -1.0925484305920792,
                                         0.31539156525252005, -1.0925484305920792,
                                         0.5462742152960396};
constexpr std::array<double, 7> kShC3 = {-0.5900435899266435, 2.890611442640554,
                                         -0.4570457994644658, 0.3731763325901154,
                                         -0.4570457994644658, 1.445305721320277,
                                         -0.5900435899266435};

void check_size(std::span<const double> coeffs, ShOrder order) {
    if (coeffs.size() != static_cast<std::size_t>(3 * order.coeffs())) {
        throw DomainError("SH coefficient count does not match the order");
    }
}

Vec3 raw_color(std::span<const double> coeffs, const std::array<double, 16>& y, int count) {
    Vec3 rgb = Vec3::Constant(0.5);
    for (int l = 0; l < count; ++l) {
        for (int c = 0; c < 3; ++c) {
            rgb[c] += coeffs[static_cast<std::size_t>(l * 3 + c)] * y[l];
        }
    }
    return rgb;
}

} // namespace

void sh_basis(const Vec3& dir, ShOrder order, std::span<double> values,
              std::span<Vec3> gradients) {
    const int n = order.coeffs();
    if (values.size() < static_cast<std::size_t>(n) ||
        (!gradients.empty() && gradients.size() < static_cast<std::size_t>(n))) {
        throw DomainError("SH basis output too small");
    }
    const bool want_grad = !gradients.empty();
    const double x = dir.x(), y = dir.y(), z = dir.z();

    values[0] = kShC0;
    if (want_grad) {
        gradients[0] = Vec3::Zero();
    }
    if (order.value() < 1) {
        return;
    }
    values[1] = -kShC1 * y;
    values[2] = kShC1 * z;
    values[3] = -kShC1 * x;
    if (want_grad) {
        gradients[1] = Vec3(0.0, -kShC1, 0.0);
        gradients[2] = Vec3(0.0, 0.0, kShC1);
        gradients[3] = Vec3(-kShC1, 0.0, 0.0);
    }
    if (order.value() < 2) {
        return;
    }
    const double xx = x * x, yy = y * y, zz = z * z;
    values[4] = kShC2[0] * x * y;
    values[5] = kShC2[1] * y * z;
    values[6] = kShC2[2] * (2.0 * zz - xx - yy);
    values[7] = kShC2[3] * x * z;
    values[8] = kShC2[4] * (xx - yy);
    if (want_grad) {
        gradients[4] = kShC2[0] * Vec3(y, x, 0.0);
        gradients[5] = kShC2[1] * Vec3(0.0, z, y);
        gradients[6] = kShC2[2] * Vec3(-2.0 * x, -2.0 * y, 4.0 * z);
        gradients[7] = kShC2[3] * Vec3(z, 0.0, x);
        gradients[8] = kShC2[4] * Vec3(2.0 * x, -2.0 * y, 0.0);
    }
    if (order.value() < 3) {
        return;
    }
    values[9] = kShC3[0] * y * (3.0 * xx - yy);
    values[10] = kShC3[1] * x * y * z;
    values[11] = kShC3[2] * y * (4.0 * zz - xx - yy);
    values[12] = kShC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    values[13] = kShC3[4] * x * (4.0 * zz - xx - yy);
    values[14] = kShC3[5] * z * (xx - yy);
    values[15] = kShC3[6] * x * (xx - 3.0 * yy);
    if (want_grad) {
        gradients[9] = kShC3[0] * Vec3(6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0);
        gradients[10] = kShC3[1] * Vec3(y * z, x * z, x * y);
        gradients[11] = kShC3[2] * Vec3(-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z);
        gradients[12] = kShC3[3] * Vec3(-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy);
        gradients[13] = kShC3[4] * Vec3(4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z);
        gradients[14] = kShC3[5] * Vec3(2.0 * x * z, -2.0 * y * z, xx - yy);
        gradients[15] = kShC3[6] * Vec3(3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0);
    }
}

Vec3 eval_sh(std::span<const double> coeffs, const Vec3& dir, ShOrder order) {
    check_size(coeffs, order);
    std::array<double, 16> y{};
    sh_basis(dir, order, y);
    return raw_color(coeffs, y, order.coeffs()).cwiseMax(0.0);
}

ShJacobian eval_sh_grad(std::span<const double> coeffs, const Vec3& dir, ShOrder order) {
    check_size(coeffs, order);
    const int n = order.coeffs();
    std::array<double, 16> y{};
    std::array<Vec3, 16> dy{};
    sh_basis(dir, order, y, dy);
    const Vec3 raw = raw_color(coeffs, y, n);

    ShJacobian jac;
    jac.rgb_wrt_coeffs = Eigen::MatrixXd::Zero(3, 3 * n);
    jac.rgb_wrt_dir = Mat3::Zero();
    for (int c = 0; c < 3; ++c) {
        if (raw[c] < 0.0) {
            continue;
        }
        for (int l = 0; l < n; ++l) {
            const double k = coeffs[static_cast<std::size_t>(l * 3 + c)];
            jac.rgb_wrt_coeffs(c, l * 3 + c) = y[l];
            jac.rgb_wrt_dir.row(c) += k * dy[l].transpose();
        }
    }
    return jac;
}

Vec3 eval_sh_backward(std::span<const double> coeffs, const Vec3& dir, ShOrder order,
                      const Vec3& grad_rgb, std::span<double> coeff_grad) {
    check_size(coeffs, order);
    const int n = order.coeffs();
    if (coeff_grad.size() != coeffs.size()) {
        throw DomainError("SH gradient buffer size mismatch");
    }
    std::array<double, 16> y{};
    std::array<Vec3, 16> dy{};
    sh_basis(dir, order, y, dy);
    const Vec3 raw = raw_color(coeffs, y, n);

    Vec3 g = grad_rgb;
    for (int c = 0; c < 3; ++c) {
        if (raw[c] < 0.0) {
            g[c] = 0.0;
        }
    }
    Vec3 grad_dir = Vec3::Zero();
    for (int l = 0; l < n; ++l) {
        double dot = 0.0;
        for (int c = 0; c < 3; ++c) {
            const std::size_t i = static_cast<std::size_t>(l * 3 + c);
            coeff_grad[i] += y[l] * g[c];
            dot += coeffs[i] * g[c];
        }
        grad_dir += dot * dy[l];
    }
    return grad_dir;
}

} // namespace conesplat
