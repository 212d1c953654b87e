// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

#include "conesplat/loss.hpp"

#include <cmath>

namespace conesplat {

namespace {

using Plane = std::vector<double>;

int reflect(int i, int n) {
    if (n == 1) {
        return 0;
    }
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) {
        i += period;
    }
    return i < n ? i : period - i;
}

std::vector<double> gaussian_window(const SsimParams& p) {
    if (p.window < 1 || p.window % 2 == 0 || !(p.sigma > 0.0)) {
        throw DomainError("SSIM window must be odd and sigma positive");
    }
    const int r = p.window / 2;
    std::vector<double> w(static_cast<std::size_t>(p.window));
    double sum = 0.0;
    for (int k = 0; k < p.window; ++k) {
        w[static_cast<std::size_t>(k)] = std::exp(-double((k - r) * (k - r)) / (2.0 * p.sigma * p.sigma));
        sum += w[static_cast<std::size_t>(k)];
    }
    for (auto& v : w) {
        v /= sum;
    }
    return w;
}

// Separable filter with reflect padding, and its adjoint.
class Blur {
  public:
    Blur(int width, int height, const SsimParams& p)
        : w_(width), h_(height), taps_(gaussian_window(p)), r_(p.window / 2), tmp_(size()) {}

    std::size_t size() const { return static_cast<std::size_t>(w_) * h_; }

    Plane apply(const Plane& in) {
        Plane out(size(), 0.0);
        for (int y = 0; y < h_; ++y) {
            for (int x = 0; x < w_; ++x) {
                double s = 0.0;
                for (int k = -r_; k <= r_; ++k) {
                    s += tap(k) * in[idx(reflect(x + k, w_), y)];
                }
                tmp_[idx(x, y)] = s;
            }
        }
        for (int y = 0; y < h_; ++y) {
            for (int x = 0; x < w_; ++x) {
                double s = 0.0;
                for (int k = -r_; k <= r_; ++k) {
                    s += tap(k) * tmp_[idx(x, reflect(y + k, h_))];
                }
                out[idx(x, y)] = s;
            }
        }
        return out;
    }

    Plane adjoint(const Plane& in) {
        std::fill(tmp_.begin(), tmp_.end(), 0.0);
        for (int y = 0; y < h_; ++y) {
            for (int x = 0; x < w_; ++x) {
                const double g = in[idx(x, y)];
                for (int k = -r_; k <= r_; ++k) {
                    tmp_[idx(x, reflect(y + k, h_))] += tap(k) * g;
                }
            }
        }
        Plane out(size(), 0.0);
        for (int y = 0; y < h_; ++y) {
            for (int x = 0; x < w_; ++x) {
                const double g = tmp_[idx(x, y)];
                for (int k = -r_; k <= r_; ++k) {
                    out[idx(reflect(x + k, w_), y)] += tap(k) * g;
                }
            }
        }
        return out;
    }

  private:
    double tap(int k) const { return taps_[static_cast<std::size_t>(k + r_)]; }
    std::size_t idx(int x, int y) const { return static_cast<std::size_t>(y) * w_ + x; }

    int w_, h_;
    std::vector<double> taps_;
    int r_;
    Plane tmp_;
};

Plane channel(const ImageBuffer& img, int c) {
    Plane p(img.pixel_count());
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = img.data()[3 * i + static_cast<std::size_t>(c)];
    }
    return p;
}

SsimResult ssim_impl(const ImageBuffer& a, const ImageBuffer& b, const SsimParams& params,
                     bool want_grad) {
    if (!a.same_size(b)) {
        throw DomainError("SSIM: image sizes differ");
    }
    if (a.pixel_count() == 0) {
        throw DomainError("SSIM: empty image");
    }
    SsimResult out;
    if (want_grad) {
        out.grad = ImageBuffer(a.width(), a.height());
    }
    Blur blur(a.width(), a.height(), params);
    const std::size_t n = a.pixel_count();
    const double norm = 1.0 / (3.0 * static_cast<double>(n));
    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
        const Plane x = channel(a, c);
        const Plane y = channel(b, c);
        Plane xx(n), yy(n), xy(n);
        for (std::size_t i = 0; i < n; ++i) {
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const Plane mx = blur.apply(x), my = blur.apply(y);
        const Plane exx = blur.apply(xx), eyy = blur.apply(yy), exy = blur.apply(xy);
        Plane g_mx(n), g_exx(n), g_exy(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double a1 = 2.0 * mx[i] * my[i] + params.c1;
            const double a2 = 2.0 * (exy[i] - mx[i] * my[i]) + params.c2;
            const double b1 = mx[i] * mx[i] + my[i] * my[i] + params.c1;
            const double b2 = (exx[i] - mx[i] * mx[i]) + (eyy[i] - my[i] * my[i]) + params.c2;
            const double s = (a1 * a2) / (b1 * b2);
            total += s;
            if (want_grad) {
                const double inv = 1.0 / (b1 * b2);
                g_mx[i] = norm * (2.0 * my[i] * a2 * inv - 2.0 * my[i] * a1 * inv -
                                  2.0 * mx[i] * s / b1 + 2.0 * mx[i] * s / b2);
                g_exx[i] = norm * (-s / b2);
                g_exy[i] = norm * (2.0 * a1 * inv);
            }
        }
        if (want_grad) {
            const Plane d_mx = blur.adjoint(g_mx);
            const Plane d_exx = blur.adjoint(g_exx);
            const Plane d_exy = blur.adjoint(g_exy);
            for (std::size_t i = 0; i < n; ++i) {
                out.grad.data()[3 * i + static_cast<std::size_t>(c)] =
                    d_mx[i] + 2.0 * x[i] * d_exx[i] + y[i] * d_exy[i];
            }
        }
    }
    out.value = total * norm;
    return out;
}

} // namespace

double ssim(const ImageBuffer& a, const ImageBuffer& b, const SsimParams& params) {
    return ssim_impl(a, b, params, false).value;
}

SsimResult ssim_with_grad(const ImageBuffer& a, const ImageBuffer& b, const SsimParams& params) {
    return ssim_impl(a, b, params, true);
}

LossResult photometric_loss(const ImageBuffer& render, const ImageBuffer& gt,
                            double lambda_dssim, const SsimParams& params) {
    if (!render.same_size(gt)) {
        throw DomainError("photometric_loss: image sizes differ");
    }
    if (!(lambda_dssim >= 0.0 && lambda_dssim <= 1.0)) {
        throw DomainError("lambda_dssim must lie in [0, 1]");
    }
    LossResult out;
    out.grad = ImageBuffer(render.width(), render.height());
    const auto& r = render.data();
    const auto& g = gt.data();
    const double norm = 1.0 / static_cast<double>(r.size());
    double mae = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        const double d = r[i] - g[i];
        mae += std::abs(d);
        const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        out.grad.data()[i] = (1.0 - lambda_dssim) * sign * norm;
    }
    mae *= norm;
    out.value = (1.0 - lambda_dssim) * mae;
    if (lambda_dssim > 0.0) {
        const SsimResult s = ssim_with_grad(render, gt, params);
        out.value += lambda_dssim * (1.0 - s.value);
        for (std::size_t i = 0; i < r.size(); ++i) {
            out.grad.data()[i] -= lambda_dssim * s.grad.data()[i];
        }
    }
    return out;
}

PenaltyResult opacity_penalty(const GaussianScene& scene, double lambda_opacity,
                              OpacityPenaltyMode mode, PenaltyReduction reduction) {
    PenaltyResult out;
    out.grad.assign(scene.primitives.size(), 0.0);
    if (lambda_opacity == 0.0 || scene.primitives.empty()) {
        return out;
    }
    if (reduction == PenaltyReduction::Mean) {
        lambda_opacity /= static_cast<double>(scene.primitives.size());
    }
    for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
        const double o = scene.primitives[i].opacity_logit;
        if (mode == OpacityPenaltyMode::Signed) {
            out.value += lambda_opacity * o;
            out.grad[i] = lambda_opacity;
        } else {
            out.value += lambda_opacity * std::abs(o);
            out.grad[i] = lambda_opacity * (o > 0.0 ? 1.0 : (o < 0.0 ? -1.0 : 0.0));
        }
    }
    return out;
}

} // namespace conesplat
