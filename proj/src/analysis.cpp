// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

#include "conesplat/analysis.hpp"

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace conesplat {

double psnr(const ImageBuffer& a, const ImageBuffer& b) {
    if (!a.same_size(b)) {
        throw DomainError("psnr: image sizes differ");
    }
    if (a.data().empty()) {
        throw DomainError("psnr: empty image");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        sum += d * d;
    }
    const double mse = sum / static_cast<double>(a.data().size());
    if (mse == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return -10.0 * std::log10(mse);
}

std::string format_psnr(double db) {
    if (std::isinf(db) && db > 0.0) {
        return "inf";
    }
    std::ostringstream os;
    os.precision(6);
    os << std::fixed << db;
    return os.str();
}

BlendCountStats blend_count_stats(const GaussianScene& scene, const std::vector<Camera>& cameras,
                                  const RenderOptions& options) {
    BlendCountStats out;
    RenderOptions opts = options;
    opts.record_blend_count = true;
    double total = 0.0;
    for (const auto& cam : cameras) {
        const RenderOutput r = render(scene, cam, opts);
        double view_sum = 0.0;
        for (const int c : *r.blend_count) {
            view_sum += c;
        }
        const std::size_t n = r.blend_count->size();
        out.per_view.push_back(n > 0 ? view_sum / static_cast<double>(n) : 0.0);
        total += view_sum;
        out.pixels += n;
    }
    out.mean = out.pixels > 0 ? total / static_cast<double>(out.pixels) : 0.0;
    return out;
}

std::size_t Histogram::total() const {
    std::size_t n = underflow + overflow;
    for (const auto c : counts) {
        n += c;
    }
    return n;
}

Histogram make_histogram(const std::vector<double>& values, int bins, double lo, double hi,
                         bool log_spaced) {
    if (bins < 1) {
        throw DomainError("histogram needs at least one bin");
    }
    if (!(hi > lo) || (log_spaced && !(lo > 0.0))) {
        throw DomainError("invalid histogram range");
    }
    Histogram h;
    h.log_spaced = log_spaced;
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    h.edges.resize(static_cast<std::size_t>(bins) + 1);
    for (int i = 0; i <= bins; ++i) {
        const double f = static_cast<double>(i) / bins;
        h.edges[static_cast<std::size_t>(i)] =
            log_spaced ? std::exp(std::log(lo) + f * (std::log(hi) - std::log(lo)))
                       : lo + f * (hi - lo);
    }
    h.edges.front() = lo;
    h.edges.back() = hi;
    for (const double v : values) {
        if (v < lo) {
            ++h.underflow;
        } else if (v > hi) {
            ++h.overflow;
        } else if (v == hi) {
            ++h.counts.back();
        } else {
            const auto it = std::upper_bound(h.edges.begin(), h.edges.end(), v);
            ++h.counts[static_cast<std::size_t>(it - h.edges.begin()) - 1];
        }
    }
    return h;
}

Histogram auto_histogram(const std::vector<double>& values, int bins, bool log_spaced) {
    std::vector<double> usable;
    for (const double v : values) {
        if (std::isfinite(v) && (!log_spaced || v > 0.0)) {
            usable.push_back(v);
        }
    }
    if (usable.empty()) {
        Histogram h;
        h.log_spaced = log_spaced;
        h.underflow = values.size();
        return h;
    }
    const auto [mn, mx] = std::minmax_element(usable.begin(), usable.end());
    double lo = *mn;
    double hi = *mx;
    if (!(hi > lo)) {
        if (log_spaced) {
            lo /= 2.0;
            hi *= 2.0;
        } else {
            const double pad = lo != 0.0 ? 0.5 * std::abs(lo) : 0.5;
            lo -= pad;
            hi += pad;
        }
    }
    Histogram h = make_histogram(usable, bins, lo, hi, log_spaced);
    h.underflow += values.size() - usable.size();
    return h;
}

double min_pixel_scale(double focal, double depth) {
    if (!(focal > 0.0) || !(depth > 0.0)) {
        throw DomainError("min_pixel_scale needs positive focal length and depth");
    }
    return depth / (2.0 * focal);
}

std::optional<double> median_primitive_depth(const GaussianScene& scene, const Camera& camera) {
    std::vector<double> depths;
    for (const auto& p : scene.primitives) {
        const double z = camera.to_camera(p.position).z();
        if (z > 0.0) {
            depths.push_back(z);
        }
    }
    if (depths.empty()) {
        return std::nullopt;
    }
    const std::size_t mid = depths.size() / 2;
    std::nth_element(depths.begin(), depths.begin() + static_cast<std::ptrdiff_t>(mid),
                     depths.end());
    double m = depths[mid];
    if (depths.size() % 2 == 0) {
        m = 0.5 * (m + *std::max_element(depths.begin(),
                                         depths.begin() + static_cast<std::ptrdiff_t>(mid)));
    }
    return m;
}

Histogram scale_histogram(const GaussianScene& scene, int bins, const std::vector<Camera>& cameras) {
    std::vector<double> values;
    values.reserve(3 * scene.primitives.size());
    for (const auto& p : scene.primitives) {
        for (int k = 0; k < 3; ++k) {
            values.push_back(std::exp(p.log_scale[k]));
        }
    }
    Histogram h;
    if (values.empty()) {
        h.log_spaced = true;
        return h;
    }
    h = auto_histogram(values, bins, true);
    for (const auto& cam : cameras) {
        if (const auto z = median_primitive_depth(scene, cam)) {
            h.annotations.push_back(min_pixel_scale(cam.fx, *z));
        }
    }
    return h;
}

std::optional<double> perceived_size(const GaussianPrimitive& primitive, const Camera& camera) {
    RenderOptions opts;
    opts.low_pass = false;
    const auto proj = project(primitive, camera, opts);
    if (!proj) {
        return std::nullopt;
    }
    if (proj->mean.x() < 0.0 || proj->mean.y() < 0.0 || proj->mean.x() >= camera.width ||
        proj->mean.y() >= camera.height) {
        return std::nullopt;
    }
    const Eigen::SelfAdjointEigenSolver<Mat2> eig(proj->cov);
    return std::sqrt(std::max(eig.eigenvalues().maxCoeff(), 0.0));
}

Histogram perceived_size_histogram(const GaussianScene& scene, const std::vector<Camera>& cameras,
                                   int bins, bool log_spaced) {
    std::vector<double> sizes;
    for (const auto& cam : cameras) {
        for (const auto& p : scene.primitives) {
            if (const auto s = perceived_size(p, cam)) {
                sizes.push_back(*s);
            }
        }
    }
    if (sizes.empty()) {
        Histogram h;
        h.log_spaced = log_spaced;
        return h;
    }
    return auto_histogram(sizes, bins, log_spaced);
}

std::string histogram_csv(const Histogram& h) {
    std::ostringstream os;
    os.precision(17);
    os << "bin_lo,bin_hi,count\n";
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
        os << h.edges[i] << ',' << h.edges[i + 1] << ',' << h.counts[i] << '\n';
    }
    return os.str();
}

std::string histogram_json(const Histogram& h) {
    nlohmann::json j;
    j["edges"] = h.edges;
    j["counts"] = h.counts;
    j["underflow"] = h.underflow;
    j["overflow"] = h.overflow;
    j["log_spaced"] = h.log_spaced;
    j["annotations"] = h.annotations;
    return j.dump(2);
}

} // namespace conesplat
