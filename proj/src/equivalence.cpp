// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

#include "conesplat/equivalence.hpp"
#include "conesplat/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace conesplat {

FrustumGaussianSet frustums_to_gaussians(const RadianceField& field, const Camera& camera, int u,
                                         int v, double t_near, double t_far, int n_segments,
                                         const FrustumOptions& options) {
    camera.validate();
    if (n_segments < 1) {
        throw DomainError("n_segments must be at least 1");
    }
    if (!(t_near >= 0.0) || !(t_far > t_near) || !std::isfinite(t_far)) {
        throw DomainError("invalid frustum interval");
    }
    if (!(options.lambda_scale > 0.0)) {
        throw DomainError("lambda_scale must be positive");
    }
    const Ray ray = pixel_center_ray(camera, u, v);
    const double delta = (t_far - t_near) / n_segments;
    const double floor_logit = logit(kFrustumAlphaFloor);

    FrustumGaussianSet out;
    out.u = u;
    out.v = v;
    out.bounds.reserve(static_cast<std::size_t>(n_segments) + 1);
    for (int i = 0; i <= n_segments; ++i) {
        out.bounds.push_back(t_near + i * delta);
    }
    for (int i = 0; i < n_segments; ++i) {
        const double t_mid = t_near + (i + 0.5) * delta;
        const Vec3 center = ray.at(t_mid);
        const FieldSample s = field.sample(center, Vec3::Zero());
        const double optical = std::max(0.0, s.density) * delta;
        // logit(1 - exp(-x)) = log(-expm1(-x)) + x, stable for large and small x.
        double op_logit = floor_logit;
        if (optical > 0.0) {
            op_logit = std::max(floor_logit, std::log(-std::expm1(-optical)) + optical);
        }
        const double scale =
            options.lambda_scale * pixel_cone_radius(camera, u, v, t_mid);
        GaussianPrimitive p = make_primitive(options.sh_order);
        p.position = center;
        p.log_scale = Vec3::Constant(std::log(scale));
        p.opacity_logit = op_logit;
        set_dc_color(p, s.rgb);
        out.primitives.push_back(std::move(p));
    }
    return out;
}

RenderOptions equivalence_render_options() {
    RenderOptions o;
    o.low_pass = false;
    o.alpha_max = 1.0;
    o.transmittance_floor = 0.0;
    o.cull_sigma = std::numeric_limits<double>::infinity();
    o.background = Vec3::Zero();
    return o;
}

EquivalenceReport verify_equivalence(const RadianceField& field, const Camera& camera,
                                     const std::vector<std::pair<int, int>>& pixels, double t_near,
                                     double t_far, int n_segments,
                                     const EquivalenceOptions& options) {
    options.render.validate();
    EquivalenceReport report;
    report.tolerance = options.tolerance;
    report.pixels.resize(pixels.size());
    parallel_for(0, pixels.size(), [&](std::size_t k) {
        const auto [u, v] = pixels[k];
        if (u < 0 || v < 0 || u >= camera.width || v >= camera.height) {
            throw DomainError("probe pixel outside the image");
        }
        const FrustumGaussianSet set =
            frustums_to_gaussians(field, camera, u, v, t_near, t_far, n_segments, options.frustum);
        GaussianScene scene;
        scene.sh_order = options.frustum.sh_order;
        scene.primitives = set.primitives;
        const Rasterizer rast(scene, camera, options.render);

        const Ray ray = pixel_center_ray(camera, u, v);
        const MarchResult m =
            march(field, ray, t_near, t_far, n_segments, SamplePoint::SegmentMidpoint);

        PixelEquivalence& pe = report.pixels[k];
        pe.u = u;
        pe.v = v;
        pe.splat = rast.render_pixel(u, v);
        pe.march = m.color;
        pe.max_abs_diff = (pe.splat - pe.march).cwiseAbs().maxCoeff();
        pe.march_alpha = m.alpha;
        for (const auto& p : set.primitives) {
            pe.splat_alpha.push_back(p.opacity());
        }
    });
    for (const auto& pe : report.pixels) {
        report.max_abs_diff = std::max(report.max_abs_diff, pe.max_abs_diff);
    }
    report.passed = report.max_abs_diff < report.tolerance;
    return report;
}

std::vector<std::pair<int, int>> probe_grid(const Camera& camera) {
    std::vector<std::pair<int, int>> out;
    for (const int fy : {1, 2, 3}) {
        for (const int fx : {1, 2, 3}) {
            out.emplace_back(std::min(camera.width - 1, camera.width * fx / 4),
                             std::min(camera.height - 1, camera.height * fy / 4));
        }
    }
    return out;
}

std::string EquivalenceReport::describe() const {
    std::ostringstream os;
    os.precision(17);
    os << (passed ? "PASS" : "FAIL") << " max_abs_diff=" << max_abs_diff
       << " tolerance=" << tolerance << '\n';
    for (const auto& pe : pixels) {
        os << "  pixel (" << pe.u << ',' << pe.v << ") diff=" << pe.max_abs_diff << '\n';
        if (pe.max_abs_diff >= tolerance) {
            for (std::size_t i = 0; i < pe.march_alpha.size(); ++i) {
                os << "    segment " << i << " splat_alpha=" << pe.splat_alpha[i]
                   << " march_alpha=" << pe.march_alpha[i] << '\n';
            }
        }
    }
    return os.str();
}

std::string EquivalenceReport::to_json() const {
    nlohmann::json j;
    j["passed"] = passed;
    j["max_abs_diff"] = max_abs_diff;
    j["tolerance"] = tolerance;
    auto& arr = j["pixels"] = nlohmann::json::array();
    for (const auto& pe : pixels) {
        nlohmann::json p;
        p["u"] = pe.u;
        p["v"] = pe.v;
        p["max_abs_diff"] = pe.max_abs_diff;
        p["splat"] = {pe.splat.x(), pe.splat.y(), pe.splat.z()};
        p["march"] = {pe.march.x(), pe.march.y(), pe.march.z()};
        if (pe.max_abs_diff >= tolerance) {
            p["splat_alpha"] = pe.splat_alpha;
            p["march_alpha"] = pe.march_alpha;
        }
        arr.push_back(p);
    }
    return j.dump(2);
}

} // namespace conesplat
