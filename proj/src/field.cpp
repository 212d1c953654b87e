// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

#include "conesplat/field.hpp"
#include "conesplat/parallel.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <string>

namespace conesplat {

std::optional<std::pair<double, double>> Aabb::intersect(const Ray& ray) const {
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        const double o = ray.origin[a], d = ray.direction[a];
        if (d == 0.0) {
            if (o < lo[a] || o > hi[a]) {
                return std::nullopt;
            }
            continue;
        }
        double ta = (lo[a] - o) / d;
        double tb = (hi[a] - o) / d;
        if (ta > tb) {
            std::swap(ta, tb);
        }
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (!(t1 > t0)) {
        return std::nullopt;
    }
    return std::make_pair(t0, t1);
}

double Shape::signed_distance(const Vec3& p) const {
    switch (kind) {
    case ShapeKind::Sphere:
        return (p - center).norm() - size.x();
    case ShapeKind::Box: {
        const Vec3 q = (p - center).cwiseAbs() - size;
        return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
    }
    case ShapeKind::Slab: {
        const double s = normal.normalized().dot(p);
        return std::max(size.x() - s, s - size.y());
    }
    }
    return std::numeric_limits<double>::infinity();
}

double Shape::density_at(const Vec3& p) const {
    const double sd = signed_distance(p);
    if (softness <= 0.0) {
        return sd <= 0.0 ? density : 0.0;
    }
    const double x = std::clamp(0.5 - sd / softness, 0.0, 1.0);
    return density * x * x * (3.0 - 2.0 * x);
}

Vec3 Shape::color_at(const Vec3& p) const {
    const Vec3 d = p - center;
    Vec3 c = color + color_gradient * d;
    if (texture_frequency != 0.0) {
        const double w = 2.0 * M_PI * texture_frequency;
        c += texture_amplitude * (std::sin(w * d.x()) * std::sin(w * d.y()) * std::sin(w * d.z()));
    }
    return c.cwiseMax(0.0).cwiseMin(1.0);
}

AnalyticField::AnalyticField(std::vector<Shape> shapes, Aabb bounds)
    : shapes_(std::move(shapes)), bounds_(bounds) {
    if (!(bounds_.hi.array() > bounds_.lo.array()).all()) {
        throw DomainError("field bounds must have positive extent");
    }
    for (const auto& s : shapes_) {
        if (!(s.density >= 0.0) || !std::isfinite(s.density)) {
            throw DomainError("shape density must be finite and non-negative");
        }
    }
}

FieldSample AnalyticField::sample(const Vec3& point, const Vec3&) const {
    FieldSample out;
    if (!bounds_.contains(point)) {
        return out;
    }
    Vec3 weighted = Vec3::Zero();
    for (const auto& s : shapes_) {
        const double d = s.density_at(point);
        if (d > 0.0) {
            out.density += d;
            weighted += d * s.color_at(point);
        }
    }
    if (out.density > 0.0) {
        out.rgb = weighted / out.density;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dense grid

DenseGridField::DenseGridField(Aabb bounds, std::vector<int> resolutions, double initial_density)
    : bounds_(bounds), resolutions_(std::move(resolutions)) {
    if (resolutions_.empty()) {
        throw DomainError("grid needs at least one level");
    }
    if (!(bounds_.hi.array() > bounds_.lo.array()).all()) {
        throw DomainError("grid bounds must have positive extent");
    }
    if (!(initial_density > 0.0)) {
        throw DomainError("initial density must be positive");
    }
    std::size_t offset = 0;
    for (std::size_t i = 0; i < resolutions_.size(); ++i) {
        const int r = resolutions_[i];
        if (r < 2 || (i > 0 && r <= resolutions_[i - 1])) {
            throw DomainError("grid resolutions must be >= 2 and strictly increasing");
        }
        level_offsets_.push_back(offset);
        offset += static_cast<std::size_t>(r) * r * r * kChannels;
    }
    params_.assign(offset, 0.0f);
    const float density_logit =
        static_cast<float>(std::log(initial_density) / static_cast<double>(resolutions_.size()));
    for (std::size_t i = 0; i < offset; i += kChannels) {
        params_[i] = density_logit;
    }
}

bool DenseGridField::corners(const Vec3& point, std::vector<Corner>& out) const {
    out.clear();
    if (!bounds_.contains(point)) {
        return false;
    }
    const Vec3 unit = (point - bounds_.lo).cwiseQuotient(bounds_.extent());
    for (std::size_t level = 0; level < resolutions_.size(); ++level) {
        const int r = resolutions_[level];
        std::array<int, 3> i0{};
        std::array<double, 3> f{};
        for (int a = 0; a < 3; ++a) {
            const double g = std::clamp(unit[a], 0.0, 1.0) * (r - 1);
            i0[a] = std::min(static_cast<int>(g), r - 2);
            f[a] = g - i0[a];
        }
        for (int c = 0; c < 8; ++c) {
            const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
            const double w = (dx ? f[0] : 1.0 - f[0]) * (dy ? f[1] : 1.0 - f[1]) *
                             (dz ? f[2] : 1.0 - f[2]);
            const std::size_t vertex =
                (static_cast<std::size_t>(i0[2] + dz) * r + (i0[1] + dy)) * r + (i0[0] + dx);
            out.push_back({level_offsets_[level] + vertex * kChannels, w});
        }
    }
    return true;
}

std::optional<Vec4> DenseGridField::logits(const Vec3& point) const {
    thread_local std::vector<Corner> buffer;
    if (!corners(point, buffer)) {
        return std::nullopt;
    }
    Vec4 sum = Vec4::Zero();
    for (const auto& c : buffer) {
        for (int ch = 0; ch < kChannels; ++ch) {
            sum[ch] += c.weight * static_cast<double>(params_[c.offset + ch]);
        }
    }
    return sum;
}

FieldSample DenseGridField::sample(const Vec3& point, const Vec3&) const {
    FieldSample out;
    const auto l = logits(point);
    if (!l) {
        return out;
    }
    out.density = std::exp((*l)[0]);
    for (int c = 0; c < 3; ++c) {
        out.rgb[c] = sigmoid((*l)[c + 1]);
    }
    return out;
}

namespace {

constexpr char kGridMagic[8] = {'C', 'S', 'G', 'R', 'I', 'D', '0', '1'};

static_assert(std::endian::native == std::endian::little,
              "binary formats are written in host order and assume little-endian");

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) {
        throw DomainError("truncated grid checkpoint");
    }
    return v;
}

} // namespace

void DenseGridField::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw DomainError("cannot open " + path.string() + " for writing");
    }
    os.write(kGridMagic, sizeof(kGridMagic));
    write_pod(os, static_cast<std::uint32_t>(resolutions_.size()));
    for (const int r : resolutions_) {
        write_pod(os, static_cast<std::uint32_t>(r));
    }
    for (int a = 0; a < 3; ++a) write_pod(os, bounds_.lo[a]);
    for (int a = 0; a < 3; ++a) write_pod(os, bounds_.hi[a]);
    os.write(reinterpret_cast<const char*>(params_.data()),
             static_cast<std::streamsize>(params_.size() * sizeof(float)));
    if (!os) {
        throw DomainError("failed writing " + path.string());
    }
}

DenseGridField DenseGridField::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw DomainError("cannot open " + path.string());
    }
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kGridMagic, sizeof(magic)) != 0) {
        throw DomainError(path.string() + " is not a grid checkpoint");
    }
    const auto levels = read_pod<std::uint32_t>(is);
    if (levels == 0 || levels > 16) {
        throw DomainError("grid checkpoint has an invalid level count");
    }
    std::vector<int> res;
    for (std::uint32_t i = 0; i < levels; ++i) {
        const auto r = read_pod<std::uint32_t>(is);
        if (r < 2 || r > 1024) {
            throw DomainError("grid checkpoint has an invalid resolution");
        }
        res.push_back(static_cast<int>(r));
    }
    Aabb bounds;
    for (int a = 0; a < 3; ++a) bounds.lo[a] = read_pod<double>(is);
    for (int a = 0; a < 3; ++a) bounds.hi[a] = read_pod<double>(is);
    DenseGridField field(bounds, res);
    is.read(reinterpret_cast<char*>(field.params_.data()),
            static_cast<std::streamsize>(field.params_.size() * sizeof(float)));
    if (!is) {
        throw DomainError("truncated grid checkpoint payload");
    }
    return field;
}

// ---------------------------------------------------------------------------
// Marching

namespace {

void check_interval(double t_near, double t_far, int n_steps) {
    if (!(t_near > 0.0 && t_far > t_near) || n_steps < 1) {
        throw DomainError("march requires 0 < t_near < t_far and n_steps >= 1");
    }
}

// Front-to-back compositing without recording per-sample state.
Vec3 march_color(const RadianceField& field, const Ray& ray, double t_near, double t_far,
                 int n_steps, double& transmittance) {
    const double delta = (t_far - t_near) / n_steps;
    const Vec3 zero_dir = Vec3::Zero();
    Vec3 color = Vec3::Zero();
    transmittance = 1.0;
    for (int i = 0; i < n_steps; ++i) {
        const double t = t_near + i * delta;
        const FieldSample s = field.sample(ray.at(t), zero_dir);
        if (s.density <= 0.0) {
            continue;
        }
        const double optical = s.density * delta;
        const double alpha = -std::expm1(-optical);
        color += transmittance * alpha * s.rgb;
        transmittance *= std::exp(-optical);
    }
    return color;
}

} // namespace

MarchResult march(const RadianceField& field, const Ray& ray, double t_near, double t_far,
                  int n_steps, SamplePoint sample_point, const Vec3& dir) {
    check_interval(t_near, t_far, n_steps);
    const double delta = (t_far - t_near) / n_steps;
    const double offset = sample_point == SamplePoint::SegmentMidpoint ? 0.5 : 0.0;
    MarchResult out;
    out.t.reserve(static_cast<std::size_t>(n_steps));
    out.alpha.reserve(static_cast<std::size_t>(n_steps));
    out.transmittance.reserve(static_cast<std::size_t>(n_steps));
    double transmittance = 1.0;
    for (int i = 0; i < n_steps; ++i) {
        const double t = t_near + (i + offset) * delta;
        const FieldSample s = field.sample(ray.at(t), dir);
        const double optical = std::max(0.0, s.density) * delta;
        const double alpha = -std::expm1(-optical);
        out.t.push_back(t);
        out.alpha.push_back(alpha);
        out.transmittance.push_back(transmittance);
        out.color += transmittance * alpha * s.rgb;
        transmittance *= std::exp(-optical);
    }
    out.final_transmittance = transmittance;
    return out;
}

std::optional<double> median_depth(const RadianceField& field, const Ray& ray, double t_near,
                                   double t_far, int n_steps) {
    check_interval(t_near, t_far, n_steps);
    const double delta = (t_far - t_near) / n_steps;
    double before = 1.0;
    for (int i = 0; i < n_steps; ++i) {
        const double t = t_near + i * delta;
        const FieldSample s = field.sample(ray.at(t), Vec3::Zero());
        const double after = before * std::exp(-std::max(0.0, s.density) * delta);
        if (before > 0.5 && after <= 0.5) {
            return t;
        }
        before = after;
    }
    return std::nullopt;
}

std::optional<std::pair<double, double>> march_interval(const RadianceField& field,
                                                        const Ray& ray) {
    constexpr double kMinNear = 1e-4;
    auto hit = field.bounds().intersect(ray);
    if (!hit) {
        return std::nullopt;
    }
    hit->first = std::max(hit->first, kMinNear);
    if (!(hit->second > hit->first)) {
        return std::nullopt;
    }
    return hit;
}

std::optional<RayProbe> probe_ray(const RadianceField& field, const Ray& ray, int n_steps) {
    const auto interval = march_interval(field, ray);
    if (!interval) {
        return std::nullopt;
    }
    const auto [t_near, t_far] = *interval;
    const double delta = (t_far - t_near) / n_steps;
    double before = 1.0;
    Vec3 color = Vec3::Zero();
    std::optional<double> median;
    for (int i = 0; i < n_steps; ++i) {
        const double t = t_near + i * delta;
        const FieldSample s = field.sample(ray.at(t), Vec3::Zero());
        if (s.density <= 0.0) {
            continue;
        }
        const double optical = s.density * delta;
        color += before * -std::expm1(-optical) * s.rgb;
        const double after = before * std::exp(-optical);
        if (!median && before > 0.5 && after <= 0.5) {
            median = t;
        }
        before = after;
    }
    if (!median) {
        return std::nullopt;
    }
    return RayProbe{*median, color};
}

ImageBuffer render_field(const RadianceField& field, const Camera& camera, int n_steps,
                         const Vec3& background) {
    camera.validate();
    if (n_steps < 1) {
        throw DomainError("render_field requires n_steps >= 1");
    }
    ImageBuffer image(camera.width, camera.height);
    parallel_for(0, static_cast<std::size_t>(camera.height), [&](std::size_t row) {
        const int py = static_cast<int>(row);
        for (int px = 0; px < camera.width; ++px) {
            const Ray ray = pixel_center_ray(camera, px, py);
            const auto interval = march_interval(field, ray);
            if (!interval) {
                image.set_pixel(px, py, background);
                continue;
            }
            double transmittance = 1.0;
            const Vec3 c =
                march_color(field, ray, interval->first, interval->second, n_steps, transmittance);
            image.set_pixel(px, py, c + transmittance * background);
        }
    });
    return image;
}

// ---------------------------------------------------------------------------
// Grid training

namespace {

constexpr std::size_t kGridGradChunks = 4;

struct StepState {
    double alpha;
    double transmittance;
    double density;
    Vec3 rgb;
    Vec3 point;
};

// Forward + backward for one ray; returns squared error summed over channels.
double ray_gradient(const DenseGridField& field, const Ray& ray, const Vec3& target,
                    const Vec3& background, int n_steps, double grad_scale,
                    std::vector<double>& grad, std::vector<StepState>& steps,
                    std::vector<DenseGridField::Corner>& corners) {
    const auto interval = march_interval(field, ray);
    if (!interval) {
        const Vec3 r = background - target;
        return r.squaredNorm();
    }
    const auto [t_near, t_far] = *interval;
    const double delta = (t_far - t_near) / n_steps;
    steps.clear();
    Vec3 color = Vec3::Zero();
    double transmittance = 1.0;
    for (int i = 0; i < n_steps; ++i) {
        const Vec3 p = ray.at(t_near + i * delta);
        const auto l = field.logits(p);
        if (!l) {
            continue;
        }
        StepState s;
        s.point = p;
        s.density = std::exp((*l)[0]);
        for (int c = 0; c < 3; ++c) {
            s.rgb[c] = sigmoid((*l)[c + 1]);
        }
        s.alpha = -std::expm1(-s.density * delta);
        s.transmittance = transmittance;
        color += transmittance * s.alpha * s.rgb;
        transmittance *= std::exp(-s.density * delta);
        steps.push_back(s);
    }
    color += transmittance * background;
    const Vec3 residual = color - target;
    const Vec3 g = 2.0 * grad_scale * residual;

    Vec3 behind = background;
    for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
        const double d_alpha = it->transmittance * (it->rgb - behind).dot(g);
        const Vec3 d_rgb = it->transmittance * it->alpha * g;
        behind = it->alpha * it->rgb + (1.0 - it->alpha) * behind;
        const double d_density_logit = d_alpha * delta * (1.0 - it->alpha) * it->density;
        Vec4 d_logit;
        d_logit[0] = d_density_logit;
        for (int c = 0; c < 3; ++c) {
            d_logit[c + 1] = d_rgb[c] * it->rgb[c] * (1.0 - it->rgb[c]);
        }
        field.corners(it->point, corners);
        for (const auto& c : corners) {
            for (int ch = 0; ch < DenseGridField::kChannels; ++ch) {
                grad[c.offset + ch] += c.weight * d_logit[ch];
            }
        }
    }
    return residual.squaredNorm();
}

} // namespace

GridTrainReport train_grid(DenseGridField& field, const Dataset& dataset,
                           const GridTrainConfig& config) {
    if (dataset.empty() || dataset.images.size() != dataset.cameras.size()) {
        throw DomainError("train_grid needs at least one posed image");
    }
    if (config.iterations < 0 || config.batch_rays < 1 || config.n_steps < 1 ||
        !(config.learning_rate > 0.0)) {
        throw DomainError("invalid grid training configuration");
    }
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        dataset.cameras[i].validate();
        if (dataset.images[i].width() != dataset.cameras[i].width ||
            dataset.images[i].height() != dataset.cameras[i].height) {
            throw DomainError("image size does not match its camera");
        }
    }
    GridTrainReport report;
    if (config.iterations == 0) {
        return report;
    }

    const std::size_t n_params = field.parameter_count();
    std::vector<double> m(n_params, 0.0), v(n_params, 0.0);
    std::vector<std::vector<double>> chunk_grads(kGridGradChunks);
    std::vector<double> chunk_loss(kGridGradChunks);
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-15;

    std::mt19937_64 rng(config.seed);
    std::uniform_int_distribution<std::size_t> pick_image(0, dataset.size() - 1);
    struct PixelRef {
        std::size_t image;
        int x, y;
    };
    std::vector<PixelRef> batch(static_cast<std::size_t>(config.batch_rays));

    for (int it = 0; it < config.iterations; ++it) {
        for (auto& ref : batch) {
            ref.image = pick_image(rng);
            const auto& cam = dataset.cameras[ref.image];
            ref.x = std::uniform_int_distribution<int>(0, cam.width - 1)(rng);
            ref.y = std::uniform_int_distribution<int>(0, cam.height - 1)(rng);
        }
        const double grad_scale = 1.0 / (3.0 * static_cast<double>(batch.size()));
        parallel_for(0, kGridGradChunks, [&](std::size_t chunk) {
            auto& grad = chunk_grads[chunk];
            grad.assign(n_params, 0.0);
            std::vector<StepState> steps;
            std::vector<DenseGridField::Corner> corners;
            double loss = 0.0;
            const std::size_t lo = batch.size() * chunk / kGridGradChunks;
            const std::size_t hi = batch.size() * (chunk + 1) / kGridGradChunks;
            for (std::size_t b = lo; b < hi; ++b) {
                const auto& ref = batch[b];
                const Camera& cam = dataset.cameras[ref.image];
                loss += ray_gradient(field, pixel_center_ray(cam, ref.x, ref.y),
                                     dataset.images[ref.image].pixel(ref.x, ref.y),
                                     dataset.background, config.n_steps, grad_scale, grad, steps,
                                     corners);
            }
            chunk_loss[chunk] = loss;
        });
        double loss = 0.0;
        for (const double l : chunk_loss) {
            loss += l;
        }
        loss *= grad_scale;
        if (!std::isfinite(loss)) {
            throw DomainError("grid training diverged at iteration " + std::to_string(it));
        }
        report.losses.push_back(loss);

        const double bc1 = 1.0 - std::pow(beta1, it + 1);
        const double bc2 = 1.0 - std::pow(beta2, it + 1);
        auto& params = field.parameters();
        parallel_for(0, kGridGradChunks, [&](std::size_t chunk) {
            const std::size_t lo = n_params * chunk / kGridGradChunks;
            const std::size_t hi = n_params * (chunk + 1) / kGridGradChunks;
            for (std::size_t i = lo; i < hi; ++i) {
                double g = 0.0;
                for (const auto& cg : chunk_grads) {
                    g += cg[i];
                }
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                const double step =
                    config.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
                params[i] = static_cast<float>(static_cast<double>(params[i]) - step);
            }
        });
    }
    report.final_loss = report.losses.back();
    return report;
}

} // namespace conesplat
