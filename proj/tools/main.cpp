// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: dataset generation, proxy training, initialization,
// training, rendering, metrics, analyses and the two verification commands.

#include "conesplat/analysis.hpp"
#include "conesplat/equivalence.hpp"
#include "conesplat/gradcheck.hpp"
#include "conesplat/init.hpp"
#include "conesplat/io.hpp"
#include "conesplat/optimize.hpp"
#include "conesplat/parallel.hpp"
#include "conesplat/synthetic.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

using namespace conesplat;

namespace {

struct Global {
    std::uint64_t seed = 0;
    bool deterministic = false;
    int threads = 0;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    os << text;
    if (!os) {
        throw DomainError("cannot write " + path.string());
    }
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw DomainError("cannot create " + dir.string() + ": " + ec.message());
    }
}

// Field given explicitly, else the one referenced by the dataset manifest.
std::unique_ptr<RadianceField> resolve_field(const std::string& field, const fs::path& manifest) {
    if (!field.empty()) {
        return load_field(field);
    }
    const Manifest m = load_manifest(manifest);
    if (!m.field) {
        throw DomainError("manifest has no field; pass --field");
    }
    return load_field(manifest.parent_path() / *m.field);
}

Split parse_split(const std::string& s) { return s == "holdout" ? Split::Holdout : Split::Train; }

const std::map<std::string, ScaleSource> kScaleSources = {
    {"knn", ScaleSource::Knn}, {"cone", ScaleSource::Cone}, {"ten-pixels", ScaleSource::TenPixels}};

// ---- gen-synthetic ---------------------------------------------------------

struct GenArgs {
    std::string out;
    int views = 20;
    int holdout_views = 4;
    int size = 128;
    int gt_steps = 2048;
    double jitter = 0.0;
};

void add_gen(CLI::App& app, GenArgs& a) {
    app.add_option("--out", a.out, "Output dataset directory")->required();
    app.add_option("--views", a.views, "Training cameras on the ring")->check(CLI::Range(3, 10000));
    app.add_option("--holdout-views", a.holdout_views, "Held-out cameras (0 disables)")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--size", a.size, "Image width and height")->check(CLI::Range(1, 8192));
    app.add_option("--gt-steps", a.gt_steps, "Ground-truth march steps")->check(CLI::PositiveNumber);
    app.add_option("--jitter", a.jitter, "Azimuth jitter in degrees");
}

int run_gen(const GenArgs& a, const Global& g) {
    SyntheticSceneSpec spec = standard_scene_spec();
    spec.ring.count = a.views;
    if (a.holdout_views > 0) {
        spec.holdout->count = a.holdout_views;
    } else {
        spec.holdout.reset();
    }
    spec.width = spec.height = a.size;
    spec.focal = 0.0;
    spec.gt_steps = a.gt_steps;
    spec.azimuth_jitter_deg = a.jitter;
    spec.seed = g.seed;
    const SyntheticScene sc = generate(spec);
    ensure_dir(a.out);
    write_dataset(a.out, sc.train, spec.holdout ? &sc.holdout : nullptr, sc.field.get());
    std::cout << "wrote " << sc.train.size() << " training and " << sc.holdout.size()
              << " held-out views to " << a.out << '\n';
    return 0;
}

// ---- train-proxy -----------------------------------------------------------

struct ProxyArgs {
    std::string data;
    std::string out;
    std::vector<int> resolutions = {16, 32, 64};
    GridTrainConfig cfg;
};

void add_proxy(CLI::App& app, ProxyArgs& a) {
    app.add_option("--data", a.data, "Dataset manifest")->required()->check(CLI::ExistingFile);
    app.add_option("--out", a.out, "Output grid file")->required();
    app.add_option("--resolutions", a.resolutions, "Grid resolution per level")->delimiter(',');
    app.add_option("--iters", a.cfg.iterations, "Optimization steps")->check(CLI::NonNegativeNumber);
    app.add_option("--batch", a.cfg.batch_rays, "Rays per step")->check(CLI::PositiveNumber);
    app.add_option("--steps", a.cfg.n_steps, "March steps per ray")->check(CLI::PositiveNumber);
    app.add_option("--lr", a.cfg.learning_rate, "Adam step size")->check(CLI::PositiveNumber);
}

int run_proxy(ProxyArgs a, const Global& g) {
    const Dataset data = load_dataset(a.data);
    Aabb bounds{Vec3::Constant(-1.5), Vec3::Constant(1.5)};
    if (const Manifest m = load_manifest(a.data); m.field) {
        bounds = load_field(fs::path(a.data).parent_path() / *m.field)->bounds();
    }
    DenseGridField grid(bounds, a.resolutions);
    a.cfg.seed = g.seed;
    const GridTrainReport r = train_grid(grid, data, a.cfg);
    grid.save(a.out);
    std::printf("final_loss %.9g\n", r.final_loss);
    return 0;
}

// ---- init ------------------------------------------------------------------

struct InitArgs {
    std::string data;
    std::string field;
    std::string out;
    std::string scale_source = "knn";
    std::optional<std::size_t> budget;
    InitConfig cfg;
};

void add_init_options(CLI::App& app, InitArgs& a) {
    app.add_option("--p-init", a.cfg.p_init, "Initial primitive count")->check(CLI::PositiveNumber);
    app.add_option("--sh-order", a.cfg.sh_order, "SH order")->check(CLI::Range(0, 3));
    app.add_option("--init-steps", a.cfg.n_steps, "March steps for median depths")
        ->check(CLI::PositiveNumber);
    app.add_option("--scale-source", a.scale_source, "Initial scale: knn, cone or ten-pixels")
        ->check(CLI::IsMember({"knn", "cone", "ten-pixels"}));
}

void add_init(CLI::App& app, InitArgs& a) {
    app.add_option("--data", a.data, "Dataset manifest")->required()->check(CLI::ExistingFile);
    app.add_option("--field", a.field, "Proxy field (grid file or analytic .json)")
        ->check(CLI::ExistingFile);
    app.add_option("--out", a.out, "Output PLY")->required();
    app.add_option("--budget", a.budget, "Primitive budget capping p-init")
        ->check(CLI::PositiveNumber);
    add_init_options(app, a);
}

GaussianScene do_init(InitArgs a, const Dataset& data, const RadianceField& field,
                      const Global& g) {
    a.cfg.seed = g.seed;
    a.cfg.budget = a.budget;
    a.cfg.scale_source = kScaleSources.at(a.scale_source);
    return initialize_scene(field, data.cameras, a.cfg);
}

int run_init(const InitArgs& a, const Global& g) {
    const Dataset data = load_dataset(a.data);
    const auto field = resolve_field(a.field, a.data);
    const GaussianScene scene = do_init(a, data, *field, g);
    save_ply(scene, a.out);
    std::cout << "initialized " << scene.size() << " primitives\n";
    return 0;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
    InitArgs init;
    std::string scene;
    std::string out;
    std::optional<int> densify_until;
    std::string penalty = "signed";
    std::string reduction = "mean";
    bool no_densify = false;
    int checkpoint_interval = 0;
    TrainConfig tc;
    DensifyConfig dc;
};

void add_train(CLI::App& app, TrainArgs& a) {
    a.tc.total_iters = 30000;
    app.add_option("--data", a.init.data, "Dataset manifest")->required()->check(CLI::ExistingFile);
    app.add_option("--field", a.init.field, "Proxy field (grid file or analytic .json)")
        ->check(CLI::ExistingFile);
    app.add_option("--scene", a.scene, "Initial scene PLY (initialized from the field if absent)")
        ->check(CLI::ExistingFile);
    app.add_option("--out", a.out, "Output directory")->required();
    app.add_option("--iters", a.tc.total_iters, "Total iterations")->check(CLI::NonNegativeNumber);
    app.add_option("--densify-until", a.densify_until,
                   "Last densification iteration (default 5/6 of --iters)");
    app.add_option("--budget", a.dc.budget, "Primitive budget")->check(CLI::PositiveNumber);
    app.add_option("--beta", a.dc.beta, "Growth rate without a budget")->check(CLI::NonNegativeNumber);
    app.add_option("--interval", a.dc.interval, "Merge interval")->check(CLI::PositiveNumber);
    app.add_option("--lambda-scale", a.dc.lambda_scale, "Spawn scale in cone radii");
    app.add_option("--prune-threshold", a.dc.prune_threshold, "Opacity pruning threshold");
    app.add_option("--densify-steps", a.dc.n_steps, "March steps for spawn depths")
        ->check(CLI::PositiveNumber);
    app.add_option("--lambda-dssim", a.tc.lambda_dssim, "D-SSIM weight");
    app.add_option("--lambda-opacity", a.tc.lambda_opacity, "Opacity penalty weight");
    app.add_option("--penalty", a.penalty, "Opacity penalty: signed or abs")
        ->check(CLI::IsMember({"signed", "abs"}));
    app.add_option("--penalty-reduction", a.reduction, "Penalty reduction: mean or sum")
        ->check(CLI::IsMember({"mean", "sum"}));
    app.add_flag("--no-densify", a.no_densify, "Disable error-guided insertion");
    app.add_option("--log-interval", a.tc.log_interval, "Metrics record interval")
        ->check(CLI::PositiveNumber);
    app.add_option("--checkpoint-interval", a.checkpoint_interval,
                   "Checkpoint PLY interval (0 disables)")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--lr-position", a.tc.lr.position_init, "Initial position step size");
    app.add_option("--lr-position-final", a.tc.lr.position_final, "Final position step size");
    app.add_option("--lr-opacity", a.tc.lr.opacity, "Opacity step size");
    app.add_option("--lr-scale", a.tc.lr.scale, "Scale step size");
    app.add_option("--lr-rotation", a.tc.lr.rotation, "Rotation step size");
    app.add_option("--lr-sh-dc", a.tc.lr.sh_dc, "SH DC step size");
    app.add_option("--lr-sh-rest", a.tc.lr.sh_rest, "Higher-order SH step size");
    add_init_options(app, a.init);
}

int run_train(TrainArgs a, const Global& g) {
    a.tc.densify_until = a.densify_until.value_or(a.tc.total_iters * 5 / 6);
    a.tc.densify = !a.no_densify;
    a.tc.seed = g.seed;
    a.tc.deterministic = g.deterministic;
    a.tc.penalty_mode = a.penalty == "abs" ? OpacityPenaltyMode::Absolute : OpacityPenaltyMode::Signed;
    a.tc.penalty_reduction = a.reduction == "sum" ? PenaltyReduction::Sum : PenaltyReduction::Mean;
    a.dc.seed = g.seed;
    a.tc.validate();
    a.dc.validate();

    const Dataset data = load_dataset(a.init.data);
    const auto field = resolve_field(a.init.field, a.init.data);
    GaussianScene scene;
    if (!a.scene.empty()) {
        scene = load_ply(a.scene);
    } else {
        a.init.budget = a.dc.budget;
        scene = do_init(a.init, data, *field, g);
    }

    const fs::path out(a.out);
    ensure_dir(out);
    std::ofstream metrics(out / "metrics.csv");
    metrics << "iteration,loss,psnr,n_gaussians,pruned,inserted\n";
    metrics.precision(10);
    TrainHooks hooks;
    hooks.on_record = [&](const TrainRecord& r) {
        metrics << r.iteration << ',' << r.loss << ',' << format_psnr(r.psnr) << ','
                << r.n_gaussians << ',' << r.pruned << ',' << r.inserted << '\n';
        metrics.flush();
    };
    if (a.checkpoint_interval > 0) {
        ensure_dir(out / "checkpoints");
        hooks.checkpoint_interval = a.checkpoint_interval;
        hooks.on_checkpoint = [&](const GaussianScene& s, int it) {
            char name[64];
            std::snprintf(name, sizeof(name), "iter_%06d.ply", it);
            save_ply(s, out / "checkpoints" / name);
        };
    }
    const TrainResult r = train(scene, data, *field, a.tc, a.dc, hooks);

    std::ofstream merges(out / "merges.csv");
    merges << "iteration,pruned,accumulated,inserted,total\n";
    for (const auto& m : r.merges) {
        merges << m.iteration << ',' << m.pruned << ',' << m.accumulated << ',' << m.inserted
               << ',' << m.total << '\n';
    }
    save_ply(scene, out / "final.ply");
    std::printf("trained %d iterations, %zu primitives, final loss %.6g\n", a.tc.total_iters,
                scene.size(), r.final_loss);
    return 0;
}

// ---- render / metrics / analyze --------------------------------------------

struct ViewArgs {
    std::string scene;
    std::string data;
    std::string split = "train";
    std::string out;
    int bins = 32;
};

void add_view_inputs(CLI::App& app, ViewArgs& a) {
    app.add_option("--scene", a.scene, "Scene PLY")->required()->check(CLI::ExistingFile);
    app.add_option("--data", a.data, "Dataset manifest")->required()->check(CLI::ExistingFile);
    app.add_option("--split", a.split, "train or holdout")->check(CLI::IsMember({"train", "holdout"}));
}

int run_render(const ViewArgs& a) {
    const GaussianScene scene = load_ply(a.scene);
    const Dataset data = load_dataset(a.data, parse_split(a.split));
    RenderOptions opts;
    opts.background = data.background;
    ensure_dir(a.out);
    for (std::size_t i = 0; i < data.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "%s_%03zu.png", a.split.c_str(), i);
        save_png(render(scene, data.cameras[i], opts).color, fs::path(a.out) / name);
    }
    std::cout << "rendered " << data.size() << " views\n";
    return 0;
}

int run_metrics(const ViewArgs& a) {
    const GaussianScene scene = load_ply(a.scene);
    const Dataset data = load_dataset(a.data, parse_split(a.split));
    RenderOptions opts;
    opts.background = data.background;
    double psnr_sum = 0.0;
    double ssim_sum = 0.0;
    std::printf("view,psnr,ssim\n");
    for (std::size_t i = 0; i < data.size(); ++i) {
        const ImageBuffer img = render(scene, data.cameras[i], opts).color;
        const double p = psnr(img, data.images[i]);
        const double s = ssim(img, data.images[i]);
        psnr_sum += p;
        ssim_sum += s;
        std::printf("%zu,%s,%.6f\n", i, format_psnr(p).c_str(), s);
    }
    const double n = static_cast<double>(data.size());
    std::printf("mean_psnr %s\nmean_ssim %.6f\nprimitives %zu\n", format_psnr(psnr_sum / n).c_str(),
                ssim_sum / n, scene.size());
    return 0;
}

int run_analyze(const ViewArgs& a) {
    const GaussianScene scene = load_ply(a.scene);
    const Dataset data = load_dataset(a.data, parse_split(a.split));
    RenderOptions opts;
    opts.background = data.background;
    const BlendCountStats blend = blend_count_stats(scene, data.cameras, opts);
    const Histogram scales = scale_histogram(scene, a.bins, data.cameras);
    const Histogram sizes = perceived_size_histogram(scene, data.cameras, a.bins);
    const fs::path out(a.out);
    ensure_dir(out);
    nlohmann::json bj;
    bj["mean"] = blend.mean;
    bj["per_view"] = blend.per_view;
    bj["pixels"] = blend.pixels;
    write_text(out / "blend_count.json", bj.dump(2));
    write_text(out / "scale_histogram.csv", histogram_csv(scales));
    write_text(out / "scale_histogram.json", histogram_json(scales));
    write_text(out / "perceived_size_histogram.csv", histogram_csv(sizes));
    write_text(out / "perceived_size_histogram.json", histogram_json(sizes));
    std::printf("mean_blend_count %.6f\n", blend.mean);
    return 0;
}

// ---- verify-equivalence / gradcheck ----------------------------------------

struct EquivArgs {
    std::string data;
    std::string field;
    std::string out;
    int segments = 64;
    std::size_t camera = 0;
    double t_near = 0.05;
    std::optional<double> t_far;
    bool low_pass = false;
};

void add_equiv(CLI::App& app, EquivArgs& a) {
    app.add_option("--data", a.data, "Dataset manifest providing the camera")
        ->required()
        ->check(CLI::ExistingFile);
    app.add_option("--field", a.field, "Field (defaults to the manifest's)")->check(CLI::ExistingFile);
    app.add_option("--segments", a.segments, "Frustums per pixel")->check(CLI::PositiveNumber);
    app.add_option("--camera", a.camera, "Camera index");
    app.add_option("--t-near", a.t_near, "Near distance")->check(CLI::PositiveNumber);
    app.add_option("--t-far", a.t_far, "Far distance (default: farthest field corner)");
    app.add_flag("--low-pass", a.low_pass, "Enable the compensated low-pass filter (negative check)");
    app.add_option("--out", a.out, "Write the JSON report here as well");
}

int run_equiv(const EquivArgs& a) {
    const Dataset data = load_dataset(a.data);
    const auto field = resolve_field(a.field, a.data);
    if (a.camera >= data.size()) {
        throw DomainError("camera index out of range");
    }
    const Camera& cam = data.cameras[a.camera];
    double t_far = 0.0;
    if (a.t_far) {
        t_far = *a.t_far;
    } else {
        const Aabb b = field->bounds();
        for (int k = 0; k < 8; ++k) {
            const Vec3 corner((k & 1) ? b.hi.x() : b.lo.x(), (k & 2) ? b.hi.y() : b.lo.y(),
                              (k & 4) ? b.hi.z() : b.lo.z());
            t_far = std::max(t_far, (corner - cam.center()).norm());
        }
    }
    EquivalenceOptions opts;
    if (a.low_pass) {
        opts.render.low_pass = true;
        opts.render.low_pass_mode = LowPassMode::Compensated;
    }
    const EquivalenceReport r =
        verify_equivalence(*field, cam, probe_grid(cam), a.t_near, t_far, a.segments, opts);
    const std::string js = r.to_json();
    std::cout << js << '\n';
    if (!a.out.empty()) {
        write_text(a.out, js);
    }
    if (!r.passed) {
        std::cerr << "error: equivalence failed, max_abs_diff " << r.max_abs_diff << '\n';
        return 1;
    }
    return 0;
}

struct GradArgs {
    int primitives = 20;
    int size = 8;
    int sh_order = 1;
    double tolerance = 1e-3;
};

void add_grad(CLI::App& app, GradArgs& a) {
    app.add_option("--primitives", a.primitives, "Random primitives")->check(CLI::Range(1, 1000));
    app.add_option("--size", a.size, "Image width and height")->check(CLI::Range(1, 256));
    app.add_option("--sh-order", a.sh_order, "SH order")->check(CLI::Range(0, 3));
    app.add_option("--tolerance", a.tolerance, "Maximum relative error");
}

int run_grad(const GradArgs& a, const Global& g) {
    const GradCheckCase c = random_gradcheck_case(a.primitives, a.size, a.sh_order, g.seed);
    const GradCheckReport r = gradient_check(c.scene, c.camera, c.options, c.weights);
    std::cout << r.to_json() << '\n';
    if (!(r.max() < a.tolerance)) {
        std::cerr << "error: gradient check failed, max relative error " << r.max() << '\n';
        return 1;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"conesplat: Gaussian splatting with error-guided, cone-sized densification"};
    app.require_subcommand(1);
    // Global options are also accepted after the subcommand (`train --seed 7`).
    app.fallthrough();
    app.set_config("--config", "", "Key-value config file; command-line flags override it");
    Global g;
    app.add_option("--seed", g.seed, "Seed for every random draw");
    app.add_flag("--deterministic", g.deterministic, "Require bit-reproducible output");
    app.add_option("--threads", g.threads, "Worker thread cap (0 = all cores)")
        ->check(CLI::NonNegativeNumber);

    GenArgs gen;
    add_gen(*app.add_subcommand("gen-synthetic", "Generate the standard synthetic dataset"), gen);
    ProxyArgs proxy;
    add_proxy(*app.add_subcommand("train-proxy", "Fit a dense grid proxy field to a dataset"), proxy);
    InitArgs init;
    add_init(*app.add_subcommand("init", "Place initial primitives at proxy median depths"), init);
    TrainArgs tr;
    add_train(*app.add_subcommand("train", "Optimize a scene with densification"), tr);
    ViewArgs render_args, metrics_args, analyze_args;
    {
        auto* c = app.add_subcommand("render", "Render a scene into PNGs");
        add_view_inputs(*c, render_args);
        c->add_option("--out", render_args.out, "Output directory")->required();
    }
    add_view_inputs(*app.add_subcommand("metrics", "Per-view PSNR and SSIM"), metrics_args);
    {
        auto* c = app.add_subcommand("analyze", "Blend counts and size histograms");
        add_view_inputs(*c, analyze_args);
        c->add_option("--out", analyze_args.out, "Output directory")->required();
        c->add_option("--bins", analyze_args.bins, "Histogram bins")->check(CLI::PositiveNumber);
    }
    EquivArgs equiv;
    add_equiv(*app.add_subcommand("verify-equivalence",
                                  "Check frustum splats against volume rendering"),
              equiv);
    GradArgs grad;
    add_grad(*app.add_subcommand("gradcheck", "Finite-difference check of the backward pass"),
             grad);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        set_thread_count(g.threads);
        const std::string cmd = app.get_subcommands().front()->get_name();
        if (cmd == "gen-synthetic") return run_gen(gen, g);
        if (cmd == "train-proxy") return run_proxy(proxy, g);
        if (cmd == "init") return run_init(init, g);
        if (cmd == "train") return run_train(tr, g);
        if (cmd == "render") return run_render(render_args);
        if (cmd == "metrics") return run_metrics(metrics_args);
        if (cmd == "analyze") return run_analyze(analyze_args);
        if (cmd == "verify-equivalence") return run_equiv(equiv);
        if (cmd == "gradcheck") return run_grad(grad, g);
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
