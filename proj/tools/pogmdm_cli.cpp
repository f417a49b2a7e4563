// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pogmdm Authors

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pogmdm/pogmdm.hpp"

using namespace pogmdm;
namespace fs = std::filesystem;

namespace {

struct ShapeOpt {
    std::size_t size = 64;
    std::size_t rows = 0, cols = 0;
    Shape get() const { return {rows ? rows : size, cols ? cols : size}; }
    void add(CLI::App* app) {
        app->add_option("--size", size, "square image side")->capture_default_str();
        app->add_option("--rows", rows, "image rows (overrides --size)");
        app->add_option("--cols", cols, "image columns (overrides --size)");
    }
};

std::optional<config::Table> load_config(const std::string& path) {
    if (path.empty()) return std::nullopt;
    return config::Table::load(path);
}

void log(const std::string& msg) { std::cerr << msg << "\n"; }

std::string csv_row(const std::string& name, const metrics::Scores& s) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.8g\n", name.c_str(), s.psnr, s.ssim, s.nmse);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
}

// ------------------------------------------------------------------ dataset

struct DatasetArgs {
    std::string kind = "textured", out;
    std::size_t count = 500;
    std::uint64_t seed = 1;
    ShapeOpt shape;
};

void run_dataset(const DatasetArgs& a) {
    const auto images = io::make_dataset(io::parse_dataset_kind(a.kind), a.count, a.shape.get(), a.seed);
    io::write_dataset(a.out, images);
    log("wrote " + std::to_string(images.size()) + " images to " + a.out);
}

// ------------------------------------------------------------------ train

struct TrainArgs {
    std::string data, out = "model.pgdm", log_path, config, init;
    std::optional<std::size_t> steps, batch;
    std::optional<double> lr, ema;
    std::optional<std::uint64_t> seed;
    std::optional<double> init_gamma;
};

void run_train(const TrainArgs& a) {
    TrainConfig cfg;
    if (auto t = load_config(a.config)) config::apply(*t, cfg);
    if (a.steps) cfg.steps = *a.steps;
    if (a.batch) cfg.batch = *a.batch;
    if (a.lr) cfg.lr = *a.lr;
    if (a.ema) cfg.ema_momentum = *a.ema;
    if (a.seed) cfg.seed = *a.seed;
    cfg.validate();

    const auto images = io::read_dataset(a.data);
    if (images.empty()) throw std::runtime_error("no *.bin images in '" + a.data + "'");
    ModelParams init;
    if (!a.init.empty()) {
        init = io::read_model(a.init);
    } else {
        init = ModelParams::initial();
        if (a.init_gamma)
            for (double& g : init.shearlet.gamma) g = *a.init_gamma;
    }
    log("training on " + std::to_string(images.size()) + " images for " + std::to_string(cfg.steps) +
        " steps, " + std::to_string(worker_count()) + " worker(s)");

    std::ofstream csv;
    if (!a.log_path.empty()) {
        csv.open(a.log_path);
        if (!csv) throw std::runtime_error("cannot write '" + a.log_path + "'");
        csv << "step,loss\n";
    }
    const auto t0 = std::chrono::steady_clock::now();
    const TrainResult res = train(init, images, cfg, [&](std::size_t step, double loss) {
        if (csv.is_open()) csv << step << ',' << loss << '\n';
        if ((step + 1) % 50 == 0 || step + 1 == cfg.steps) {
            const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            char buf[128];
            std::snprintf(buf, sizeof buf, "step %zu/%zu loss %.5f (%.0f s)", step + 1, cfg.steps, loss, sec);
            log(buf);
        }
    });
    io::write_model(a.out, res.ema);
    log("wrote " + a.out);
}

// ------------------------------------------------------------------ simulate / mask

struct MaskArgs {
    std::string pattern = "cartesian";
    double accel = 4.0, acl = 0.08;
    std::uint64_t seed = 0;
    void add(CLI::App* app) {
        app->add_option("--pattern", pattern, "cartesian, cartesian_horizontal, radial, spiral, gaussian2d")
            ->capture_default_str();
        app->add_option("--accel", accel, "target acceleration")->capture_default_str();
        app->add_option("--acl", acl, "fully sampled centre fraction (cartesian)")->capture_default_str();
        app->add_option("--mask-seed", seed, "mask seed")->capture_default_str();
    }
    SamplingMask make(Shape s) const { return mri::make_mask(parse_mask_pattern(pattern), s, accel, acl, seed); }
};

struct SimulateArgs {
    std::string phantom = "shepp-logan", out = "kspace.kspc", truth;
    std::size_t coils = 4;
    double noise = 0.0;
    std::uint64_t seed = 0;
    ShapeOpt shape;
    MaskArgs mask;
};

void run_simulate(const SimulateArgs& a) {
    const Shape s = a.shape.get();
    const ComplexImage x = mri::phantom(s, mri::parse_phantom_kind(a.phantom), a.seed);
    const Sensitivities sens = mri::simulate_coils(s, a.coils, a.seed);
    const SamplingMask mask = a.mask.make(s);
    KSpaceData z = mri::forward(x, sens, mask);
    if (a.noise > 0.0) mri::add_noise(z, a.noise, a.seed);
    io::write_kspace(a.out, z);
    if (!a.truth.empty()) io::write_image(a.truth, x);
    char buf[160];
    std::snprintf(buf, sizeof buf, "wrote %s: %zux%zu, %zu coils, %zu samples (acceleration %.2f)", a.out.c_str(),
                  s.rows, s.cols, a.coils, mask.sampled(), mask.achieved_acceleration());
    log(buf);
}

struct MaskCmdArgs {
    std::string kspace, out = "mask.png";
    ShapeOpt shape;
    MaskArgs mask;
};

void run_mask(const MaskCmdArgs& a) {
    const SamplingMask mask = a.kspace.empty() ? a.mask.make(a.shape.get()) : io::read_kspace(a.kspace).mask;
    io::write_png(a.out, mask);
    char buf[128];
    std::snprintf(buf, sizeof buf, "wrote %s: %zu samples, acceleration %.3f", a.out.c_str(), mask.sampled(),
                  mask.achieved_acceleration());
    log(buf);
}

// ------------------------------------------------------------------ reconstruct / sweep

struct ReconArgs {
    std::string kspace, model, config, out = "recon", ref, prior = "pogmdm";
    std::optional<std::size_t> samples, steps;
    std::optional<double> ccdf_start;
    std::optional<std::uint64_t> seed;
    std::optional<bool> map;
    double tv_weight = 0.05, tv_eps = 0.05;
};

SamplerConfig sampler_config(const ReconArgs& a) {
    SamplerConfig cfg;
    if (auto t = load_config(a.config)) config::apply(*t, cfg);
    if (a.samples) cfg.n_posterior = *a.samples;
    if (a.steps) cfg.steps = *a.steps;
    if (a.ccdf_start) cfg.ccdf_start = *a.ccdf_start;
    if (a.seed) cfg.seed = *a.seed;
    if (a.map) cfg.map = *a.map;
    cfg.validate();
    return cfg;
}

template <typename Fn>
ReconResult with_prior(const ReconArgs& a, const KSpaceData& z, Fn&& fn) {
    if (a.prior == "pogmdm") {
        if (a.model.empty()) throw std::invalid_argument("--model is required for the pogmdm prior");
        const PogmdmModel model(io::read_model(a.model), z.shape());
        return fn(PogmdmPrior{model});
    }
    if (a.prior == "tv") return fn(TvPrior{a.tv_weight, a.tv_eps});
    throw std::invalid_argument("unknown prior '" + a.prior + "' (pogmdm or tv)");
}

std::optional<RealImage> load_reference(const std::string& path) {
    if (path.empty()) return std::nullopt;
    return io::read_real_image(path);
}

void run_reconstruct(const ReconArgs& a) {
    const KSpaceData z = io::read_kspace(a.kspace);
    const SamplerConfig cfg = sampler_config(a);
    log("reconstructing " + std::to_string(z.shape().rows) + "x" + std::to_string(z.shape().cols) + ", " +
        std::to_string(z.coil_count()) + " coils, " + std::to_string(cfg.n_posterior) + " chains, " +
        std::to_string(worker_count()) + " worker(s)");
    const auto t0 = std::chrono::steady_clock::now();
    const ReconResult res = with_prior(a, z, [&](const auto& prior) { return estimate(prior, z, cfg); });
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const fs::path out = a.out;
    fs::create_directories(out);
    const RealImage mmse = metrics::rss_weight(res.mmse, res.sensitivities);
    io::write_image(out / "mmse.bin", mmse);
    io::write_png(out / "mmse.png", mmse);
    io::write_image(out / "variance.bin", res.variance);
    io::write_png(out / "variance.png", res.variance);
    std::optional<RealImage> map;
    if (!res.map_image.empty()) {
        map = metrics::rss_weight(res.map_image, res.sensitivities);
        io::write_image(out / "map.bin", *map);
        io::write_png(out / "map.png", *map);
    }
    for (std::size_t i = 0; i < res.sensitivities.size(); ++i)
        io::write_png(out / ("sens_" + std::to_string(i) + ".png"), magnitude(res.sensitivities[i]));
    io::write_recon(out / "recon.rcon", res);

    const RealImage zf = mri::zero_filled(z).rss;
    io::write_png(out / "zero_filled.png", zf);
    std::string table = "file,psnr,ssim,nmse\n";
    if (auto ref = load_reference(a.ref)) {
        table += csv_row("zero_filled", metrics::evaluate(zf, *ref));
        table += csv_row("mmse", metrics::evaluate(mmse, *ref));
        if (map) table += csv_row("map", metrics::evaluate(*map, *ref));
    }
    write_text(out / "metrics.csv", table);
    char buf[128];
    std::snprintf(buf, sizeof buf, "done in %.1f s, results in %s", sec, out.c_str());
    log(buf);
    if (a.ref.empty()) log("no --ref given: metrics.csv has no rows");
}

struct SweepArgs {
    ReconArgs recon;
    std::vector<std::string> grid;
    std::string out = "sweep.csv";
};

struct Axis {
    std::string name;
    std::vector<double> values;
};

Axis parse_axis(const std::string& entry) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("grid entry must look like name=v1,v2: " + entry);
    Axis ax{entry.substr(0, eq), {}};
    std::stringstream ss(entry.substr(eq + 1));
    std::string item;
    while (std::getline(ss, item, ',')) ax.values.push_back(std::stod(item));
    if (ax.values.empty()) throw std::invalid_argument("grid entry without values: " + entry);
    return ax;
}

void set_param(SamplerConfig& cfg, const std::string& name, double v) {
    if (name == "mu") cfg.mu = v;
    else if (name == "lambda") cfg.lambda = v;
    else if (name == "snr") cfg.snr = v;
    else if (name == "ccdf_start") cfg.ccdf_start = v;
    else if (name == "map_lr") cfg.map_lr = v;
    else if (name == "map_prior_weight") cfg.map_prior_weight = v;
    else if (name == "zeta_min") cfg.zeta_min = v;
    else if (name == "zeta_max") cfg.zeta_max = v;
    else if (name == "steps") cfg.steps = static_cast<std::size_t>(v);
    else if (name == "corrector_steps") cfg.corrector_steps = static_cast<std::size_t>(v);
    else throw std::invalid_argument("cannot sweep '" + name + "'");
}

void run_sweep(const SweepArgs& a) {
    if (a.recon.ref.empty()) throw std::invalid_argument("sweep needs --ref to score runs");
    const KSpaceData z = io::read_kspace(a.recon.kspace);
    const RealImage ref = io::read_real_image(a.recon.ref);
    std::vector<Axis> axes;
    for (const auto& g : a.grid) axes.push_back(parse_axis(g));
    if (axes.empty()) throw std::invalid_argument("sweep needs at least one --grid");

    std::ofstream csv(a.out);
    if (!csv) throw std::runtime_error("cannot write '" + a.out + "'");
    for (const auto& ax : axes) csv << ax.name << ',';
    csv << "psnr_mmse,ssim_mmse,psnr_map,ssim_map,status\n";

    std::vector<std::size_t> idx(axes.size(), 0);
    const SamplerConfig base = sampler_config(a.recon);
    for (;;) {
        SamplerConfig cfg = base;
        std::string label;
        for (std::size_t i = 0; i < axes.size(); ++i) {
            set_param(cfg, axes[i].name, axes[i].values[idx[i]]);
            csv << axes[i].values[idx[i]] << ',';
            label += axes[i].name + "=" + std::to_string(axes[i].values[idx[i]]) + " ";
        }
        try {
            cfg.validate();
            const ReconResult res = with_prior(a.recon, z, [&](const auto& p) { return estimate(p, z, cfg); });
            const auto m = metrics::evaluate(metrics::rss_weight(res.mmse, res.sensitivities), ref);
            csv << m.psnr << ',' << m.ssim << ',';
            if (!res.map_image.empty()) {
                const auto mp = metrics::evaluate(metrics::rss_weight(res.map_image, res.sensitivities), ref);
                csv << mp.psnr << ',' << mp.ssim << ",ok\n";
            } else {
                csv << ",,ok\n";
            }
            log(label + "-> mmse psnr " + std::to_string(m.psnr));
        } catch (const std::exception& e) {
            csv << ",,,,\"" << e.what() << "\"\n";
            log(label + "-> failed: " + e.what());
        }
        csv.flush();
        std::size_t k = 0;
        while (k < axes.size() && ++idx[k] == axes[k].values.size()) idx[k++] = 0;
        if (k == axes.size()) break;
    }
    log("wrote " + a.out);
}

// ------------------------------------------------------------------ eval / filters

struct EvalArgs {
    std::vector<std::string> pred;
    std::string ref, out = "metrics.csv";
};

void run_eval(const EvalArgs& a) {
    const RealImage ref = io::read_real_image(a.ref);
    std::string table = "file,psnr,ssim,nmse\n";
    for (const auto& p : a.pred) {
        const auto s = metrics::evaluate(io::read_real_image(p), ref);
        table += csv_row(p, s);
        std::cout << csv_row(p, s);
    }
    write_text(a.out, table);
}

struct FilterArgs {
    std::string model, out = "filters";
    std::size_t size = 64;
};

void run_filters(const FilterArgs& a) {
    const ModelParams p = io::read_model(a.model);
    const ShearletSystem sys = ShearletSystem::build(p.shearlet, {a.size, a.size});
    const fs::path out = a.out;
    fs::create_directories(out);
    std::string table = "filter,cone,scale,shear,gamma\n";
    for (std::size_t k = 0; k < kFilterCount; ++k) {
        const RealImage& f = sys.filter(k);
        // centre the kernel and map [-max|f|, max|f|] to [0, 255]
        double peak = 0.0;
        for (double v : f) peak = std::max(peak, std::abs(v));
        RealImage shown(f.shape());
        const std::size_t n = f.rows(), m = f.cols();
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < m; ++c)
                shown((r + n / 2) % n, (c + m / 2) % m) = peak > 0.0 ? 0.5 + 0.5 * f(r, c) / peak : 0.5;
        char name[32];
        std::snprintf(name, sizeof name, "filter_%02zu.png", k);
        io::write_png(out / name, shown, 1.0);
        const FilterTag tag = filter_tag(k);
        table += std::to_string(k) + "," + std::to_string(tag.cone) + "," + std::to_string(tag.scale) + "," +
                 std::to_string(tag.shear) + "," + std::to_string(p.shearlet.gamma[k]) + "\n";
    }
    write_text(out / "filters.csv", table);
    log("wrote 20 filters to " + a.out);
}

void add_recon_options(CLI::App* app, ReconArgs& a) {
    app->add_option("--kspace", a.kspace, "k-space file")->required()->check(CLI::ExistingFile);
    app->add_option("--model", a.model, "model file (pogmdm prior)");
    app->add_option("--config,--pattern-config", a.config, "TOML file with a [sampler] table");
    app->add_option("--prior", a.prior, "pogmdm or tv")->capture_default_str();
    app->add_option("--samples", a.samples, "posterior samples");
    app->add_option("--steps", a.steps, "noise levels N");
    app->add_option("--ccdf-start", a.ccdf_start, "fraction of the schedule to skip");
    app->add_option("--seed", a.seed, "sampler seed");
    app->add_option("--ref", a.ref, "reference magnitude image for metrics");
    app->add_option("--tv-weight", a.tv_weight, "tv prior weight")->capture_default_str();
    app->add_option("--tv-eps", a.tv_eps, "tv smoothing")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pogmdm: shearlet product-of-GMM diffusion prior for parallel MRI"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "pogmdm 1.0.0");

    DatasetArgs ds;
    auto* c_ds = app.add_subcommand("dataset", "generate synthetic training images");
    c_ds->add_option("--kind", ds.kind, "ellipses or textured")->capture_default_str();
    c_ds->add_option("--count", ds.count)->capture_default_str();
    c_ds->add_option("--seed", ds.seed)->capture_default_str();
    c_ds->add_option("--out", ds.out, "output directory")->required();
    ds.shape.add(c_ds);
    c_ds->callback([&] { run_dataset(ds); });

    TrainArgs tr;
    auto* c_tr = app.add_subcommand("train", "fit the prior by denoising score matching");
    c_tr->add_option("--data", tr.data, "directory of image containers")->required()->check(CLI::ExistingDirectory);
    c_tr->add_option("--config", tr.config, "TOML file with a [train] table");
    c_tr->add_option("--steps", tr.steps);
    c_tr->add_option("--batch", tr.batch);
    c_tr->add_option("--lr", tr.lr);
    c_tr->add_option("--ema", tr.ema, "EMA momentum");
    c_tr->add_option("--seed", tr.seed);
    c_tr->add_option("--init", tr.init, "start from this model file");
    c_tr->add_option("--init-gamma", tr.init_gamma, "initial filter weight (default 0.03)");
    c_tr->add_option("--out", tr.out, "model file")->capture_default_str();
    c_tr->add_option("--log", tr.log_path, "CSV of step,loss");
    c_tr->callback([&] { run_train(tr); });

    SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "simulate multi-coil k-space of a phantom");
    c_sim->add_option("--phantom", sim.phantom, "shepp-logan, ellipses or flat")->capture_default_str();
    c_sim->add_option("--coils", sim.coils)->capture_default_str();
    c_sim->add_option("--noise", sim.noise, "k-space noise std")->capture_default_str();
    c_sim->add_option("--seed", sim.seed, "phantom, coil and noise seed")->capture_default_str();
    c_sim->add_option("--out", sim.out, "k-space file")->capture_default_str();
    c_sim->add_option("--truth", sim.truth, "also write the true image here");
    sim.shape.add(c_sim);
    sim.mask.add(c_sim);
    c_sim->callback([&] { run_simulate(sim); });

    MaskCmdArgs mk;
    auto* c_mk = app.add_subcommand("mask", "write a sampling mask as PNG");
    c_mk->add_option("--kspace", mk.kspace, "take the mask from this k-space file");
    c_mk->add_option("--out", mk.out)->capture_default_str();
    mk.shape.add(c_mk);
    mk.mask.add(c_mk);
    c_mk->callback([&] { run_mask(mk); });

    ReconArgs rc;
    auto* c_rc = app.add_subcommand("reconstruct", "joint image and sensitivity reconstruction");
    add_recon_options(c_rc, rc);
    c_rc->add_option("--out", rc.out, "output directory")->capture_default_str();
    c_rc->add_flag("--map,!--no-map", rc.map, "MAP refinement of the first sample");
    c_rc->callback([&] { run_reconstruct(rc); });

    SweepArgs sw;
    auto* c_sw = app.add_subcommand("sweep", "grid search over sampler settings");
    add_recon_options(c_sw, sw.recon);
    c_sw->add_option("--grid", sw.grid, "name=v1,v2,... (repeatable)")->required();
    c_sw->add_flag("--map,!--no-map", sw.recon.map, "score the MAP refinement too");
    c_sw->add_option("--out", sw.out, "CSV file")->capture_default_str();
    c_sw->callback([&] { run_sweep(sw); });

    EvalArgs ev;
    auto* c_ev = app.add_subcommand("eval", "PSNR, SSIM and NMSE against a reference");
    c_ev->add_option("--pred", ev.pred, "image container(s)")->required();
    c_ev->add_option("--ref", ev.ref, "reference image container")->required();
    c_ev->add_option("--out", ev.out)->capture_default_str();
    c_ev->callback([&] { run_eval(ev); });

    FilterArgs fl;
    auto* c_fl = app.add_subcommand("filters", "dump the learned shearlet filters as PNG");
    c_fl->add_option("--model", fl.model)->required()->check(CLI::ExistingFile);
    c_fl->add_option("--size", fl.size, "grid used to build the filters")->capture_default_str();
    c_fl->add_option("--out", fl.out)->capture_default_str();
    c_fl->callback([&] { run_filters(fl); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
