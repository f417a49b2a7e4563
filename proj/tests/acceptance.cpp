// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pogmdm Authors

// Acceptance runner: one PASS/FAIL line per criterion.
//   acceptance [--criteria 1,2,...] [--work DIR]

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include "pogmdm/pogmdm.hpp"

using namespace pogmdm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

fs::path g_work = "acceptance_work";

// ------------------------------------------------------------------ helpers

ModelParams random_params(std::uint64_t seed) {
    ModelParams p = ModelParams::initial();
    RandomStream rng(seed, 7);
    for (double& v : p.shearlet.lowpass) v += 0.05 * rng.normal();
    for (double& v : p.shearlet.generator) v += 0.02 * rng.normal();
    for (auto& f : p.free_weights) {
        for (double& v : f) v = 0.05 + rng.uniform();
        const double t = std::accumulate(f.begin(), f.end(), 0.0);
        for (double& v : f) v /= t;
    }
    for (double& g : p.shearlet.gamma) g = rng.uniform(0.05, 0.5);
    return p;
}

ComplexImage random_complex(Shape s, RandomStream& rng) {
    ComplexImage x(s);
    for (auto& v : x) v = Complex(rng.normal(), rng.normal());
    return x;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); }

// ||a - b|| / ||b|| over collected pairs
struct GradCheck {
    double diff2 = 0.0, ref2 = 0.0;
    void add(double analytic, double fd) {
        diff2 += (analytic - fd) * (analytic - fd);
        ref2 += fd * fd;
    }
    double error() const { return ref2 > 0.0 ? std::sqrt(diff2 / ref2) : std::sqrt(diff2); }
};

std::vector<double> simplex_oracle(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<double> best;
    double best_d = 1e300;
    for (std::size_t mask = 1; mask < (1u << n); ++mask) {
        double sum = 0.0;
        std::size_t k = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask & (1u << i)) sum += v[i], ++k;
        const double theta = (sum - 1.0) / static_cast<double>(k);
        std::vector<double> x(n, 0.0);
        bool ok = true;
        for (std::size_t i = 0; i < n; ++i)
            if (mask & (1u << i)) ok = ok && (x[i] = v[i] - theta) >= 0.0;
        if (!ok) continue;
        double d = 0.0;
        for (std::size_t i = 0; i < n; ++i) d += (x[i] - v[i]) * (x[i] - v[i]);
        if (d < best_d) best_d = d, best = x;
    }
    return best;
}

std::string fmt(const char* f, double a) {
    char buf[96];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

// ------------------------------------------------------------------ 1

Outcome parameter_count() {
    const PogmdmModel model(ModelParams::initial(), {64, 64});
    const std::size_t n = model.learnable_parameter_count();
    const std::size_t flat = model.params().flatten().size();
    return {n == 1578 && flat == 1578, "count=" + std::to_string(n) + " flat=" + std::to_string(flat)};
}

// ------------------------------------------------------------------ 2

Outcome adjoint_suite() {
    double worst = 0.0;
    std::size_t instances = 0;
    RandomStream rng(2024);
    const Shape s{16, 16};
    for (int t = 0; t < 10; ++t) {
        const ShearletSystem sys = ShearletSystem::build(random_params(100 + t).shearlet, s);
        const RealImage x = rng.normal_image(s);
        std::vector<RealImage> y;
        for (std::size_t k = 0; k < kFilterCount; ++k) y.push_back(rng.normal_image(s));
        const auto kx = sys.analyze(x);
        double lhs = 0.0;
        for (std::size_t k = 0; k < kFilterCount; ++k) lhs += dot(kx[k], y[k]);
        const double rhs = dot(x, sys.adjoint(y));
        worst = std::max(worst, rel(lhs, rhs));
        ++instances;
    }
    for (std::size_t c : {1u, 4u}) {
        for (int t = 0; t < 10; ++t) {
            SamplingMask mask;
            mask.bits = Image<std::uint8_t>(s, 0);
            for (auto& b : mask.bits) b = rng.uniform() < 0.35;
            mask.bits[0] = 1;
            Sensitivities sens;
            for (std::size_t i = 0; i < c; ++i) sens.push_back(random_complex(s, rng));
            const ComplexImage x = random_complex(s, rng);
            KSpaceData w;
            w.mask = mask;
            for (std::size_t i = 0; i < c; ++i) {
                std::vector<Complex> v(mask.sampled());
                for (auto& q : v) q = Complex(rng.normal(), rng.normal());
                w.coils.push_back(v);
            }
            const KSpaceData ax = mri::forward(x, sens, mask);
            double lhs = 0.0;
            for (std::size_t i = 0; i < c; ++i)
                for (std::size_t j = 0; j < ax.coils[i].size(); ++j)
                    lhs += std::real(std::conj(ax.coils[i][j]) * w.coils[i][j]);
            const double rhs = dot(x, mri::adjoint_x(sens, w));
            worst = std::max(worst, rel(lhs, rhs));
            ++instances;
        }
    }
    return {worst <= 1e-10 && instances >= 20,
            std::to_string(instances) + " instances, worst relative gap " + fmt("%.2e", worst)};
}

// ------------------------------------------------------------------ 3

Outcome gradient_suite() {
    std::map<std::string, double> err;
    const double h = 1e-6;
    RandomStream rng(33);

    {  // prior score vs energy
        const Shape s{16, 16};
        const PogmdmModel model(random_params(3), s);
        RealImage x = rng.normal_image(s);
        x *= 0.3;
        GradCheck g;
        const double zeta = 0.1;
        const RealImage sc = prior_score(model, x, zeta);
        for (std::size_t p = 0; p < x.size(); p += 5) {
            RealImage a = x, b = x;
            a[p] += h, b[p] -= h;
            g.add(-sc[p], (neg_log_prior(model, a, zeta) - neg_log_prior(model, b, zeta)) / (2 * h));
        }
        err["prior_score"] = g.error();
    }
    {  // tv score
        const Shape s{12, 12};
        const RealImage x = rng.normal_image(s);
        const RealImage sc = tv_score(x, 0.05);
        GradCheck g;
        for (std::size_t p = 0; p < x.size(); p += 3) {
            RealImage a = x, b = x;
            a[p] += h, b[p] -= h;
            g.add(-sc[p], (tv_energy(a, 0.05) - tv_energy(b, 0.05)) / (2 * h));
        }
        err["tv_score"] = g.error();
    }
    {  // likelihood gradients
        const Shape s{8, 12};
        SamplingMask mask;
        mask.bits = Image<std::uint8_t>(s, 0);
        for (auto& b : mask.bits) b = rng.uniform() < 0.5;
        mask.bits[0] = 1;
        Sensitivities sens{random_complex(s, rng), random_complex(s, rng)};
        const ComplexImage x = random_complex(s, rng);
        KSpaceData z;
        z.mask = mask;
        for (int i = 0; i < 2; ++i) {
            std::vector<Complex> v(mask.sampled());
            for (auto& q : v) q = Complex(rng.normal(), rng.normal());
            z.coils.push_back(v);
        }
        const ComplexImage gx = mri::grad_x_likelihood(x, sens, z);
        const Sensitivities gs = mri::grad_sigma_likelihood(x, sens, z);
        GradCheck cx, cs;
        for (std::size_t p = 0; p < s.size(); p += 3) {
            for (Complex dir : {Complex(1, 0), Complex(0, 1)}) {
                const bool re = dir.real() != 0.0;
                ComplexImage a = x, b = x;
                a[p] += h * dir, b[p] -= h * dir;
                cx.add(re ? gx[p].real() : gx[p].imag(),
                       (mri::data_misfit(a, sens, z) - mri::data_misfit(b, sens, z)) / (2 * h));
                Sensitivities sa = sens, sb = sens;
                sa[0][p] += h * dir, sb[0][p] -= h * dir;
                cs.add(re ? gs[0][p].real() : gs[0][p].imag(),
                       (mri::data_misfit(x, sa, z) - mri::data_misfit(x, sb, z)) / (2 * h));
            }
        }
        err["grad_x_likelihood"] = cx.error();
        err["grad_sigma_likelihood"] = cs.error();
    }
    {  // dsm parameter gradient
        const Shape s{16, 16};
        const ModelParams p = random_params(4);
        const auto images = io::make_dataset(io::DatasetKind::textured, 2, s, 5);
        const std::vector<double> zetas{0.05, 0.5};
        std::vector<RealImage> noises{rng.normal_image(s), rng.normal_image(s)};
        const auto lg = dsm_loss_and_gradient(PogmdmModel(p, s), images, zetas, noises);
        const auto flat = p.flatten(), grad = lg.gradient.flatten();
        GradCheck g;
        for (std::size_t i = 0; i < flat.size(); i += 13) {
            const double step = 1e-6 * std::max(1.0, std::abs(flat[i]));
            std::vector<double> a = flat, b = flat;
            a[i] += step, b[i] -= step;
            ModelParams pa = p, pb = p;
            pa.unflatten(a);
            pb.unflatten(b);
            g.add(grad[i], (dsm_loss(PogmdmModel(pa, s), images, zetas, noises) -
                            dsm_loss(PogmdmModel(pb, s), images, zetas, noises)) / (2 * step));
        }
        err["dsm_loss"] = g.error();
    }
    bool ok = true;
    std::string detail;
    for (const auto& [name, e] : err) {
        ok = ok && e <= 1e-4;
        detail += name + "=" + fmt("%.1e", e) + " ";
    }
    return {ok, detail};
}

// ------------------------------------------------------------------ 4

Outcome prox_oracle() {
    const Shape s{8, 8};
    const Eigen::Index n = 8, m = 8, N = 64;
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero((n + 1) * m + n * (m + 1), N);
    Eigen::Index row = 0;
    for (Eigen::Index r = 0; r <= n; ++r)
        for (Eigen::Index c = 0; c < m; ++c, ++row) {
            if (r < n) D(row, r * m + c) += 1;
            if (r > 0) D(row, (r - 1) * m + c) -= 1;
        }
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = 0; c <= m; ++c, ++row) {
            if (c < m) D(row, r * m + c) += 1;
            if (c > 0) D(row, r * m + c - 1) -= 1;
        }
    RandomStream rng(4);
    const ComplexImage v = random_complex(s, rng);
    double worst = 0.0;
    for (double mu : {0.1, 1.0, 10.0}) {
        const Eigen::MatrixXd K = Eigen::MatrixXd::Identity(N, N) + mu * D.transpose() * D;
        Eigen::VectorXd re(N), im(N);
        for (Eigen::Index p = 0; p < N; ++p) re(p) = v[p].real(), im(p) = v[p].imag();
        const Eigen::VectorXd ur = K.ldlt().solve(re), ui = K.ldlt().solve(im);
        const auto u = coil::prox_smoothness({v}, mu);
        for (Eigen::Index p = 0; p < N; ++p)
            worst = std::max({worst, std::abs(u[0][p].real() - ur(p)), std::abs(u[0][p].imag() - ui(p))});
    }
    return {worst <= 1e-8, "max deviation " + fmt("%.2e", worst)};
}

// ------------------------------------------------------------------ 5

Outcome gmm_normalization() {
    double worst = 0.0;
    for (std::uint64_t seed : {0u, 5u}) {
        const ModelParams p = seed == 0 ? ModelParams::initial() : random_params(seed);
        const PogmdmModel model(p, {16, 16});
        for (double zeta : {0.0, 0.1, 1.0}) {
            for (const auto& e : model.experts()) {
                const ExpertKernel k(e, zeta);
                const double sd = std::sqrt(k.variance());
                const double lo = e.grid.lo - 10 * sd, hi = e.grid.hi + 10 * sd;
                const std::size_t steps = 20000;
                const double dx = (hi - lo) / static_cast<double>(steps);
                double total = 0.0;
                for (std::size_t i = 0; i <= steps; ++i) {
                    const double w = (i == 0 || i == steps) ? 0.5 : 1.0;
                    total += w * std::exp(k.evaluate(lo + dx * static_cast<double>(i)).log_psi);
                }
                worst = std::max(worst, std::abs(total * dx - 1.0));
            }
        }
    }
    return {worst <= 1e-3, "max |integral - 1| = " + fmt("%.2e", worst)};
}

// ------------------------------------------------------------------ 6

constexpr Shape kTrainShape{64, 64};

TrainConfig desk_train_config() {
    TrainConfig cfg;
    cfg.steps = 2000;
    cfg.batch = 4;
    cfg.ema_momentum = 0.99;
    cfg.seed = 6;
    return cfg;
}

fs::path model_path() { return g_work / "model.pgdm"; }

struct Trained {
    ModelParams params;
    std::vector<double> losses;
};

Trained train_desk_model() {
    const auto images = io::make_dataset(io::DatasetKind::textured, 500, kTrainShape, 1);
    const TrainConfig cfg = desk_train_config();
    const auto t0 = std::chrono::steady_clock::now();
    const TrainResult res = train(ModelParams::initial(), images, cfg, [&](std::size_t step, double loss) {
        if ((step + 1) % 100 == 0) {
            const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::fprintf(stderr, "  train step %zu loss %.4f (%.0f s)\n", step + 1, loss, sec);
        }
    });
    fs::create_directories(g_work);
    io::write_model(model_path(), res.ema);
    std::FILE* f = std::fopen((g_work / "losses.csv").c_str(), "w");
    if (f) {
        std::fprintf(f, "step,loss\n");
        for (std::size_t i = 0; i < res.losses.size(); ++i) std::fprintf(f, "%zu,%.10g\n", i, res.losses[i]);
        std::fclose(f);
    }
    return {res.ema, res.losses};
}

ModelParams load_or_train() {
    if (fs::exists(model_path())) return io::read_model(model_path());
    std::fprintf(stderr, "  no cached model in %s, training\n", g_work.c_str());
    return train_desk_model().params;
}

Outcome desk_training() {
    const Trained t = train_desk_model();
    const std::size_t tenth = t.losses.size() / 10;
    const double first = std::accumulate(t.losses.begin(), t.losses.begin() + tenth, 0.0) / tenth;
    const double last = std::accumulate(t.losses.end() - tenth, t.losses.end(), 0.0) / tenth;

    const PogmdmModel model(t.params, kTrainShape);
    const auto held = io::make_dataset(io::DatasetKind::textured, 20, kTrainShape, 2);
    const double zeta = 0.1;
    double gain = 0.0, noisy_sum = 0.0, den_sum = 0.0;
    for (std::size_t i = 0; i < held.size(); ++i) {
        RandomStream rng(3, i);
        RealImage y = held[i];
        const RealImage xi = rng.normal_image(kTrainShape);
        for (std::size_t p = 0; p < y.size(); ++p) y[p] += zeta * xi[p];
        const double pn = metrics::psnr(y, held[i]);
        const double pd = metrics::psnr(denoise(model, y, zeta), held[i]);
        noisy_sum += pn;
        den_sum += pd;
        gain += pd - pn;
    }
    gain /= static_cast<double>(held.size());
    std::ostringstream d;
    d << "denoise gain " << fmt("%.2f", gain) << " dB (noisy " << fmt("%.2f", noisy_sum / held.size())
      << ", denoised " << fmt("%.2f", den_sum / held.size()) << "); loss first10% " << fmt("%.4f", first)
      << " last10% " << fmt("%.4f", last);
    return {gain >= 3.0 && last < first, d.str()};
}

// ------------------------------------------------------------------ 7, 8

SamplerConfig desk_sampler_config() {
    SamplerConfig cfg;
    cfg.steps = 200;
    cfg.n_posterior = 10;
    cfg.ccdf_start = 0.7;
    cfg.mu = 0.3;
    cfg.corrector_steps = 0;
    cfg.map_prior_weight = 0.01;
    cfg.map_lr = 0.001;
    cfg.seed = 7;
    cfg.keep_samples = true;
    return cfg;
}

struct ReconRun {
    bool done = false;
    ComplexImage truth;
    KSpaceData z;
    ReconResult res;
    std::string error;
};

ReconRun& recon_run() {
    static ReconRun run;
    if (run.done) return run;
    run.done = true;
    const Shape s{64, 64};
    run.truth = mri::phantom(s, mri::PhantomKind::shepp_logan);
    const Sensitivities sens = mri::simulate_coils(s, 4, 11);
    const SamplingMask mask = mri::make_mask(MaskPattern::cartesian, s, 4.0, 0.08, 12);
    run.z = mri::forward(run.truth, sens, mask);
    try {
        const PogmdmModel model(load_or_train(), s);
        const auto t0 = std::chrono::steady_clock::now();
        run.res = estimate(PogmdmPrior{model}, run.z, desk_sampler_config());
        const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::fprintf(stderr, "  reconstruction took %.0f s\n", sec);
        fs::create_directories(g_work);
        io::write_recon(g_work / "recon.rcon", run.res);
        io::write_png(g_work / "mmse.png", metrics::rss_weight(run.res.mmse, run.res.sensitivities));
        io::write_png(g_work / "zero_filled.png", mri::zero_filled(run.z).rss);
        io::write_png(g_work / "variance.png", run.res.variance);
    } catch (const std::exception& e) {
        run.error = e.what();
    }
    return run;
}

Outcome reconstruction() {
    ReconRun& run = recon_run();
    if (!run.error.empty()) return {false, "error: " + run.error};
    const RealImage ref = magnitude(run.truth);
    const double zf = metrics::psnr(mri::zero_filled(run.z).rss, ref);
    const double mmse = metrics::psnr(metrics::rss_weight(run.res.mmse, run.res.sensitivities), ref);
    const auto& s0 = run.res.samples.front();
    const double start = metrics::psnr(metrics::rss_weight(s0.x, s0.sensitivities), ref);
    const double map = metrics::psnr(metrics::rss_weight(run.res.map_image, s0.sensitivities), ref);
    std::ostringstream d;
    d << "zero-filled " << fmt("%.2f", zf) << " dB, mmse " << fmt("%.2f", mmse) << " dB (+"
      << fmt("%.2f", mmse - zf) << "), map " << fmt("%.2f", map) << " dB from sample " << fmt("%.2f", start);
    return {mmse >= zf + 4.0 && map >= start - 0.2, d.str()};
}

Outcome variance_decomposition() {
    ReconRun& run = recon_run();
    if (!run.error.empty()) return {false, "error: " + run.error};
    const auto& res = run.res;
    // complex domain, against the ground truth spin density
    auto complex_mse = [&](const ComplexImage& x) {
        double e = 0.0;
        for (std::size_t p = 0; p < x.size(); ++p) e += std::norm(x[p] - run.truth[p]);
        return e / static_cast<double>(x.size());
    };
    double per_sample = 0.0;
    for (const auto& s : res.samples) per_sample += complex_mse(s.x);
    per_sample /= static_cast<double>(res.samples.size());
    const double mmse = complex_mse(res.mmse);

    bool nonneg = true;
    for (double v : res.variance) nonneg = nonneg && v >= 0.0;

    // artifact region: top 10% zero-filled error; background: everything else
    const RealImage zf = mri::zero_filled(run.z).rss;
    const RealImage ref = magnitude(run.truth);
    std::vector<double> err(zf.size());
    for (std::size_t p = 0; p < zf.size(); ++p) err[p] = std::abs(zf[p] - ref[p]);
    std::vector<double> sorted = err;
    std::sort(sorted.begin(), sorted.end());
    const double cut = sorted[sorted.size() * 9 / 10];
    double art = 0.0, bg = 0.0;
    std::size_t na = 0, nb = 0;
    for (std::size_t p = 0; p < err.size(); ++p) {
        if (err[p] >= cut) art += res.variance[p], ++na;
        else bg += res.variance[p], ++nb;
    }
    art /= static_cast<double>(na);
    bg /= static_cast<double>(nb);
    std::ostringstream d;
    d << "mse(mmse) " << fmt("%.3e", mmse) << " <= mean sample mse " << fmt("%.3e", per_sample)
      << "; variance artifact " << fmt("%.3e", art) << " vs background " << fmt("%.3e", bg);
    return {mmse <= per_sample && nonneg && art > bg, d.str()};
}

// ------------------------------------------------------------------ 9

Outcome schedule_determinism() {
    SamplerConfig def;
    const auto z = schedule(def);
    const bool ends = z.front() == 0.01 && z.back() == 10.0 && z.size() == 1001;

    const Shape s{32, 32};
    const ComplexImage x = mri::phantom(s, mri::PhantomKind::shepp_logan);
    const KSpaceData data =
        mri::forward(x, mri::simulate_coils(s, 2, 1), mri::make_mask(MaskPattern::cartesian, s, 2.0, 0.125, 2));
    const PogmdmModel model(ModelParams::initial(), s);
    SamplerConfig cfg;
    cfg.steps = 10;
    cfg.n_posterior = 2;
    cfg.map_steps = 3;
    cfg.ccdf_start = 0.5;
    cfg.mu = 0.5;
    cfg.seed = 99;
    fs::create_directories(g_work);
    const fs::path a = g_work / "determinism_a.rcon", b = g_work / "determinism_b.rcon";
    io::write_recon(a, estimate(PogmdmPrior{model}, data, cfg));
    io::write_recon(b, estimate(PogmdmPrior{model}, data, cfg));
    const bool same = io::read_file(a) == io::read_file(b);
    return {ends && same, std::string("schedule ends ") + (ends ? "exact" : "WRONG") + ", recon files " +
                              (same ? "byte-identical" : "DIFFER")};
}

// ------------------------------------------------------------------ 10

Outcome simplex_projection() {
    RandomStream rng(10);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        std::vector<double> v(5);
        for (double& x : v) x = 1.5 * rng.normal();
        const auto got = project_simplex(v), want = simplex_oracle(v);
        for (std::size_t i = 0; i < 5; ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
    }
    return {worst <= 1e-8, "100 vectors, max deviation " + fmt("%.2e", worst)};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--criteria" && i + 1 < argc) {
            std::stringstream ss(argv[++i]);
            std::string item;
            while (std::getline(ss, item, ',')) wanted.insert(std::stoi(item));
        } else if (a == "--work" && i + 1 < argc) {
            g_work = argv[++i];
        } else {
            std::fprintf(stderr, "usage: %s [--criteria 1,2,...] [--work DIR]\n", argv[0]);
            return 2;
        }
    }
    if (wanted.empty())
        for (int i = 1; i <= 10; ++i) wanted.insert(i);

    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"parameter count", parameter_count},
        {"adjoint suite", adjoint_suite},
        {"gradient suite", gradient_suite},
        {"prox oracle", prox_oracle},
        {"gmm normalization", gmm_normalization},
        {"desk-scale training", desk_training},
        {"joint reconstruction", reconstruction},
        {"variance decomposition", variance_decomposition},
        {"schedule and determinism", schedule_determinism},
        {"simplex projection", simplex_projection},
    };
    int failures = 0;
    for (int id : wanted) {
        if (id < 1 || id > static_cast<int>(criteria.size())) {
            std::fprintf(stderr, "unknown criterion %d\n", id);
            return 2;
        }
        const auto& [name, fn] = criteria[static_cast<std::size_t>(id - 1)];
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s criterion %d (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(),
                    sec);
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
