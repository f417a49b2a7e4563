// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pogmdm Authors

#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pogmdm/coil_prior.hpp"
#include "pogmdm/core/image.hpp"
#include "pogmdm/core/parallel.hpp"
#include "pogmdm/core/random.hpp"
#include "pogmdm/mri.hpp"
#include "pogmdm/prior.hpp"

namespace pogmdm {

struct SamplerConfig {
    std::size_t steps = 1000;            // N
    std::size_t corrector_steps = 1;     // M_corr
    double lambda = 1.0;
    double mu = 10.0;
    double zeta_min = 0.01;
    double zeta_max = 10.0;
    double snr = 0.16;
    std::size_t n_posterior = 10;
    std::size_t map_steps = 250;
    double map_lr = 0.001;
    double map_prior_weight = 1.0;
    bool map = true;
    double ccdf_start = 0.0;
    bool inject_noise = true;  // off: deterministic annealed descent (debugging)
    bool keep_samples = false;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(zeta_min > 0.0) || !(zeta_max > zeta_min) || !std::isfinite(zeta_max))
            throw std::invalid_argument("sampler: require 0 < zeta_min < zeta_max");
        if (steps < 1) throw std::invalid_argument("sampler: steps must be >= 1");
        if (!(lambda >= 0.0)) throw std::invalid_argument("sampler: lambda must be nonnegative");
        if (!(mu > 0.0)) throw std::invalid_argument("sampler: mu must be positive");
        if (!(snr >= 0.0)) throw std::invalid_argument("sampler: snr must be nonnegative");
        if (!(ccdf_start >= 0.0 && ccdf_start < 1.0))
            throw std::invalid_argument("sampler: ccdf_start must be in [0, 1)");
        if (n_posterior < 1) throw std::invalid_argument("sampler: n_posterior must be >= 1");
        if (!(map_lr > 0.0)) throw std::invalid_argument("sampler: map_lr must be positive");
    }
};

/// zeta_i = zeta_min (zeta_max / zeta_min)^(i / N), i = 0..N; the ends are exact.
inline std::vector<double> schedule(const SamplerConfig& cfg) {
    cfg.validate();
    std::vector<double> z(cfg.steps + 1);
    const double ratio = cfg.zeta_max / cfg.zeta_min;
    for (std::size_t i = 0; i <= cfg.steps; ++i)
        z[i] = cfg.zeta_min * std::pow(ratio, static_cast<double>(i) / static_cast<double>(cfg.steps));
    z.front() = cfg.zeta_min;
    z.back() = cfg.zeta_max;
    return z;
}

/// Langevin step size 2 (r ||xi|| / ||score||)^2; 0 when the score vanishes.
inline double corrector_eps(const RealImage& score, const RealImage& noise, double snr) {
    const double g = norm(score);
    if (g == 0.0) return 0.0;
    const double ratio = snr * norm(noise) / g;
    return 2.0 * ratio * ratio;
}

/// Anything that provides an energy and a score on real images at noise level zeta.
template <typename P>
concept ScorePrior = requires(const P& p, const RealImage& x, double zeta) {
    { p.score(x, zeta) } -> std::convertible_to<RealImage>;
    { p.energy(x, zeta) } -> std::convertible_to<double>;
};

struct PogmdmPrior {
    const PogmdmModel& model;
    RealImage score(const RealImage& x, double zeta) const { return prior_score(model, x, zeta); }
    double energy(const RealImage& x, double zeta) const { return neg_log_prior(model, x, zeta); }
};

/// Smoothed total variation; ignores zeta.
struct TvPrior {
    double weight = 1.0;
    double eps = 1e-3;
    RealImage score(const RealImage& x, double) const {
        RealImage s = tv_score(x, eps);
        s *= weight;
        return s;
    }
    double energy(const RealImage& x, double) const { return weight * tv_energy(x, eps); }
};

/// Flat prior (zero score): reduces the sampler to its data-consistency steps.
struct ZeroPrior {
    RealImage score(const RealImage& x, double) const { return RealImage(x.shape()); }
    double energy(const RealImage&, double) const { return 0.0; }
};

struct ChainState {
    ComplexImage x;
    Sensitivities sensitivities;
};

struct CcdfStart {
    ComplexImage x;
    std::size_t index;
};

inline std::size_t ccdf_start_index(const SamplerConfig& cfg) {
    return static_cast<std::size_t>(std::lround((1.0 - cfg.ccdf_start) * static_cast<double>(cfg.steps)));
}

/// Zero-filled RSS with zero phase plus complex unit Gaussian noise at zeta_{i0}.
inline CcdfStart ccdf_init(const KSpaceData& z, const SamplerConfig& cfg, RandomStream& rng) {
    const auto zeta = schedule(cfg);
    const std::size_t i0 = ccdf_start_index(cfg);
    const RealImage rss = mri::zero_filled(z).rss;
    ComplexImage x(rss.shape());
    for (std::size_t p = 0; p < x.size(); ++p) {
        const double re = rng.normal();
        const double im = rng.normal();
        x[p] = Complex(rss[p] + zeta[i0] * re, zeta[i0] * im);
    }
    return {std::move(x), i0};
}

/// Coil images divided by their RSS (0 where the RSS vanishes).
inline Sensitivities initial_sensitivities(const KSpaceData& z) {
    mri::ZeroFilled zf = mri::zero_filled(z);
    for (auto& img : zf.coil_images)
        for (std::size_t p = 0; p < img.size(); ++p) img[p] = zf.rss[p] > 0.0 ? img[p] / zf.rss[p] : Complex(0.0);
    return zf.coil_images;
}

namespace detail {

inline void require_finite(const ComplexImage& x, std::size_t i, const char* step) {
    if (!all_finite(x))
        throw std::runtime_error(std::string("sampler: non-finite iterate at level ") + std::to_string(i) +
                                 " after " + step);
}

inline void require_finite(const Sensitivities& s, std::size_t i, const char* step) {
    for (const auto& si : s) require_finite(si, i, step);
}

}  // namespace detail

/// One reverse-diffusion chain over (x, sigma). The chain's randomness comes
/// entirely from rng.
template <ScorePrior Prior>
ChainState posterior_sample(const Prior& prior, const KSpaceData& z, const SamplerConfig& cfg, RandomStream& rng) {
    cfg.validate();
    if (z.coils.empty()) throw std::invalid_argument("sampler: no coil data");
    const auto zeta = schedule(cfg);
    const Shape shape = z.shape();
    const double noise_on = cfg.inject_noise ? 1.0 : 0.0;

    CcdfStart start = ccdf_init(z, cfg, rng);
    ChainState st{std::move(start.x), initial_sensitivities(z)};
    ComplexImage& x = st.x;
    Sensitivities& sigma = st.sensitivities;

    for (std::size_t i = start.index; i-- > 0;) {
        // predictor, Re and Im independently
        const double d = zeta[i + 1] * zeta[i + 1] - zeta[i] * zeta[i];
        RealImage re = real_part(x), im = imag_part(x);
        for (RealImage* ch : {&re, &im}) {
            const RealImage g = prior.score(*ch, zeta[i + 1]);
            const RealImage xi = rng.normal_image(shape);
            const double sd = std::sqrt(d) * noise_on;
            for (std::size_t p = 0; p < ch->size(); ++p) (*ch)[p] += d * g[p] + sd * xi[p];
        }
        x = combine(re, im);
        detail::require_finite(x, i, "predictor");

        // data consistency (descent on 1/2 ||A - z||^2)
        if (cfg.lambda > 0.0) {
            const ComplexImage gx = mri::grad_x_likelihood(x, sigma, z);
            for (std::size_t p = 0; p < x.size(); ++p) x[p] -= cfg.lambda * gx[p];
            detail::require_finite(x, i, "likelihood step");
        }

        for (std::size_t j = 0; j < cfg.corrector_steps; ++j) {
            re = real_part(x);
            im = imag_part(x);
            for (RealImage* ch : {&re, &im}) {
                const RealImage g = prior.score(*ch, zeta[i]);
                const RealImage xi = rng.normal_image(shape);
                const double eps = corrector_eps(g, xi, cfg.snr);
                const double sd = std::sqrt(2.0 * eps) * noise_on;
                for (std::size_t p = 0; p < ch->size(); ++p) (*ch)[p] += eps * g[p] + sd * xi[p];
            }
            x = combine(re, im);
            detail::require_finite(x, i, "corrector");
        }

        Sensitivities gs = mri::grad_sigma_likelihood(x, sigma, z);
        for (std::size_t c = 0; c < gs.size(); ++c)
            for (std::size_t p = 0; p < gs[c].size(); ++p) gs[c][p] = sigma[c][p] - cfg.mu * gs[c][p];
        sigma = coil::prox_smoothness(gs, cfg.mu);
        detail::require_finite(sigma, i, "sensitivity update");
    }
    return st;
}

/// 1/2 ||A(x, sigma) - z||^2 + w (E(Re x) + E(Im x)) at zeta_min.
template <ScorePrior Prior>
double map_objective(const Prior& prior, const ComplexImage& x, const Sensitivities& sigma, const KSpaceData& z,
                     const SamplerConfig& cfg) {
    return mri::data_misfit(x, sigma, z) +
           cfg.map_prior_weight * (prior.energy(real_part(x), cfg.zeta_min) + prior.energy(imag_part(x), cfg.zeta_min));
}

template <ScorePrior Prior>
ComplexImage map_gradient(const Prior& prior, const ComplexImage& x, const Sensitivities& sigma,
                          const KSpaceData& z, const SamplerConfig& cfg) {
    ComplexImage g = mri::grad_x_likelihood(x, sigma, z);
    const RealImage sr = prior.score(real_part(x), cfg.zeta_min);
    const RealImage si = prior.score(imag_part(x), cfg.zeta_min);
    for (std::size_t p = 0; p < g.size(); ++p) g[p] -= cfg.map_prior_weight * Complex(sr[p], si[p]);
    return g;
}

/// Nesterov-accelerated gradient descent on map_objective with sigma fixed.
template <ScorePrior Prior>
ComplexImage map_estimate(const Prior& prior, const ComplexImage& x0, const Sensitivities& sigma,
                          const KSpaceData& z, const SamplerConfig& cfg) {
    ComplexImage x = x0, prev = x0, y(x0.shape());
    for (std::size_t k = 1; k <= cfg.map_steps; ++k) {
        const double beta = static_cast<double>(k - 1) / static_cast<double>(k + 2);
        for (std::size_t p = 0; p < y.size(); ++p) y[p] = x[p] + beta * (x[p] - prev[p]);
        const ComplexImage g = map_gradient(prior, y, sigma, z, cfg);
        prev = x;
        for (std::size_t p = 0; p < x.size(); ++p) x[p] = y[p] - cfg.map_lr * g[p];
        detail::require_finite(x, k, "map step");
    }
    return x;
}

struct ReconResult {
    ComplexImage mmse;
    RealImage variance;            // population variance of |x| across chains
    ComplexImage map_image;        // empty when MAP is disabled
    Sensitivities sensitivities;   // mean over chains
    std::vector<ChainState> samples;  // only with keep_samples
};

/// Runs n_posterior chains (chain k uses stream (seed, k)), reduces them in
/// chain order and optionally refines chain 0 to a MAP estimate.
template <ScorePrior Prior>
ReconResult estimate(const Prior& prior, const KSpaceData& z, const SamplerConfig& cfg) {
    cfg.validate();
    const std::size_t chains = cfg.n_posterior;
    std::vector<ChainState> states(chains);
    parallel_for(chains, [&](std::size_t k) {
        RandomStream rng(cfg.seed, k);
        states[k] = posterior_sample(prior, z, cfg, rng);
    });

    const Shape shape = z.shape();
    ReconResult out;
    out.mmse = ComplexImage(shape);
    out.variance = RealImage(shape);
    RealImage mean_mag(shape);
    for (const auto& s : states) {
        out.mmse += s.x;
        for (std::size_t p = 0; p < shape.size(); ++p) mean_mag[p] += std::abs(s.x[p]);
    }
    const double inv = 1.0 / static_cast<double>(chains);
    out.mmse *= inv;
    mean_mag *= inv;
    for (const auto& s : states)
        for (std::size_t p = 0; p < shape.size(); ++p) {
            const double d = std::abs(s.x[p]) - mean_mag[p];
            out.variance[p] += d * d;
        }
    out.variance *= inv;

    out.sensitivities.assign(z.coil_count(), ComplexImage(shape));
    for (const auto& s : states)
        for (std::size_t c = 0; c < z.coil_count(); ++c) out.sensitivities[c] += s.sensitivities[c];
    for (auto& sc : out.sensitivities) sc *= inv;

    if (cfg.map) out.map_image = map_estimate(prior, states.front().x, states.front().sensitivities, z, cfg);
    if (cfg.keep_samples) out.samples = std::move(states);
    return out;
}

}  // namespace pogmdm
