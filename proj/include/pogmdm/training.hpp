// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pogmdm Authors

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "pogmdm/core/fft.hpp"
#include "pogmdm/core/image.hpp"
#include "pogmdm/core/parallel.hpp"
#include "pogmdm/core/random.hpp"
#include "pogmdm/prior.hpp"

namespace pogmdm {

struct TrainConfig {
    std::size_t steps = 2000;
    std::size_t batch = 4;
    double lr = 1e-3;
    double ema_momentum = 0.999;
    // noise levels are drawn log-uniformly from [zeta_min, zeta_max]
    double zeta_min = 0.01;
    double zeta_max = 10.0;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const {
        if (steps < 1) throw std::invalid_argument("train: steps must be >= 1");
        if (batch < 1) throw std::invalid_argument("train: batch must be >= 1");
        if (!(lr > 0.0)) throw std::invalid_argument("train: lr must be positive");
        if (!(ema_momentum >= 0.0 && ema_momentum < 1.0))
            throw std::invalid_argument("train: ema momentum must be in [0, 1)");
        if (!(zeta_min > 0.0 && zeta_max >= zeta_min))
            throw std::invalid_argument("train: invalid noise range");
    }
};

namespace detail {

struct DsmAccumulator {
    std::vector<RealImage> filter_grads;
    std::vector<double> gamma_grads;
    std::vector<std::vector<double>> weight_grads;  // full weights, per filter

    DsmAccumulator(Shape shape, std::size_t components)
        : filter_grads(kFilterCount, RealImage(shape)),
          gamma_grads(kFilterCount, 0.0),
          weight_grads(kFilterCount, std::vector<double>(components, 0.0)) {}

    void add(const DsmAccumulator& o) {
        for (std::size_t k = 0; k < kFilterCount; ++k) {
            filter_grads[k] += o.filter_grads[k];
            gamma_grads[k] += o.gamma_grads[k];
            for (std::size_t i = 0; i < weight_grads[k].size(); ++i)
                weight_grads[k][i] += o.weight_grads[k][i];
        }
    }
};

inline void check_batch(const PogmdmModel& model, std::span<const RealImage> batch,
                        std::span<const double> zetas, std::span<const RealImage> noises) {
    if (batch.empty()) throw std::invalid_argument("dsm_loss: empty batch");
    if (zetas.size() != batch.size() || noises.size() != batch.size())
        throw std::invalid_argument("dsm_loss: batch, noise levels and noises differ in length");
    for (std::size_t b = 0; b < batch.size(); ++b) {
        require_shape(batch[b].shape(), model.shape(), "dsm_loss");
        require_shape(noises[b].shape(), model.shape(), "dsm_loss");
        if (!(zetas[b] >= 0.0)) throw std::invalid_argument("dsm_loss: negative noise level");
    }
}

inline RealImage noisy(const RealImage& x, double zeta, const RealImage& noise) {
    RealImage y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += zeta * noise[i];
    return y;
}

/// ||x - y - zeta^2 score(y)||^2 for one sample; with acc != nullptr also
/// accumulates the gradient with respect to filters, gamma and weights.
inline double dsm_sample(const PogmdmModel& model, const RealImage& x, double zeta,
                         const RealImage& noise, DsmAccumulator* acc) {
    const ShearletSystem& sys = model.system();
    const Shape shape = model.shape();
    const RealImage y = noisy(x, zeta, noise);
    const auto kernels = model.kernels(zeta);
    const FilterResponses v = sys.analyze(y);
    const double z2 = zeta * zeta;

    FilterResponses phi(kFilterCount, RealImage(shape));
    FilterResponses dphi(kFilterCount), dvar(kFilterCount), logpsi(kFilterCount);
    for (std::size_t k = 0; k < kFilterCount; ++k) {
        if (acc) {
            dphi[k] = RealImage(shape);
            dvar[k] = RealImage(shape);
            logpsi[k] = RealImage(shape);
            for (std::size_t i = 0; i < v[k].size(); ++i) {
                const auto s = kernels[k].evaluate_second(v[k][i]);
                phi[k][i] = s.dlog;
                dphi[k][i] = s.d2log;
                dvar[k][i] = s.dlog_dvar;
                logpsi[k][i] = s.log_psi;
            }
        } else {
            for (std::size_t i = 0; i < v[k].size(); ++i) phi[k][i] = kernels[k].evaluate(v[k][i]).dlog;
        }
    }
    const RealImage score = sys.adjoint(phi);
    RealImage residual(shape);
    double loss = 0.0;
    for (std::size_t i = 0; i < residual.size(); ++i) {
        residual[i] = x[i] - y[i] - z2 * score[i];
        loss += residual[i] * residual[i];
    }
    if (!acc || zeta == 0.0) return loss;

    // d loss / d score
    RealImage u(shape);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = -2.0 * z2 * residual[i];
    const FilterResponses a = sys.analyze(u);

    FilterResponses dv(kFilterCount, RealImage(shape));
    for (std::size_t k = 0; k < kFilterCount; ++k) {
        double gvar = 0.0;
        for (std::size_t i = 0; i < a[k].size(); ++i) {
            const double coeff = a[k][i];
            kernels[k].accumulate_weight_gradient(v[k][i], logpsi[k][i], phi[k][i], coeff,
                                                  acc->weight_grads[k]);
            gvar += coeff * dvar[k][i];
            dv[k][i] = coeff * dphi[k][i];
        }
        // var = base^2 + zeta^2 fn^2 and fn = gamma for a nondegenerate filter
        acc->gamma_grads[k] += gvar * 2.0 * z2 * sys.filter_norm(k);
    }

    // dL/dg_k = corr(phi_k, u) + corr(dv_k, y), two filters per transform
    const ComplexImage uhat = fft::forward(u);
    const ComplexImage yhat = fft::forward(y);
    ComplexImage packed(shape), sum(shape);
    for (std::size_t k = 0; k < kFilterCount; k += 2) {
        for (std::size_t i = 0; i < packed.size(); ++i) packed[i] = Complex(phi[k][i], phi[k + 1][i]);
        auto [pa, pb] = fft::split_real_pair(fft::forward(packed));
        for (std::size_t i = 0; i < packed.size(); ++i) packed[i] = Complex(dv[k][i], dv[k + 1][i]);
        auto [da, db] = fft::split_real_pair(fft::forward(packed));
        const Complex j(0.0, 1.0);
        for (std::size_t i = 0; i < sum.size(); ++i) {
            const Complex ca = pa[i] * std::conj(uhat[i]) + da[i] * std::conj(yhat[i]);
            const Complex cb = pb[i] * std::conj(uhat[i]) + db[i] * std::conj(yhat[i]);
            sum[i] = ca + j * cb;
        }
        const ComplexImage g = fft::inverse(sum);
        for (std::size_t i = 0; i < g.size(); ++i) {
            acc->filter_grads[k][i] += g[i].real();
            acc->filter_grads[k + 1][i] += g[i].imag();
        }
    }
    return loss;
}

}  // namespace detail

/// Mean over the batch of ||x - y - zeta^2 score(y, zeta)||^2 with y = x + zeta * noise.
inline double dsm_loss(const PogmdmModel& model, std::span<const RealImage> batch,
                       std::span<const double> zetas, std::span<const RealImage> noises) {
    detail::check_batch(model, batch, zetas, noises);
    std::vector<double> losses(batch.size());
    parallel_for(batch.size(), [&](std::size_t b) {
        losses[b] = detail::dsm_sample(model, batch[b], zetas[b], noises[b], nullptr);
    });
    return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(batch.size());
}

struct LossAndGradient {
    double loss = 0.0;
    ModelParams gradient;
};

/// dsm_loss and its gradient with respect to every learnable parameter
/// (h, P, free mixture weights, gamma).
inline LossAndGradient dsm_loss_and_gradient(const PogmdmModel& model, std::span<const RealImage> batch,
                                             std::span<const double> zetas,
                                             std::span<const RealImage> noises) {
    detail::check_batch(model, batch, zetas, noises);
    const std::size_t components = model.params().grid.count;
    std::vector<detail::DsmAccumulator> parts(batch.size(),
                                              detail::DsmAccumulator(model.shape(), components));
    std::vector<double> losses(batch.size());
    parallel_for(batch.size(), [&](std::size_t b) {
        losses[b] = detail::dsm_sample(model, batch[b], zetas[b], noises[b], &parts[b]);
    });
    detail::DsmAccumulator& total = parts.front();
    for (std::size_t b = 1; b < parts.size(); ++b) total.add(parts[b]);

    const double scale = 1.0 / static_cast<double>(batch.size());
    LossAndGradient out;
    out.loss = std::accumulate(losses.begin(), losses.end(), 0.0) * scale;
    out.gradient = model.params().zeros_like();
    out.gradient.shearlet = model.system().backward(total.filter_grads, total.gamma_grads);
    for (std::size_t k = 0; k < kFilterCount; ++k)
        out.gradient.free_weights[k] = fold_symmetric(total.weight_grads[k]);
    std::vector<double> flat = out.gradient.flatten();
    for (double& g : flat) g *= scale;
    out.gradient.unflatten(flat);
    return out;
}

/// Euclidean projection onto the probability simplex (sort-based).
inline std::vector<double> project_simplex(std::span<const double> v) {
    if (v.empty()) return {};
    std::vector<double> sorted(v.begin(), v.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double cumulative = 0.0, theta = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        cumulative += sorted[i];
        const double t = (cumulative - 1.0) / static_cast<double>(i + 1);
        if (sorted[i] - t > 0.0) theta = t;
    }
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i] - theta, 0.0);
    return out;
}

/// Feasible set: free weights on the simplex, gamma >= 0, ||h|| = 1, mean(P) = 0.
inline ModelParams project_params(ModelParams p) {
    for (auto& f : p.free_weights) f = project_simplex(f);
    for (double& g : p.shearlet.gamma) g = std::max(g, 0.0);
    auto& h = p.shearlet.lowpass;
    const double hn = std::sqrt(std::inner_product(h.begin(), h.end(), h.begin(), 0.0));
    if (hn > 0.0) {
        for (double& v : h) v /= hn;
    } else {
        std::fill(h.begin(), h.end(), 0.0);
        h[h.size() / 2] = 1.0;
    }
    auto& P = p.shearlet.generator;
    const double mean = std::accumulate(P.begin(), P.end(), 0.0) / static_cast<double>(P.size());
    for (double& v : P) v -= mean;
    return p;
}

struct AdaBeliefState {
    std::vector<double> first;   // m
    std::vector<double> belief;  // s
    std::size_t step = 0;

    explicit AdaBeliefState(std::size_t n = 0) : first(n, 0.0), belief(n, 0.0) {}
};

struct AdaBeliefConstants {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Raw AdaBelief update on flat vectors (no projection).
inline void adabelief_update(AdaBeliefState& state, std::span<double> params, std::span<const double> grads,
                             double lr, AdaBeliefConstants c = {}) {
    if (state.first.size() != params.size() || grads.size() != params.size())
        throw std::invalid_argument("adabelief: state, params and grads differ in size");
    for (double g : grads)
        if (!std::isfinite(g)) throw std::domain_error("non-finite gradient");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bias1 = 1.0 - std::pow(c.beta1, t);
    const double bias2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        double& m = state.first[i];
        double& s = state.belief[i];
        m = c.beta1 * m + (1.0 - c.beta1) * grads[i];
        const double dev = grads[i] - m;
        s = c.beta2 * s + (1.0 - c.beta2) * dev * dev + c.eps;
        params[i] -= lr * (m / bias1) / (std::sqrt(s / bias2) + c.eps);
    }
}

/// Projected AdaBelief step on model parameters.
inline ModelParams adabelief_step(AdaBeliefState& state, const ModelParams& params, const ModelParams& grads,
                                  double lr, AdaBeliefConstants c = {}) {
    std::vector<double> flat = params.flatten();
    const std::vector<double> g = grads.flatten();
    if (state.first.empty() && state.step == 0) state = AdaBeliefState(flat.size());
    adabelief_update(state, flat, g, lr, c);
    ModelParams out = params;
    out.unflatten(flat);
    return project_params(std::move(out));
}

/// ema <- momentum * ema + (1 - momentum) * params.
inline void ema_update(std::span<double> ema, std::span<const double> params, double momentum) {
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("ema momentum must be in [0, 1)");
    if (ema.size() != params.size()) throw std::invalid_argument("ema: size mismatch");
    for (std::size_t i = 0; i < ema.size(); ++i) ema[i] = momentum * ema[i] + (1.0 - momentum) * params[i];
}

inline ModelParams ema_update(const ModelParams& ema, const ModelParams& params, double momentum) {
    std::vector<double> e = ema.flatten();
    ema_update(e, params.flatten(), momentum);
    ModelParams out = ema;
    out.unflatten(e);
    return out;
}

struct TrainResult {
    ModelParams params;  // last iterate
    ModelParams ema;     // projected exponential moving average
    std::vector<double> losses;
};

/// Denoising score matching over a fixed image set. log(step, loss) is called
/// after every step when provided.
inline TrainResult train(const ModelParams& init, std::span<const RealImage> images, const TrainConfig& cfg,
                         const std::function<void(std::size_t, double)>& log = {}) {
    cfg.validate();
    if (images.empty()) throw std::invalid_argument("train: no training images");
    const Shape shape = images.front().shape();
    for (const auto& img : images) require_shape(img.shape(), shape, "train");

    RandomStream rng(cfg.seed, 0x7472616eULL);
    ModelParams params = project_params(init);
    ModelParams ema = params;
    AdaBeliefState state(params.learnable_count());
    const AdaBeliefConstants constants{cfg.beta1, cfg.beta2, cfg.eps};
    TrainResult result;
    result.losses.reserve(cfg.steps);

    std::vector<RealImage> batch(cfg.batch), noises(cfg.batch);
    std::vector<double> zetas(cfg.batch);
    const double log_lo = std::log(cfg.zeta_min), log_hi = std::log(cfg.zeta_max);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        for (std::size_t b = 0; b < cfg.batch; ++b) {
            batch[b] = images[rng.below(images.size())];
            zetas[b] = std::exp(rng.uniform(log_lo, log_hi));
            noises[b] = rng.normal_image(shape);
        }
        const PogmdmModel model(params, shape);
        const LossAndGradient lg = dsm_loss_and_gradient(model, batch, zetas, noises);
        params = adabelief_step(state, params, lg.gradient, cfg.lr, constants);
        ema = ema_update(ema, params, cfg.ema_momentum);
        result.losses.push_back(lg.loss);
        if (log) log(step, lg.loss);
    }
    result.params = params;
    result.ema = project_params(ema);
    return result;
}

}  // namespace pogmdm
