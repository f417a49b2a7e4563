// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pogmdm Authors

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pogmdm/core/image.hpp"
#include "pogmdm/shearlet.hpp"

namespace pogmdm {

inline constexpr std::size_t kDefaultComponents = 125;
inline constexpr std::size_t kMaxComponents = 1024;

/// Equispaced, symmetric mixture means.
struct MeanGrid {
    std::size_t count = kDefaultComponents;
    double lo = -0.5;
    double hi = 0.5;

    double spacing() const { return (hi - lo) / static_cast<double>(count - 1); }
    double mean(std::size_t i) const { return lo + spacing() * static_cast<double>(i); }

    void validate() const {
        if (count < 2 || count > kMaxComponents)
            throw std::invalid_argument("mean grid: component count out of range");
        if (!(hi > lo) || std::abs(lo + hi) > 1e-12)
            throw std::invalid_argument("mean grid must be symmetric about 0 and increasing");
    }
};

inline std::size_t free_weight_count(std::size_t components) { return (components + 1) / 2; }

/// Full symmetric weights from the free half. Off-centre free weights are split
/// evenly between the mirrored pair, so free weights on the simplex give full
/// weights on the simplex.
inline std::vector<double> expand_symmetric(std::span<const double> free, std::size_t components) {
    if (free.size() != free_weight_count(components))
        throw std::invalid_argument("free weight count does not match component count");
    std::vector<double> w(components);
    for (std::size_t i = 0; i < components; ++i) {
        const std::size_t j = std::min(i, components - 1 - i);
        w[i] = (i == components - 1 - i) ? free[j] : 0.5 * free[j];
    }
    return w;
}

/// Adjoint of expand_symmetric.
inline std::vector<double> fold_symmetric(std::span<const double> full) {
    const std::size_t components = full.size();
    std::vector<double> free(free_weight_count(components), 0.0);
    for (std::size_t i = 0; i < components; ++i) {
        const std::size_t j = std::min(i, components - 1 - i);
        free[j] += (i == components - 1 - i) ? full[i] : 0.5 * full[i];
    }
    return free;
}

/// One-dimensional Gaussian mixture potential for a single filter.
struct GmmExpert {
    std::vector<double> weights;  // full, length grid.count
    MeanGrid grid;
    double base_std = 1.0 / 124.0;
    double filter_norm = 1.0;

    /// var(zeta) = base_std^2 + zeta^2 ||k||^2: filtered Gaussian noise of std
    /// zeta has per-pixel variance zeta^2 ||k||^2.
    double variance(double zeta) const {
        return base_std * base_std + zeta * zeta * filter_norm * filter_norm;
    }
};

/// A GmmExpert frozen at one noise level, with precomputed log-weights.
class ExpertKernel {
public:
    struct Value {
        double log_psi;
        double dlog;  // d log psi / dv
    };

    struct Second {
        double log_psi;
        double dlog;
        double d2log;      // d^2 log psi / dv^2
        double dlog_dvar;  // d (d log psi / dv) / d var
    };

    ExpertKernel(const GmmExpert& e, double zeta) {
        if (!(zeta >= 0.0)) throw std::invalid_argument("noise level must be nonnegative");
        e.grid.validate();
        if (e.weights.size() != e.grid.count)
            throw std::invalid_argument("expert weights do not match mean grid");
        var_ = e.variance(zeta);
        if (!(var_ > 0.0) || !std::isfinite(var_))
            throw std::invalid_argument("expert variance must be positive");
        count_ = e.grid.count;
        inv_two_var_ = 0.5 / var_;
        log_norm_ = -0.5 * std::log(2.0 * std::numbers::pi * var_);
        delta_ = e.grid.spacing();
        rho_ = std::exp(-delta_ * delta_ / var_);
        for (std::size_t i = 0; i < count_; ++i) {
            mu_[i] = e.grid.mean(i);
            w_[i] = e.weights[i];
            w_max_ = std::max(w_max_, w_[i]);
            log_w_[i] = e.weights[i] > 0.0 ? std::log(e.weights[i])
                                            : -std::numeric_limits<double>::infinity();
        }
    }

    double variance() const { return var_; }

    Value evaluate(double v) const {
        double offset = 0.0;
        double s = 0.0, d = 0.0;
        scan(v, offset, [&](std::size_t i, double g) {
            const double t = w_[i] * g;
            s += t;
            d += t * (mu_[i] - v);
            return g * w_max_ * static_cast<double>(count_) >= kTail * s;
        });
        if (s < kTiny) return evaluate_slow(v);
        return {offset + std::log(s), d / (s * var_)};
    }

    Second evaluate_second(double v) const {
        double offset = 0.0;
        double s = 0.0, m1 = 0.0, m2 = 0.0, m3 = 0.0;
        const double inv_var = 1.0 / var_;
        scan(v, offset, [&](std::size_t i, double g) {
            const double t = w_[i] * g;
            const double di = (mu_[i] - v) * inv_var;
            s += t;
            m1 += t * di;
            m2 += t * di * di;
            m3 += t * di * di * di;
            return g * w_max_ * static_cast<double>(count_) >= kTail * s;
        });
        if (s < kTiny) return evaluate_second_slow(v);
        return second_from_moments(offset + std::log(s), s, m1, m2, m3);
    }

    /// grad[i] += coeff * d(d log psi / dv)/d w_i, given log_psi and dlog at v.
    void accumulate_weight_gradient(double v, double log_psi, double dlog, double coeff,
                                    std::span<double> grad) const {
        const double inv_var = 1.0 / var_;
        double offset = 0.0;
        double scale = 0.0;
        bool first = true;
        scan(v, offset, [&](std::size_t i, double g) {
            if (first) scale = std::exp(offset - log_psi), first = false;
            const double n = g * scale;  // N_i / psi
            grad[i] += coeff * n * ((mu_[i] - v) * inv_var - dlog);
            return n >= kDrop;
        });
    }

    /// d log psi / d w_i accumulated with a coefficient (used by energy gradients).
    void accumulate_log_weight_gradient(double v, double log_psi, double coeff,
                                        std::span<double> grad) const {
        double offset = 0.0;
        double scale = 0.0;
        bool first = true;
        scan(v, offset, [&](std::size_t i, double g) {
            if (first) scale = std::exp(offset - log_psi), first = false;
            const double n = g * scale;
            grad[i] += coeff * n;
            return n >= kDrop;
        });
    }

    /// Plain log-sum-exp evaluation over every component.
    Value evaluate_slow(double v) const {
        std::array<double, kMaxComponents> e;
        const double max = exponents(v, e);
        double s = 0.0, d = 0.0;
        for (std::size_t i = 0; i < count_; ++i) {
            const double x = e[i] - max;
            if (x < -kCutoff) continue;
            const double t = std::exp(x);
            s += t;
            d += t * (mu_[i] - v);
        }
        return {max + std::log(s), d / (s * var_)};
    }

    Second evaluate_second_slow(double v) const {
        std::array<double, kMaxComponents> e;
        const double max = exponents(v, e);
        double s = 0.0, m1 = 0.0, m2 = 0.0, m3 = 0.0;
        const double inv_var = 1.0 / var_;
        for (std::size_t i = 0; i < count_; ++i) {
            const double x = e[i] - max;
            if (x < -kCutoff) continue;
            const double t = std::exp(x);
            const double di = (mu_[i] - v) * inv_var;
            s += t;
            m1 += t * di;
            m2 += t * di * di;
            m3 += t * di * di * di;
        }
        return second_from_moments(max + std::log(s), s, m1, m2, m3);
    }

private:
    // exp(-46) ~ 1e-20: terms below this relative size are dropped.
    static constexpr double kCutoff = 46.0;
    static constexpr double kDrop = 1e-20;
    static constexpr double kTail = 1e-18;
    static constexpr double kTiny = 1e-200;

    Second second_from_moments(double log_psi, double s, double m1, double m2, double m3) const {
        const double inv_var = 1.0 / var_;
        m1 /= s;
        m2 /= s;
        m3 /= s;
        Second out;
        out.log_psi = log_psi;
        out.dlog = m1;
        out.d2log = m2 - m1 * m1 - inv_var;
        out.dlog_dvar = 0.5 * (m3 - m2 * m1) - m1 * inv_var;
        return out;
    }

    // Visits components outward from the mean nearest to v with the unweighted
    // kernel g_i = exp(-((v - mu_i)^2 - (v - mu_j)^2) / (2 var)) <= 1, built by
    // the ratio recurrence of an equispaced grid (three exp calls per v).
    // offset receives log_norm - (v - mu_j)^2 / (2 var). Each direction stops
    // when fn returns false; g only decreases moving away from j.
    template <typename Fn>
    void scan(double v, double& offset, Fn&& fn) const {
        const double pos = (v - mu_[0]) / delta_;
        const std::size_t j = pos <= 0.0 ? 0
                              : pos >= static_cast<double>(count_ - 1)
                                  ? count_ - 1
                                  : static_cast<std::size_t>(std::lround(pos));
        const double dj = v - mu_[j];
        offset = log_norm_ - dj * dj * inv_two_var_;
        if (!fn(j, 1.0)) return;
        const double half = 0.5 * delta_ * delta_;
        // to the right: ratio g_{i+1}/g_i = exp(((v - mu_i) delta - delta^2/2) / var)
        double g = 1.0;
        double r = std::exp((dj * delta_ - half) / var_);
        for (std::size_t i = j + 1; i < count_; ++i) {
            g *= r;
            r *= rho_;
            if (!fn(i, g)) break;
        }
        g = 1.0;
        double l = std::exp((-dj * delta_ - half) / var_);
        for (std::size_t i = j; i-- > 0;) {
            g *= l;
            l *= rho_;
            if (!fn(i, g)) break;
        }
    }

    double exponents(double v, std::array<double, kMaxComponents>& e) const {
        double max = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < count_; ++i) {
            const double dv = v - mu_[i];
            e[i] = log_w_[i] + log_norm_ - dv * dv * inv_two_var_;
            max = std::max(max, e[i]);
        }
        return max;
    }

    std::size_t count_ = 0;
    double var_ = 1.0;
    double inv_two_var_ = 0.5;
    double log_norm_ = 0.0;
    double delta_ = 1.0;
    double rho_ = 1.0;
    double w_max_ = 0.0;
    std::array<double, kMaxComponents> mu_{};
    std::array<double, kMaxComponents> w_{};
    std::array<double, kMaxComponents> log_w_{};
};

/// log psi and its derivative at v for an expert at noise level zeta.
inline ExpertKernel::Value expert_log_and_dlog(const GmmExpert& e, double v, double zeta) {
    return ExpertKernel(e, zeta).evaluate(v);
}

/// Shape-independent learnable parameters of a PoGMDM plus the fixed mixture layout.
struct ModelParams {
    ShearletParams shearlet;
    std::vector<std::vector<double>> free_weights;  // per filter, free_weight_count(grid.count)
    MeanGrid grid;
    double base_std = 1.0 / 124.0;

    /// Initial model: shearlet defaults and a Laplacian-shaped mixture of width 0.1.
    static ModelParams initial(std::size_t components = kDefaultComponents) {
        ModelParams p;
        p.shearlet = ShearletParams::initial();
        p.grid.count = components;
        p.base_std = p.grid.spacing();
        std::vector<double> full(components);
        for (std::size_t i = 0; i < components; ++i) full[i] = std::exp(-std::abs(p.grid.mean(i)) / 0.1);
        std::vector<double> free(free_weight_count(components));
        for (std::size_t j = 0; j < free.size(); ++j) {
            const bool centre = components % 2 == 1 && j + 1 == free.size();
            free[j] = centre ? full[j] : 2.0 * full[j];
        }
        const double total = std::accumulate(free.begin(), free.end(), 0.0);
        for (double& f : free) f /= total;
        p.free_weights.assign(kFilterCount, free);
        return p;
    }

    /// 9 + 17^2 + o * ceil(L / 2) + o.
    std::size_t learnable_count() const {
        std::size_t n = shearlet.lowpass.size() + shearlet.generator.size() + shearlet.gamma.size();
        for (const auto& f : free_weights) n += f.size();
        return n;
    }

    void validate() const {
        shearlet.validate();
        grid.validate();
        if (!(base_std > 0.0)) throw std::invalid_argument("base_std must be positive");
        if (free_weights.size() != kFilterCount)
            throw std::invalid_argument("one weight vector per filter required");
        for (const auto& f : free_weights) {
            if (f.size() != free_weight_count(grid.count))
                throw std::invalid_argument("free weight vector has wrong length");
            for (double v : f)
                if (!(v >= 0.0) || !std::isfinite(v))
                    throw std::invalid_argument("mixture weights must be finite and nonnegative");
        }
    }

    /// Flat layout: h, P, free weights (filter-major), gamma.
    std::vector<double> flatten() const {
        std::vector<double> out;
        out.reserve(learnable_count());
        out.insert(out.end(), shearlet.lowpass.begin(), shearlet.lowpass.end());
        out.insert(out.end(), shearlet.generator.begin(), shearlet.generator.end());
        for (const auto& f : free_weights) out.insert(out.end(), f.begin(), f.end());
        out.insert(out.end(), shearlet.gamma.begin(), shearlet.gamma.end());
        return out;
    }

    void unflatten(std::span<const double> flat) {
        if (flat.size() != learnable_count())
            throw std::invalid_argument("flat parameter vector has wrong length");
        auto it = flat.begin();
        auto take = [&](std::vector<double>& dst) {
            std::copy(it, it + static_cast<long>(dst.size()), dst.begin());
            it += static_cast<long>(dst.size());
        };
        take(shearlet.lowpass);
        take(shearlet.generator);
        for (auto& f : free_weights) take(f);
        take(shearlet.gamma);
    }

    /// Same layout, all zeros (gradient accumulator).
    ModelParams zeros_like() const {
        ModelParams z = *this;
        z.shearlet = ShearletParams::zeros();
        for (auto& f : z.free_weights) std::fill(f.begin(), f.end(), 0.0);
        return z;
    }
};

/// PoGMDM bound to an image shape: shearlet system plus one GMM expert per filter.
class PogmdmModel {
public:
    PogmdmModel(ModelParams params, Shape shape)
        : params_(std::move(params)), system_(ShearletSystem::build(params_.shearlet, shape)) {
        params_.validate();
        experts_.reserve(kFilterCount);
        for (std::size_t k = 0; k < kFilterCount; ++k) {
            GmmExpert e;
            e.grid = params_.grid;
            e.weights = expand_symmetric(params_.free_weights[k], params_.grid.count);
            e.base_std = params_.base_std;
            e.filter_norm = system_.filter_norm(k);
            experts_.push_back(std::move(e));
        }
    }

    PogmdmModel rebuilt(Shape shape) const { return PogmdmModel(params_, shape); }

    Shape shape() const { return system_.shape(); }
    const ModelParams& params() const { return params_; }
    const ShearletSystem& system() const { return system_; }
    const std::vector<GmmExpert>& experts() const { return experts_; }
    std::size_t learnable_parameter_count() const { return params_.learnable_count(); }

    std::vector<ExpertKernel> kernels(double zeta) const {
        std::vector<ExpertKernel> out;
        out.reserve(experts_.size());
        for (const auto& e : experts_) out.emplace_back(e, zeta);
        return out;
    }

private:
    ModelParams params_;
    ShearletSystem system_;
    std::vector<GmmExpert> experts_;
};

/// -sum_k sum_ij log psi_k((K_k x)_ij, zeta), normalization constant omitted.
inline double neg_log_prior(const PogmdmModel& model, const RealImage& x, double zeta) {
    require_shape(x.shape(), model.shape(), "neg_log_prior");
    const auto kernels = model.kernels(zeta);
    const FilterResponses responses = model.system().analyze(x);
    double energy = 0.0;
    for (std::size_t k = 0; k < responses.size(); ++k)
        for (double v : responses[k]) energy -= kernels[k].evaluate(v).log_psi;
    return energy;
}

/// grad log p(x, zeta) = sum_k K_k^T psi_k'/psi_k (K_k x).
inline RealImage prior_score(const PogmdmModel& model, const RealImage& x, double zeta) {
    require_shape(x.shape(), model.shape(), "prior_score");
    const auto kernels = model.kernels(zeta);
    FilterResponses responses = model.system().analyze(x);
    for (std::size_t k = 0; k < responses.size(); ++k)
        for (double& v : responses[k]) v = kernels[k].evaluate(v).dlog;
    return model.system().adjoint(responses);
}

/// Tweedie estimate y + zeta^2 * score(y, zeta).
inline RealImage denoise(const PogmdmModel& model, const RealImage& y, double zeta) {
    if (!(zeta >= 0.0)) throw std::invalid_argument("noise level must be nonnegative");
    if (zeta == 0.0) {
        require_shape(y.shape(), model.shape(), "denoise");
        return y;
    }
    RealImage out = prior_score(model, y, zeta);
    out *= zeta * zeta;
    out += y;
    return out;
}

/// Charbonnier-smoothed isotropic total variation, forward differences with
/// Neumann boundary: sum_ij sqrt(|grad x|_ij^2 + eps^2).
inline double tv_energy(const RealImage& x, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("tv: eps must be positive");
    const std::size_t n = x.rows(), m = x.cols();
    double e = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < m; ++c) {
            const double dx = r + 1 < n ? x(r + 1, c) - x(r, c) : 0.0;
            const double dy = c + 1 < m ? x(r, c + 1) - x(r, c) : 0.0;
            e += std::sqrt(dx * dx + dy * dy + eps * eps);
        }
    }
    return e;
}

/// Negative gradient of tv_energy.
inline RealImage tv_score(const RealImage& x, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("tv: eps must be positive");
    const std::size_t n = x.rows(), m = x.cols();
    RealImage score(x.shape());
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < m; ++c) {
            const double dx = r + 1 < n ? x(r + 1, c) - x(r, c) : 0.0;
            const double dy = c + 1 < m ? x(r, c + 1) - x(r, c) : 0.0;
            const double inv = 1.0 / std::sqrt(dx * dx + dy * dy + eps * eps);
            // energy gradient = D^T (D x / rho); accumulate its negative
            if (r + 1 < n) {
                score(r + 1, c) -= dx * inv;
                score(r, c) += dx * inv;
            }
            if (c + 1 < m) {
                score(r, c + 1) -= dy * inv;
                score(r, c) += dy * inv;
            }
        }
    }
    return score;
}

}  // namespace pogmdm
