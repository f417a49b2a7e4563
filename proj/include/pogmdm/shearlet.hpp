// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pogmdm Authors

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pogmdm/core/fft.hpp"
#include "pogmdm/core/image.hpp"

namespace pogmdm {

inline constexpr std::size_t kLowpassTaps = 9;
inline constexpr std::size_t kGeneratorSize = 17;
inline constexpr std::size_t kScales = 2;
inline constexpr std::size_t kShears = 5;
inline constexpr std::size_t kCones = 2;
inline constexpr std::size_t kFilterCount = kScales * kShears * kCones;
/// Smallest image side a system can be built for. Filters wrap circularly on
/// smaller grids than their support, which is well defined; below this size
/// the 9-tap low-pass aliases onto itself at the finest dilation.
inline constexpr std::size_t kMinImageSide = 16;

/// Learnable building blocks of the shearlet system.
struct ShearletParams {
    std::vector<double> lowpass;    // h, kLowpassTaps taps centred at index 4
    std::vector<double> generator;  // P, kGeneratorSize^2 row-major, centred
    std::vector<double> gamma;      // per-filter weights, kFilterCount

    /// Normalized binomial low-pass, an elongated odd (zero-mean) directional
    /// generator and small filter weights.
    static ShearletParams initial() {
        ShearletParams p;
        const double binomial[kLowpassTaps] = {1, 8, 28, 56, 70, 56, 28, 8, 1};
        p.lowpass.assign(binomial, binomial + kLowpassTaps);
        const double hn = std::sqrt(std::inner_product(p.lowpass.begin(), p.lowpass.end(),
                                                       p.lowpass.begin(), 0.0));
        for (double& v : p.lowpass) v /= hn;
        p.generator.resize(kGeneratorSize * kGeneratorSize);
        constexpr int half = static_cast<int>(kGeneratorSize / 2);
        for (int r = -half; r <= half; ++r) {
            for (int c = -half; c <= half; ++c) {
                const double v = -(c / 1.5) * std::exp(-0.5 * (c * c) / (1.5 * 1.5) -
                                                       0.5 * (r * r) / (4.0 * 4.0));
                p.generator[(r + half) * kGeneratorSize + (c + half)] = v;
            }
        }
        p.gamma.assign(kFilterCount, 0.03);
        return p;
    }

    static ShearletParams zeros() {
        ShearletParams p;
        p.lowpass.assign(kLowpassTaps, 0.0);
        p.generator.assign(kGeneratorSize * kGeneratorSize, 0.0);
        p.gamma.assign(kFilterCount, 0.0);
        return p;
    }

    void validate() const {
        if (lowpass.size() != kLowpassTaps) throw std::invalid_argument("lowpass must have 9 taps");
        if (generator.size() != kGeneratorSize * kGeneratorSize)
            throw std::invalid_argument("generator must be 17x17");
        if (gamma.size() != kFilterCount) throw std::invalid_argument("gamma must have 20 entries");
        for (double g : gamma)
            if (!(g >= 0.0) || !std::isfinite(g))
                throw std::invalid_argument("gamma must be finite and nonnegative");
    }
};

struct FilterTag {
    std::size_t cone;   // 0 vertical, 1 horizontal
    std::size_t scale;  // 0 fine, 1 coarse
    int shear;          // -2..2
};

inline FilterTag filter_tag(std::size_t k) {
    return {k / (kScales * kShears), (k / kShears) % kScales,
            static_cast<int>(k % kShears) - static_cast<int>(kShears / 2)};
}

using FilterResponses = std::vector<RealImage>;

namespace detail {

/// Enumerates the bilinear taps of the sheared generator. fn(tr, tc, sr, sc, w)
/// means Q[tr][tc] += w * P[sr][sc]. The vertical cone samples P at
/// (r, c - a r) with a = shear / 2^scale; the horizontal cone is its transpose.
template <typename Fn>
void for_each_shear_tap(FilterTag tag, Fn&& fn) {
    constexpr int size = static_cast<int>(kGeneratorSize);
    constexpr int half = size / 2;
    const double slope = tag.shear / static_cast<double>(1 << tag.scale);
    for (int r = 0; r < size; ++r) {
        for (int c = 0; c < size; ++c) {
            const double x = (c - half) - slope * (r - half) + half;
            const double x0 = std::floor(x);
            const double t = x - x0;
            const int i0 = static_cast<int>(x0);
            const int tr = tag.cone == 0 ? r : c;
            const int tc = tag.cone == 0 ? c : r;
            if (i0 >= 0 && i0 < size && t < 1.0) fn(tr, tc, r, i0, 1.0 - t);
            if (t > 0.0 && i0 + 1 >= 0 && i0 + 1 < size) fn(tr, tc, r, i0 + 1, t);
        }
    }
}

inline std::size_t wrap(long i, std::size_t n) {
    const long m = static_cast<long>(n);
    return static_cast<std::size_t>(((i % m) + m) % m);
}

}  // namespace detail

/// The o = 20 convolution operators K_k = gamma_k * K~_k on an n x m periodic
/// grid. Immutable after build; analyze/adjoint are const and thread-safe.
class ShearletSystem {
public:
    static ShearletSystem build(const ShearletParams& params, Shape shape) {
        params.validate();
        if (shape.rows < kMinImageSide || shape.cols < kMinImageSide)
            throw std::invalid_argument("shape too small: " + to_string(shape) +
                                        " (minimum side " + std::to_string(kMinImageSide) + ")");
        ShearletSystem sys;
        sys.params_ = params;
        sys.shape_ = shape;
        sys.dc_gain_ = std::accumulate(params.lowpass.begin(), params.lowpass.end(), 0.0);
        if (std::abs(sys.dc_gain_) < 1e-12)
            throw std::invalid_argument("low-pass filter has zero DC gain");

        for (std::size_t j = 0; j < kScales; ++j) sys.build_lowpass(j);

        sys.generator_spectra_.resize(kFilterCount);
        sys.unit_filters_.resize(kFilterCount);
        sys.raw_norms_.assign(kFilterCount, 0.0);
        sys.filters_.resize(kFilterCount);
        sys.transfer_.resize(kFilterCount);
        sys.filter_norms_.assign(kFilterCount, 0.0);
        const double nm = static_cast<double>(shape.size());
        for (std::size_t k = 0; k < kFilterCount; ++k) {
            const FilterTag tag = filter_tag(k);
            RealImage q(shape);
            constexpr long half = static_cast<long>(kGeneratorSize / 2);
            detail::for_each_shear_tap(tag, [&](int tr, int tc, int sr, int sc, double w) {
                q(detail::wrap(tr - half, shape.rows), detail::wrap(tc - half, shape.cols)) +=
                    w * params.generator[sr * kGeneratorSize + sc];
            });
            ComplexImage qhat = fft::forward(q);
            const ComplexImage& lowpass = sys.lowpass_spectra_[tag.scale];
            ComplexImage spectrum(shape);
            for (std::size_t i = 0; i < spectrum.size(); ++i)
                spectrum[i] = (1.0 - lowpass[i]) * qhat[i];
            RealImage raw = real_part(fft::inverse(spectrum));
            const double nu = norm(raw);
            sys.raw_norms_[k] = nu;
            const double gamma = params.gamma[k];
            if (nu > 1e-300) {
                raw *= 1.0 / nu;
                spectrum *= gamma / nu;
            } else {
                raw.fill(0.0);
                spectrum.fill(0.0);
            }
            sys.unit_filters_[k] = raw;
            sys.filters_[k] = gamma * raw;
            sys.filter_norms_[k] = norm(spectrum) / std::sqrt(nm);
            sys.transfer_[k] = std::move(spectrum);
            sys.generator_spectra_[k] = std::move(qhat);
        }
        return sys;
    }

    Shape shape() const { return shape_; }
    std::size_t size() const { return kFilterCount; }
    const ShearletParams& params() const { return params_; }

    /// Frequency response (unnormalized DFT of the spatial filter).
    const ComplexImage& transfer(std::size_t k) const { return transfer_.at(k); }
    /// Spatial point-spread function, origin at (0, 0), periodic.
    const RealImage& filter(std::size_t k) const { return filters_.at(k); }
    double filter_norm(std::size_t k) const { return filter_norms_.at(k); }
    const std::vector<double>& filter_norms() const { return filter_norms_; }

    /// response[k] = circular convolution of x with filter k.
    FilterResponses analyze(const RealImage& x) const {
        require_shape(x.shape(), shape_, "shearlet analyze");
        const ComplexImage spectrum = fft::forward(x);
        FilterResponses out(kFilterCount);
        ComplexImage pair(shape_);
        // Two real responses per inverse transform: IDFT((Ta + i Tb) X) = ra + i rb.
        for (std::size_t k = 0; k < kFilterCount; k += 2) {
            const ComplexImage& ta = transfer_[k];
            const ComplexImage& tb = transfer_[k + 1];
            for (std::size_t i = 0; i < pair.size(); ++i)
                pair[i] = (ta[i] + Complex(0.0, 1.0) * tb[i]) * spectrum[i];
            const ComplexImage z = fft::inverse(pair);
            out[k] = real_part(z);
            out[k + 1] = imag_part(z);
        }
        return out;
    }

    /// sum_k K_k^T r_k.
    RealImage adjoint(std::span<const RealImage> responses) const {
        if (responses.size() != kFilterCount)
            throw std::invalid_argument("adjoint: expected " + std::to_string(kFilterCount) +
                                        " responses, got " + std::to_string(responses.size()));
        ComplexImage acc(shape_);
        ComplexImage packed(shape_);
        for (std::size_t k = 0; k < kFilterCount; k += 2) {
            require_shape(responses[k].shape(), shape_, "shearlet adjoint");
            require_shape(responses[k + 1].shape(), shape_, "shearlet adjoint");
            for (std::size_t i = 0; i < packed.size(); ++i)
                packed[i] = Complex(responses[k][i], responses[k + 1][i]);
            const ComplexImage z = fft::forward(packed);
            const ComplexImage& ta = transfer_[k];
            const ComplexImage& tb = transfer_[k + 1];
            // Re IDFT(conj(Ta) Z) picks ra's correlation, Re IDFT(-i conj(Tb) Z) picks rb's.
            for (std::size_t i = 0; i < acc.size(); ++i)
                acc[i] += (std::conj(ta[i]) - Complex(0.0, 1.0) * std::conj(tb[i])) * z[i];
        }
        return real_part(fft::inverse(acc));
    }

    /// Pulls gradients with respect to the spatial filters g_k (and any direct
    /// dependence on gamma_k) back to the building blocks (h, P, gamma).
    ShearletParams backward(std::span<const RealImage> filter_grads,
                            std::span<const double> gamma_grads) const {
        if (filter_grads.size() != kFilterCount || gamma_grads.size() != kFilterCount)
            throw std::invalid_argument("backward: expected one gradient per filter");
        ShearletParams grad = ShearletParams::zeros();
        std::array<ComplexImage, kScales> lowpass_grad;
        for (auto& g : lowpass_grad) g = ComplexImage(shape_);
        constexpr long half = static_cast<long>(kGeneratorSize / 2);

        for (std::size_t k = 0; k < kFilterCount; ++k) {
            const RealImage& dg = filter_grads[k];
            require_shape(dg.shape(), shape_, "shearlet backward");
            const RealImage& unit = unit_filters_[k];
            const double projection = dot(dg, unit);
            grad.gamma[k] = gamma_grads[k] + projection;
            const double nu = raw_norms_[k];
            if (nu <= 1e-300) continue;
            const FilterTag tag = filter_tag(k);
            const double gamma = params_.gamma[k];
            RealImage draw(shape_);
            for (std::size_t i = 0; i < draw.size(); ++i)
                draw[i] = gamma * (dg[i] - unit[i] * projection) / nu;
            const ComplexImage dspec = fft::forward(draw);
            const ComplexImage& lowpass = lowpass_spectra_[tag.scale];
            const ComplexImage& qhat = generator_spectra_[k];
            ComplexImage dq_spec(shape_);
            ComplexImage& dl = lowpass_grad[tag.scale];
            for (std::size_t i = 0; i < dq_spec.size(); ++i) {
                dq_spec[i] = (1.0 - std::conj(lowpass[i])) * dspec[i];
                dl[i] -= dspec[i] * std::conj(qhat[i]);
            }
            const RealImage dq = real_part(fft::inverse(dq_spec));
            detail::for_each_shear_tap(tag, [&](int tr, int tc, int sr, int sc, double w) {
                grad.generator[sr * kGeneratorSize + sc] +=
                    w * dq(detail::wrap(tr - half, shape_.rows), detail::wrap(tc - half, shape_.cols));
            });
        }

        const double s = dc_gain_;
        for (std::size_t j = 0; j < kScales; ++j) {
            const RealImage dl = real_part(fft::inverse(lowpass_grad[j]));
            const std::vector<double>& a = lowpass_rows_[j];
            const std::vector<double>& b = lowpass_cols_[j];
            std::vector<double> da(shape_.rows, 0.0), db(shape_.cols, 0.0);
            double dl_dot_l = 0.0;
            for (std::size_t r = 0; r < shape_.rows; ++r) {
                for (std::size_t c = 0; c < shape_.cols; ++c) {
                    const double v = dl(r, c);
                    da[r] += v * b[c];
                    db[c] += v * a[r];
                    dl_dot_l += v * a[r] * b[c];
                }
            }
            const double inv_s2 = 1.0 / (s * s);
            const double ds = -2.0 * dl_dot_l * inv_s2 / s;
            const long dilation = 1L << (j + 1);
            for (std::size_t t = 0; t < kLowpassTaps; ++t) {
                const long offset = dilation * (static_cast<long>(t) - 4);
                grad.lowpass[t] += da[detail::wrap(offset, shape_.rows)] * inv_s2 +
                                   db[detail::wrap(offset, shape_.cols)] * inv_s2 + ds;
            }
        }
        return grad;
    }

private:
    // Separable low-pass of the residual (1 - L_{j+1}): dilation 2^{j+1},
    // normalized to unit DC gain so that the residual vanishes at DC.
    void build_lowpass(std::size_t j) {
        const long dilation = 1L << (j + 1);
        std::vector<double> a(shape_.rows, 0.0), b(shape_.cols, 0.0);
        for (std::size_t t = 0; t < kLowpassTaps; ++t) {
            const long offset = dilation * (static_cast<long>(t) - 4);
            a[detail::wrap(offset, shape_.rows)] += params_.lowpass[t];
            b[detail::wrap(offset, shape_.cols)] += params_.lowpass[t];
        }
        RealImage kernel(shape_);
        const double inv_s2 = 1.0 / (dc_gain_ * dc_gain_);
        for (std::size_t r = 0; r < shape_.rows; ++r)
            for (std::size_t c = 0; c < shape_.cols; ++c) kernel(r, c) = a[r] * b[c] * inv_s2;
        lowpass_spectra_[j] = fft::forward(kernel);
        lowpass_rows_[j] = std::move(a);
        lowpass_cols_[j] = std::move(b);
    }

    ShearletParams params_;
    Shape shape_;
    double dc_gain_ = 1.0;
    std::array<ComplexImage, kScales> lowpass_spectra_;
    std::array<std::vector<double>, kScales> lowpass_rows_;
    std::array<std::vector<double>, kScales> lowpass_cols_;
    std::vector<ComplexImage> generator_spectra_;
    std::vector<RealImage> unit_filters_;
    std::vector<double> raw_norms_;
    std::vector<RealImage> filters_;
    std::vector<ComplexImage> transfer_;
    std::vector<double> filter_norms_;
};

}  // namespace pogmdm
