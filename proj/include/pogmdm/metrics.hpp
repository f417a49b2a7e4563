// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pogmdm Authors

#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

#include "pogmdm/core/image.hpp"

namespace pogmdm::metrics {

inline constexpr double kPsnrCap = 99.0;
inline constexpr std::size_t kSsimWindow = 7;

inline double mse(const RealImage& x, const RealImage& ref) {
    require_shape(x.shape(), ref.shape(), "mse");
    if (ref.empty()) throw std::invalid_argument("mse: empty image");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - ref[i];
        s += d * d;
    }
    return s / static_cast<double>(x.size());
}

/// 10 log10(max(ref)^2 / MSE), capped at 99 dB.
inline double psnr(const RealImage& x, const RealImage& ref) {
    const double e = mse(x, ref);
    const double peak = max_value(ref);
    if (e == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / e));
}

inline double nmse(const RealImage& x, const RealImage& ref) {
    require_shape(x.shape(), ref.shape(), "nmse");
    const double denom = squared_norm(ref);
    if (denom == 0.0) throw std::invalid_argument("nmse: reference has zero norm");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - ref[i];
        s += d * d;
    }
    return s / denom;
}

/// Mean SSIM over all fully contained 7x7 windows, uniform weights, population
/// statistics, data range max(ref).
inline double ssim(const RealImage& x, const RealImage& ref) {
    require_shape(x.shape(), ref.shape(), "ssim");
    const std::size_t w = kSsimWindow;
    if (x.rows() < w || x.cols() < w) throw std::invalid_argument("ssim: image smaller than 7x7 window");
    const double range = max_value(ref);
    const double c1 = (0.01 * range) * (0.01 * range);
    const double c2 = (0.03 * range) * (0.03 * range);
    const double inv = 1.0 / static_cast<double>(w * w);
    double total = 0.0;
    std::size_t windows = 0;
    for (std::size_t r = 0; r + w <= x.rows(); ++r) {
        for (std::size_t c = 0; c + w <= x.cols(); ++c) {
            double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
            for (std::size_t i = 0; i < w; ++i)
                for (std::size_t j = 0; j < w; ++j) {
                    const double a = x(r + i, c + j), b = ref(r + i, c + j);
                    sx += a, sy += b, sxx += a * a, syy += b * b, sxy += a * b;
                }
            const double mx = sx * inv, my = sy * inv;
            const double vx = std::max(0.0, sxx * inv - mx * mx);
            const double vy = std::max(0.0, syy * inv - my * my);
            const double cov = sxy * inv - mx * my;
            double v = ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            // flat zero windows in both images
            if (c1 == 0.0 && c2 == 0.0 && mx * mx + my * my == 0.0 && vx + vy == 0.0) v = 1.0;
            total += v;
            ++windows;
        }
    }
    return total / static_cast<double>(windows);
}

/// |x| . sqrt(sum_i |sigma_i|^2)
inline RealImage rss_weight(const ComplexImage& x, const Sensitivities& s) {
    RealImage out(x.shape());
    for (const auto& si : s) {
        require_shape(si.shape(), x.shape(), "rss_weight");
        for (std::size_t p = 0; p < out.size(); ++p) out[p] += std::norm(si[p]);
    }
    for (std::size_t p = 0; p < out.size(); ++p) out[p] = std::abs(x[p]) * std::sqrt(out[p]);
    return out;
}

struct Scores {
    double psnr, ssim, nmse;
};

inline Scores evaluate(const RealImage& x, const RealImage& ref) {
    return {psnr(x, ref), ssim(x, ref), nmse(x, ref)};
}

}  // namespace pogmdm::metrics
