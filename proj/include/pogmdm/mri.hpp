// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pogmdm Authors

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pogmdm/core/fft.hpp"
#include "pogmdm/core/image.hpp"
#include "pogmdm/core/random.hpp"

namespace pogmdm {

enum class MaskPattern { cartesian, cartesian_horizontal, radial, spiral, gaussian2d };

inline std::string to_string(MaskPattern p) {
    switch (p) {
        case MaskPattern::cartesian: return "cartesian";
        case MaskPattern::cartesian_horizontal: return "cartesian_horizontal";
        case MaskPattern::radial: return "radial";
        case MaskPattern::spiral: return "spiral";
        case MaskPattern::gaussian2d: return "gaussian2d";
    }
    return "unknown";
}

inline MaskPattern parse_mask_pattern(const std::string& s) {
    for (auto p : {MaskPattern::cartesian, MaskPattern::cartesian_horizontal, MaskPattern::radial,
                   MaskPattern::spiral, MaskPattern::gaussian2d})
        if (to_string(p) == s) return p;
    throw std::invalid_argument("unknown sampling pattern '" + s + "'");
}

/// Binary k-space sampling mask, stored in DFT order (DC at (0, 0)).
struct SamplingMask {
    Image<std::uint8_t> bits;
    MaskPattern pattern = MaskPattern::cartesian;
    double acceleration = 1.0;  // requested
    double acl_fraction = 0.0;
    std::uint64_t seed = 0;

    Shape shape() const { return bits.shape(); }

    std::size_t sampled() const {
        std::size_t f = 0;
        for (auto b : bits) f += b != 0;
        return f;
    }

    double achieved_acceleration() const {
        return static_cast<double>(bits.size()) / static_cast<double>(sampled());
    }

    /// Flat indices of sampled frequencies, row-major; this is the order of
    /// measured samples in KSpaceData.
    std::vector<std::size_t> indices() const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < bits.size(); ++i)
            if (bits[i]) idx.push_back(i);
        return idx;
    }

    static SamplingMask full(Shape s) {
        SamplingMask m;
        m.bits = Image<std::uint8_t>(s, 1);
        return m;
    }
};

/// Measured data z_1..z_c, each of length f, in mask order.
struct KSpaceData {
    SamplingMask mask;
    std::vector<std::vector<Complex>> coils;
    double noise_std = 0.0;

    std::size_t coil_count() const { return coils.size(); }
    Shape shape() const { return mask.shape(); }
};

namespace mri {

/// Signed frequency of DFT index k on an axis of length n.
inline long signed_frequency(std::size_t k, std::size_t n) {
    return k <= (n - 1) / 2 ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(n);
}

inline std::size_t frequency_index(long f, std::size_t n) {
    const long m = static_cast<long>(n);
    return static_cast<std::size_t>(((f % m) + m) % m);
}

/// M: full grid -> sampled vector.
inline std::vector<Complex> gather(const SamplingMask& mask, const ComplexImage& k) {
    require_shape(k.shape(), mask.shape(), "gather");
    std::vector<Complex> out;
    out.reserve(k.size());
    for (std::size_t i = 0; i < k.size(); ++i)
        if (mask.bits[i]) out.push_back(k[i]);
    return out;
}

/// M^*: sampled vector -> full grid, zeros elsewhere.
inline ComplexImage scatter(const SamplingMask& mask, const std::vector<Complex>& z) {
    ComplexImage out(mask.shape());
    std::size_t j = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!mask.bits[i]) continue;
        if (j >= z.size()) throw std::invalid_argument("scatter: too few samples for mask");
        out[i] = z[j++];
    }
    if (j != z.size()) throw std::invalid_argument("scatter: sample count does not match mask");
    return out;
}

inline void check_inputs(const ComplexImage& x, const Sensitivities& s, const SamplingMask& mask) {
    if (s.empty()) throw std::invalid_argument("at least one coil sensitivity required");
    require_shape(x.shape(), mask.shape(), "mri operator");
    for (const auto& si : s) require_shape(si.shape(), mask.shape(), "mri operator");
}

/// z_i = M F (sigma_i . x), F unitary.
inline KSpaceData forward(const ComplexImage& x, const Sensitivities& s, const SamplingMask& mask) {
    check_inputs(x, s, mask);
    KSpaceData out;
    out.mask = mask;
    out.coils.reserve(s.size());
    ComplexImage coil(x.shape());
    for (const auto& si : s) {
        for (std::size_t p = 0; p < x.size(); ++p) coil[p] = si[p] * x[p];
        out.coils.push_back(gather(mask, fft::unitary_forward(coil)));
    }
    return out;
}

/// A_x^* w = sum_i conj(sigma_i) . F^* M^* w_i.
inline ComplexImage adjoint_x(const Sensitivities& s, const KSpaceData& w) {
    if (w.coils.size() != s.size()) throw std::invalid_argument("coil count mismatch");
    ComplexImage out(w.shape());
    for (std::size_t i = 0; i < s.size(); ++i) {
        require_shape(s[i].shape(), w.shape(), "adjoint_x");
        const ComplexImage img = fft::unitary_inverse(scatter(w.mask, w.coils[i]));
        for (std::size_t p = 0; p < out.size(); ++p) out[p] += std::conj(s[i][p]) * img[p];
    }
    return out;
}

/// Per-coil image-space residual F^* M^* (M F (sigma_i . x) - z_i).
inline std::vector<ComplexImage> image_residuals(const ComplexImage& x, const Sensitivities& s,
                                                 const KSpaceData& z) {
    check_inputs(x, s, z.mask);
    if (z.coils.size() != s.size()) throw std::invalid_argument("coil count mismatch");
    std::vector<ComplexImage> out;
    out.reserve(s.size());
    ComplexImage coil(x.shape());
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t p = 0; p < x.size(); ++p) coil[p] = s[i][p] * x[p];
        ComplexImage k = fft::unitary_forward(coil);
        std::size_t j = 0;
        for (std::size_t p = 0; p < k.size(); ++p) {
            if (z.mask.bits[p]) {
                k[p] -= z.coils[i].at(j++);
            } else {
                k[p] = 0.0;
            }
        }
        if (j != z.coils[i].size()) throw std::invalid_argument("sample count does not match mask");
        out.push_back(fft::unitary_inverse(k));
    }
    return out;
}

/// 1/2 ||A(x, sigma) - z||^2.
inline double data_misfit(const ComplexImage& x, const Sensitivities& s, const KSpaceData& z) {
    const KSpaceData ax = forward(x, s, z.mask);
    double e = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < ax.coils[i].size(); ++j) e += std::norm(ax.coils[i][j] - z.coils[i].at(j));
    return 0.5 * e;
}

/// Gradient of 1/2 ||A - z||^2 in x (real/imag parts packed as a complex image).
inline ComplexImage grad_x_likelihood(const ComplexImage& x, const Sensitivities& s, const KSpaceData& z) {
    const auto res = image_residuals(x, s, z);
    ComplexImage g(x.shape());
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t p = 0; p < g.size(); ++p) g[p] += std::conj(s[i][p]) * res[i][p];
    return g;
}

/// Gradient of 1/2 ||A - z||^2 in each sigma_i: conj(x) . F^* M^* (residual_i).
inline Sensitivities grad_sigma_likelihood(const ComplexImage& x, const Sensitivities& s, const KSpaceData& z) {
    auto res = image_residuals(x, s, z);
    for (auto& r : res)
        for (std::size_t p = 0; p < r.size(); ++p) r[p] *= std::conj(x[p]);
    return res;
}

struct ZeroFilled {
    std::vector<ComplexImage> coil_images;
    RealImage rss;
};

inline RealImage root_sum_of_squares(const std::vector<ComplexImage>& images) {
    if (images.empty()) throw std::invalid_argument("rss: no images");
    RealImage rss(images.front().shape());
    for (const auto& img : images) {
        require_shape(img.shape(), rss.shape(), "rss");
        for (std::size_t p = 0; p < rss.size(); ++p) rss[p] += std::norm(img[p]);
    }
    for (double& v : rss) v = std::sqrt(v);
    return rss;
}

/// Coil images F^* M^* z_i and their root-sum-of-squares combination.
inline ZeroFilled zero_filled(const KSpaceData& z) {
    ZeroFilled out;
    for (const auto& zi : z.coils) out.coil_images.push_back(fft::unitary_inverse(scatter(z.mask, zi)));
    out.rss = root_sum_of_squares(out.coil_images);
    return out;
}

/// Adds circular complex Gaussian noise; real and imaginary parts each have
/// standard deviation `std`.
inline void add_noise(KSpaceData& z, double std, std::uint64_t seed) {
    if (!(std >= 0.0)) throw std::invalid_argument("noise std must be nonnegative");
    RandomStream rng(seed, 0x6e6f697365ULL);
    for (auto& coil : z.coils)
        for (auto& v : coil) v += Complex(std * rng.normal(), std * rng.normal());
    z.noise_std = std;
}

namespace detail {

inline void cartesian_lines(SamplingMask& mask, bool rows, RandomStream& rng) {
    const Shape s = mask.shape();
    const std::size_t lines = rows ? s.rows : s.cols;
    const auto target = static_cast<std::size_t>(std::lround(static_cast<double>(lines) / mask.acceleration));
    std::size_t acl = static_cast<std::size_t>(std::lround(mask.acl_fraction * static_cast<double>(lines)));
    if (mask.acl_fraction > 0.0) acl = std::max<std::size_t>(acl, 1);
    if (target < 1 || acl > target)
        throw std::invalid_argument("infeasible acceleration: " + std::to_string(mask.acceleration) +
                                    " with acl fraction " + std::to_string(mask.acl_fraction));
    std::vector<std::uint8_t> chosen(lines, 0);
    const long acl_lo = -static_cast<long>(acl / 2);
    for (std::size_t i = 0; i < acl; ++i) chosen[frequency_index(acl_lo + static_cast<long>(i), lines)] = 1;
    // remaining lines ordered by signed frequency, picked equispaced
    std::vector<std::size_t> candidates;
    for (long f = -static_cast<long>(lines / 2); f < static_cast<long>(lines - lines / 2); ++f) {
        const std::size_t idx = frequency_index(f, lines);
        if (!chosen[idx]) candidates.push_back(idx);
    }
    const std::size_t outer = target - acl;
    if (outer > 0) {
        const double spacing = static_cast<double>(candidates.size()) / static_cast<double>(outer);
        const double offset = rng.uniform() * spacing;
        for (std::size_t t = 0; t < outer; ++t) {
            const auto j = static_cast<std::size_t>(offset + spacing * static_cast<double>(t));
            chosen[candidates[std::min(j, candidates.size() - 1)]] = 1;
        }
    }
    for (std::size_t r = 0; r < s.rows; ++r)
        for (std::size_t c = 0; c < s.cols; ++c) mask.bits(r, c) = chosen[rows ? r : c];
}

inline void set_point(SamplingMask& mask, double fr, double fc) {
    const Shape s = mask.shape();
    const long r = std::lround(fr), c = std::lround(fc);
    const long rlo = -static_cast<long>(s.rows / 2), rhi = static_cast<long>(s.rows - s.rows / 2) - 1;
    const long clo = -static_cast<long>(s.cols / 2), chi = static_cast<long>(s.cols - s.cols / 2) - 1;
    if (r < rlo || r > rhi || c < clo || c > chi) return;
    mask.bits(frequency_index(r, s.rows), frequency_index(c, s.cols)) = 1;
}

inline std::size_t radial_with(SamplingMask& mask, std::size_t spokes, double start) {
    mask.bits.fill(0);
    const Shape s = mask.shape();
    const double radius = 0.5 * std::hypot(static_cast<double>(s.rows), static_cast<double>(s.cols));
    const double golden = 111.246117975 * std::numbers::pi / 180.0;
    for (std::size_t k = 0; k < spokes; ++k) {
        const double angle = start + golden * static_cast<double>(k);
        const double cr = std::sin(angle), cc = std::cos(angle);
        for (double t = 0.0; t <= radius; t += 0.5) set_point(mask, t * cr, t * cc);
    }
    set_point(mask, 0.0, 0.0);
    return mask.sampled();
}

inline std::size_t spiral_with(SamplingMask& mask, double pitch, double start) {
    mask.bits.fill(0);
    const Shape s = mask.shape();
    const double radius = 0.5 * std::hypot(static_cast<double>(s.rows), static_cast<double>(s.cols));
    // Archimedean r = pitch * theta / (2 pi): radial distance between turns is `pitch`
    const double a = pitch / (2.0 * std::numbers::pi);
    double theta = 0.0;
    while (a * theta <= radius) {
        const double r = a * theta;
        set_point(mask, r * std::sin(theta + start), r * std::cos(theta + start));
        // arc-length step of at most half a pixel
        theta += 0.5 / std::max(std::hypot(r, a), 1e-3);
    }
    set_point(mask, 0.0, 0.0);
    return mask.sampled();
}

}  // namespace detail

/// Deterministic sampling mask for a pattern and target acceleration n*m/f.
inline SamplingMask make_mask(MaskPattern pattern, Shape shape, double acceleration, double acl_fraction,
                              std::uint64_t seed) {
    if (!(acceleration >= 1.0) || !std::isfinite(acceleration))
        throw std::invalid_argument("infeasible acceleration: must be >= 1");
    if (!(acl_fraction >= 0.0 && acl_fraction <= 1.0))
        throw std::invalid_argument("acl fraction must be in [0, 1]");
    if (shape.size() == 0) throw std::invalid_argument("empty mask shape");
    SamplingMask mask;
    mask.bits = Image<std::uint8_t>(shape, 0);
    mask.pattern = pattern;
    mask.acceleration = acceleration;
    mask.acl_fraction = acl_fraction;
    mask.seed = seed;
    if (acceleration == 1.0) {
        mask.bits.fill(1);
        return mask;
    }
    const double target = static_cast<double>(shape.size()) / acceleration;
    if (target < 1.0) throw std::invalid_argument("infeasible acceleration: fewer than one sample");
    RandomStream rng(seed, static_cast<std::uint64_t>(pattern) + 0x6d61736bULL);

    switch (pattern) {
        case MaskPattern::cartesian: detail::cartesian_lines(mask, false, rng); break;
        case MaskPattern::cartesian_horizontal: detail::cartesian_lines(mask, true, rng); break;
        case MaskPattern::radial: {
            const double start = rng.uniform() * 2.0 * std::numbers::pi;
            std::size_t spokes = 1, best = 1;
            double best_err = 1e300;
            for (; spokes < 100000; ++spokes) {
                const double f = static_cast<double>(detail::radial_with(mask, spokes, start));
                const double err = std::abs(f - target);
                if (err < best_err) best_err = err, best = spokes;
                if (f >= target || f >= static_cast<double>(shape.size())) break;
            }
            detail::radial_with(mask, best, start);
            break;
        }
        case MaskPattern::spiral: {
            const double start = rng.uniform() * 2.0 * std::numbers::pi;
            double lo = 0.05, hi = static_cast<double>(std::max(shape.rows, shape.cols));
            double best_pitch = hi, best_err = 1e300;
            for (int it = 0; it < 60; ++it) {
                const double mid = std::sqrt(lo * hi);
                const double f = static_cast<double>(detail::spiral_with(mask, mid, start));
                const double err = std::abs(f - target);
                if (err < best_err) best_err = err, best_pitch = mid;
                if (f > target) lo = mid; else hi = mid;
            }
            detail::spiral_with(mask, best_pitch, start);
            break;
        }
        case MaskPattern::gaussian2d: {
            // density c * exp(-|k|^2 / (2 rho^2)) in normalized frequency, clipped to 1
            const double rho = 0.15;
            auto density = [&](std::size_t r, std::size_t c) {
                const double fr = static_cast<double>(signed_frequency(r, shape.rows)) / static_cast<double>(shape.rows);
                const double fc = static_cast<double>(signed_frequency(c, shape.cols)) / static_cast<double>(shape.cols);
                return std::exp(-(fr * fr + fc * fc) / (2.0 * rho * rho));
            };
            auto expected = [&](double scale) {
                double total = 0.0;
                for (std::size_t r = 0; r < shape.rows; ++r)
                    for (std::size_t c = 0; c < shape.cols; ++c) total += std::min(1.0, scale * density(r, c));
                return total;
            };
            double lo = 0.0, hi = 1.0;
            while (expected(hi) < target && hi < 1e12) hi *= 2.0;
            for (int it = 0; it < 80; ++it) {
                const double mid = 0.5 * (lo + hi);
                if (expected(mid) < target) lo = mid; else hi = mid;
            }
            const double scale = 0.5 * (lo + hi);
            for (std::size_t r = 0; r < shape.rows; ++r)
                for (std::size_t c = 0; c < shape.cols; ++c)
                    mask.bits(r, c) = rng.uniform() < std::min(1.0, scale * density(r, c)) ? 1 : 0;
            mask.bits(0, 0) = 1;
            break;
        }
    }
    if (mask.sampled() == 0) throw std::invalid_argument("infeasible acceleration: empty mask");
    return mask;
}

/// Smooth complex sensitivities: Gaussian magnitude bumps centred on the image
/// border with small linear phase ramps. With normalize, sum_i |sigma_i|^2 = 1.
inline Sensitivities simulate_coils(Shape shape, std::size_t coils, std::uint64_t seed, bool normalize = true) {
    if (coils < 1) throw std::invalid_argument("simulate_coils: need at least one coil");
    RandomStream rng(seed, 0x636f696cULL);
    const double n = static_cast<double>(shape.rows), m = static_cast<double>(shape.cols);
    const double width = 0.45 * std::max(n, m);
    const double offset = rng.uniform() * 2.0 * std::numbers::pi;
    Sensitivities s;
    for (std::size_t i = 0; i < coils; ++i) {
        const double angle = offset + 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(coils);
        const double cr = 0.5 * n + 0.5 * n * std::sin(angle);
        const double cc = 0.5 * m + 0.5 * m * std::cos(angle);
        const double ramp_r = rng.uniform(-1.0, 1.0) * std::numbers::pi / n;
        const double ramp_c = rng.uniform(-1.0, 1.0) * std::numbers::pi / m;
        const double phase0 = rng.uniform() * 2.0 * std::numbers::pi;
        ComplexImage coil(shape);
        for (std::size_t r = 0; r < shape.rows; ++r) {
            for (std::size_t c = 0; c < shape.cols; ++c) {
                const double dr = static_cast<double>(r) - cr, dc = static_cast<double>(c) - cc;
                const double mag = std::exp(-(dr * dr + dc * dc) / (2.0 * width * width));
                const double phase = phase0 + ramp_r * static_cast<double>(r) + ramp_c * static_cast<double>(c);
                coil(r, c) = std::polar(mag, phase);
            }
        }
        s.push_back(std::move(coil));
    }
    if (normalize) {
        for (std::size_t p = 0; p < shape.size(); ++p) {
            double total = 0.0;
            for (const auto& coil : s) total += std::norm(coil[p]);
            const double inv = 1.0 / std::sqrt(total);
            for (auto& coil : s) coil[p] *= inv;
        }
    }
    return s;
}

enum class PhantomKind { shepp_logan, ellipses, flat };

inline PhantomKind parse_phantom_kind(const std::string& s) {
    if (s == "shepp-logan" || s == "shepp_logan") return PhantomKind::shepp_logan;
    if (s == "ellipses") return PhantomKind::ellipses;
    if (s == "flat") return PhantomKind::flat;
    throw std::invalid_argument("unknown phantom kind '" + s + "'");
}

struct Ellipse {
    double value, semi_x, semi_y, centre_x, centre_y, angle_deg;
};

/// Rasterizes additive ellipses on [-1, 1]^2 (x to the right, y up).
inline RealImage draw_ellipses(Shape shape, const std::vector<Ellipse>& ellipses) {
    RealImage img(shape);
    for (std::size_t r = 0; r < shape.rows; ++r) {
        const double y = 1.0 - 2.0 * (static_cast<double>(r) + 0.5) / static_cast<double>(shape.rows);
        for (std::size_t c = 0; c < shape.cols; ++c) {
            const double x = 2.0 * (static_cast<double>(c) + 0.5) / static_cast<double>(shape.cols) - 1.0;
            double v = 0.0;
            for (const auto& e : ellipses) {
                const double t = e.angle_deg * std::numbers::pi / 180.0;
                const double dx = x - e.centre_x, dy = y - e.centre_y;
                const double u = dx * std::cos(t) + dy * std::sin(t);
                const double w = -dx * std::sin(t) + dy * std::cos(t);
                if ((u * u) / (e.semi_x * e.semi_x) + (w * w) / (e.semi_y * e.semi_y) <= 1.0) v += e.value;
            }
            img(r, c) = v;
        }
    }
    return img;
}

/// Test objects as complex images with zero phase. shepp-logan is the
/// modified (high-contrast) variant; ellipses draws random ellipses from seed;
/// flat is a uniform disc.
inline ComplexImage phantom(Shape shape, PhantomKind kind, std::uint64_t seed = 0) {
    std::vector<Ellipse> ellipses;
    switch (kind) {
        case PhantomKind::shepp_logan:
            ellipses = {{1.0, 0.69, 0.92, 0.0, 0.0, 0.0},       {-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0},
                        {-0.2, 0.11, 0.31, 0.22, 0.0, -18.0},   {-0.2, 0.16, 0.41, -0.22, 0.0, 18.0},
                        {0.1, 0.21, 0.25, 0.0, 0.35, 0.0},      {0.1, 0.046, 0.046, 0.0, 0.1, 0.0},
                        {0.1, 0.046, 0.046, 0.0, -0.1, 0.0},    {0.1, 0.046, 0.023, -0.08, -0.605, 0.0},
                        {0.1, 0.023, 0.023, 0.0, -0.606, 0.0},  {0.1, 0.023, 0.046, 0.06, -0.605, 0.0}};
            break;
        case PhantomKind::ellipses: {
            RandomStream rng(seed, 0x656c6cULL);
            ellipses.push_back({rng.uniform(0.4, 0.8), rng.uniform(0.6, 0.9), rng.uniform(0.6, 0.9),
                                rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(0.0, 180.0)});
            const std::size_t count = 3 + rng.below(6);
            for (std::size_t i = 0; i < count; ++i)
                ellipses.push_back({rng.uniform(-0.3, 0.4), rng.uniform(0.05, 0.35), rng.uniform(0.05, 0.35),
                                    rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(0.0, 180.0)});
            break;
        }
        case PhantomKind::flat: ellipses = {{1.0, 0.8, 0.8, 0.0, 0.0, 0.0}}; break;
    }
    RealImage img = draw_ellipses(shape, ellipses);
    for (double& v : img) v = std::max(v, 0.0);
    const double peak = max_value(img);
    if (peak > 0.0) img *= 1.0 / peak;
    return to_complex(img);
}

}  // namespace mri
}  // namespace pogmdm
