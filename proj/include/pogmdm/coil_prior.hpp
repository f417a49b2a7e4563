// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pogmdm Authors

#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "pogmdm/core/fft.hpp"
#include "pogmdm/core/image.hpp"

namespace pogmdm::coil {

/// Eigenvalues of the 2-D Dirichlet Laplacian D^T D, laid out to match the
/// DST-I coefficients (index a-1, b-1).
struct LaplaceEigen {
    RealImage tau;

    explicit LaplaceEigen(Shape s) : tau(s) {
        const double n = static_cast<double>(s.rows), m = static_cast<double>(s.cols);
        for (std::size_t a = 0; a < s.rows; ++a) {
            const double sa = std::sin(std::numbers::pi * static_cast<double>(a + 1) / (2.0 * (n + 1.0)));
            for (std::size_t b = 0; b < s.cols; ++b) {
                const double sb = std::sin(std::numbers::pi * static_cast<double>(b + 1) / (2.0 * (m + 1.0)));
                tau(a, b) = 4.0 * sa * sa + 4.0 * sb * sb;
            }
        }
    }
};

/// Forward differences with zero outside the image, both ends: vertical
/// (n+1) x m and horizontal n x (m+1).
struct Differences {
    RealImage vertical;
    RealImage horizontal;
};

inline Differences differences(const RealImage& u) {
    const std::size_t n = u.rows(), m = u.cols();
    auto at = [&](long r, long c) {
        if (r < 0 || c < 0 || r >= static_cast<long>(n) || c >= static_cast<long>(m)) return 0.0;
        return u(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
    };
    Differences d{RealImage(n + 1, m), RealImage(n, m + 1)};
    for (std::size_t r = 0; r <= n; ++r)
        for (std::size_t c = 0; c < m; ++c) {
            const long rr = static_cast<long>(r), cc = static_cast<long>(c);
            d.vertical(r, c) = at(rr, cc) - at(rr - 1, cc);
        }
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c <= m; ++c) {
            const long rr = static_cast<long>(r), cc = static_cast<long>(c);
            d.horizontal(r, c) = at(rr, cc) - at(rr, cc - 1);
        }
    return d;
}

/// D^T D u: 5-point Laplacian (4u - neighbours), zero boundary.
inline RealImage laplacian(const RealImage& u) {
    const std::size_t n = u.rows(), m = u.cols();
    RealImage out(u.shape());
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) {
            double v = 4.0 * u(r, c);
            if (r > 0) v -= u(r - 1, c);
            if (r + 1 < n) v -= u(r + 1, c);
            if (c > 0) v -= u(r, c - 1);
            if (c + 1 < m) v -= u(r, c + 1);
            out(r, c) = v;
        }
    return out;
}

inline double channel_energy(const RealImage& u) {
    const Differences d = differences(u);
    return 0.5 * (squared_norm(d.vertical) + squared_norm(d.horizontal));
}

/// s(sigma) = 1/2 sum_i ||D Re sigma_i||^2 + ||D Im sigma_i||^2.
inline double smoothness_energy(const Sensitivities& s) {
    double e = 0.0;
    for (const auto& si : s) e += channel_energy(real_part(si)) + channel_energy(imag_part(si));
    return e;
}

/// Gradient of smoothness_energy, per coil (Re and Im packed).
inline Sensitivities smoothness_gradient(const Sensitivities& s) {
    Sensitivities out;
    out.reserve(s.size());
    for (const auto& si : s) out.push_back(combine(laplacian(real_part(si)), laplacian(imag_part(si))));
    return out;
}

/// argmin_u 1/2 ||u - v||^2 + mu s(u), solved in the DST-I basis.
inline Sensitivities prox_smoothness(const Sensitivities& v, double mu) {
    if (!(mu > 0.0) || !std::isfinite(mu)) throw std::invalid_argument("prox_smoothness: mu must be positive");
    Sensitivities out;
    out.reserve(v.size());
    if (v.empty()) return out;
    const LaplaceEigen eig(v.front().shape());
    RealImage gain(eig.tau.shape());
    for (std::size_t p = 0; p < gain.size(); ++p) gain[p] = 1.0 / (1.0 + mu * eig.tau[p]);
    auto apply = [&](const RealImage& channel) {
        RealImage coeff = fft::dst1(channel);
        for (std::size_t p = 0; p < coeff.size(); ++p) coeff[p] *= gain[p];
        return fft::dst1(coeff);
    };
    for (const auto& vi : v) {
        require_shape(vi.shape(), gain.shape(), "prox_smoothness");
        out.push_back(combine(apply(real_part(vi)), apply(imag_part(vi))));
    }
    return out;
}

}  // namespace pogmdm::coil
