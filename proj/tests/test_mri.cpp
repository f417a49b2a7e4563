// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pogmdm Authors

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "pogmdm/coil_prior.hpp"
#include "pogmdm/core/random.hpp"
#include "pogmdm/mri.hpp"

using namespace pogmdm;

namespace {

ComplexImage random_complex(Shape s, RandomStream& rng) {
    ComplexImage x(s);
    for (auto& v : x) v = Complex(rng.normal(), rng.normal());
    return x;
}

Sensitivities random_coils(Shape s, std::size_t c, RandomStream& rng) {
    Sensitivities out;
    for (std::size_t i = 0; i < c; ++i) out.push_back(random_complex(s, rng));
    return out;
}

SamplingMask random_mask(Shape s, RandomStream& rng) {
    SamplingMask m;
    m.bits = Image<std::uint8_t>(s, 0);
    for (auto& b : m.bits) b = rng.uniform() < 0.4 ? 1 : 0;
    m.bits[0] = 1;
    return m;
}

KSpaceData random_kspace(const SamplingMask& mask, std::size_t c, RandomStream& rng) {
    KSpaceData z;
    z.mask = mask;
    for (std::size_t i = 0; i < c; ++i) {
        std::vector<Complex> v(mask.sampled());
        for (auto& w : v) w = Complex(rng.normal(), rng.normal());
        z.coils.push_back(v);
    }
    return z;
}

// Dense A_x: rows are (coil, sampled frequency), columns are pixels.
Eigen::MatrixXcd dense_operator(const Sensitivities& s, const SamplingMask& mask) {
    const Shape sh = mask.shape();
    const auto idx = mask.indices();
    Eigen::MatrixXcd A(static_cast<Eigen::Index>(s.size() * idx.size()), static_cast<Eigen::Index>(sh.size()));
    const double scale = 1.0 / std::sqrt(static_cast<double>(sh.size()));
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const double u = static_cast<double>(idx[k] / sh.cols), v = static_cast<double>(idx[k] % sh.cols);
            for (std::size_t p = 0; p < sh.size(); ++p) {
                const double r = static_cast<double>(p / sh.cols), c = static_cast<double>(p % sh.cols);
                const double phase = -2.0 * std::numbers::pi * (u * r / sh.rows + v * c / sh.cols);
                A(static_cast<Eigen::Index>(i * idx.size() + k), static_cast<Eigen::Index>(p)) =
                    scale * std::polar(1.0, phase) * s[i][p];
            }
        }
    return A;
}

double inner(const KSpaceData& a, const KSpaceData& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.coils.size(); ++i)
        for (std::size_t j = 0; j < a.coils[i].size(); ++j) s += std::real(std::conj(a.coils[i][j]) * b.coils[i][j]);
    return s;
}

}  // namespace

TEST(MriOperator, MatchesDenseMatrix) {
    RandomStream rng(1);
    const Shape s{8, 8};
    const SamplingMask mask = random_mask(s, rng);
    const Sensitivities sens = random_coils(s, 2, rng);
    const ComplexImage x = random_complex(s, rng);
    const Eigen::MatrixXcd A = dense_operator(sens, mask);
    Eigen::VectorXcd xv(64);
    for (std::size_t p = 0; p < 64; ++p) xv(static_cast<Eigen::Index>(p)) = x[p];
    const Eigen::VectorXcd want = A * xv;
    const KSpaceData got = mri::forward(x, sens, mask);
    const std::size_t f = mask.sampled();
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t k = 0; k < f; ++k)
            EXPECT_LT(std::abs(got.coils[i][k] - want(static_cast<Eigen::Index>(i * f + k))), 1e-12);

    const KSpaceData w = random_kspace(mask, 2, rng);
    Eigen::VectorXcd wv(static_cast<Eigen::Index>(2 * f));
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t k = 0; k < f; ++k) wv(static_cast<Eigen::Index>(i * f + k)) = w.coils[i][k];
    const Eigen::VectorXcd back = A.adjoint() * wv;
    const ComplexImage adj = mri::adjoint_x(sens, w);
    for (std::size_t p = 0; p < 64; ++p) EXPECT_LT(std::abs(adj[p] - back(static_cast<Eigen::Index>(p))), 1e-12);
}

TEST(MriOperator, AdjointIdentity) {
    RandomStream rng(2);
    for (std::size_t c : {1u, 3u}) {
        for (Shape s : {Shape{16, 16}, Shape{12, 20}}) {
            const SamplingMask mask = random_mask(s, rng);
            const Sensitivities sens = random_coils(s, c, rng);
            const ComplexImage x = random_complex(s, rng);
            const KSpaceData w = random_kspace(mask, c, rng);
            const double lhs = inner(mri::forward(x, sens, mask), w);
            const double rhs = dot(x, mri::adjoint_x(sens, w));
            EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(lhs));
        }
    }
}

TEST(MriOperator, GradientsMatchFiniteDifferences) {
    RandomStream rng(3);
    const Shape s{8, 10};
    const SamplingMask mask = random_mask(s, rng);
    const Sensitivities sens = random_coils(s, 2, rng);
    const ComplexImage x = random_complex(s, rng);
    const KSpaceData z = random_kspace(mask, 2, rng);
    const ComplexImage gx = mri::grad_x_likelihood(x, sens, z);
    const Sensitivities gs = mri::grad_sigma_likelihood(x, sens, z);
    const double h = 1e-6;
    for (std::size_t p = 0; p < s.size(); p += 7) {
        for (Complex dir : {Complex(1, 0), Complex(0, 1)}) {
            ComplexImage a = x, b = x;
            a[p] += h * dir;
            b[p] -= h * dir;
            const double fd = (mri::data_misfit(a, sens, z) - mri::data_misfit(b, sens, z)) / (2 * h);
            const double an = dir.real() != 0 ? gx[p].real() : gx[p].imag();
            EXPECT_NEAR(an, fd, 1e-6 * std::max(1.0, std::abs(fd)));

            Sensitivities sa = sens, sb = sens;
            sa[1][p] += h * dir;
            sb[1][p] -= h * dir;
            const double fs = (mri::data_misfit(x, sa, z) - mri::data_misfit(x, sb, z)) / (2 * h);
            const double as = dir.real() != 0 ? gs[1][p].real() : gs[1][p].imag();
            EXPECT_NEAR(as, fs, 1e-6 * std::max(1.0, std::abs(fs)));
        }
    }
}

TEST(MriOperator, ConsistentDataHasZeroGradient) {
    RandomStream rng(4);
    const Shape s{16, 16};
    const SamplingMask mask = random_mask(s, rng);
    const Sensitivities sens = random_coils(s, 3, rng);
    const ComplexImage x = random_complex(s, rng);
    const KSpaceData z = mri::forward(x, sens, mask);
    EXPECT_LT(norm(mri::grad_x_likelihood(x, sens, z)), 1e-12);
    for (const auto& g : mri::grad_sigma_likelihood(x, sens, z)) EXPECT_LT(norm(g), 1e-12);
    EXPECT_LT(mri::data_misfit(x, sens, z), 1e-24);
}

TEST(MriOperator, SingleUnitCoilFullMaskGradient) {
    RandomStream rng(5);
    const Shape s{16, 12};
    const Sensitivities ones{ComplexImage(s, Complex(1.0))};
    const ComplexImage x = random_complex(s, rng);
    const KSpaceData z = random_kspace(SamplingMask::full(s), 1, rng);
    const ComplexImage g = mri::grad_x_likelihood(x, ones, z);
    const ComplexImage ref = fft::unitary_inverse(mri::scatter(z.mask, z.coils[0]));
    for (std::size_t p = 0; p < s.size(); ++p) EXPECT_LT(std::abs(g[p] - (x[p] - ref[p])), 1e-12);
}

TEST(MriOperator, RejectsMismatchedInputs) {
    const Shape s{8, 8};
    const ComplexImage x(s);
    EXPECT_THROW(mri::forward(x, {}, SamplingMask::full(s)), std::invalid_argument);
    EXPECT_THROW(mri::forward(x, {ComplexImage(Shape{8, 9})}, SamplingMask::full(s)), std::invalid_argument);
    KSpaceData z;
    z.mask = SamplingMask::full(s);
    z.coils = {std::vector<Complex>(10)};
    EXPECT_THROW(mri::adjoint_x({ComplexImage(s)}, z), std::invalid_argument);
}

TEST(Frequencies, SignedIndexRoundTrip) {
    for (std::size_t n : {7u, 8u})
        for (std::size_t k = 0; k < n; ++k) EXPECT_EQ(mri::frequency_index(mri::signed_frequency(k, n), n), k);
    EXPECT_EQ(mri::signed_frequency(4, 8), -4);
    EXPECT_EQ(mri::signed_frequency(3, 7), 3);
}

TEST(Masks, AccelerationOneSamplesEverything) {
    for (auto p : {MaskPattern::cartesian, MaskPattern::radial, MaskPattern::spiral, MaskPattern::gaussian2d}) {
        const SamplingMask m = mri::make_mask(p, {20, 24}, 1.0, 0.1, 3);
        EXPECT_EQ(m.sampled(), 480u);
    }
}

TEST(Masks, CartesianLineCount) {
    const SamplingMask m = mri::make_mask(MaskPattern::cartesian, {320, 320}, 4.0, 0.08, 7);
    const double frac = static_cast<double>(m.sampled()) / (320.0 * 320.0);
    EXPECT_GE(frac, 0.225);
    EXPECT_LE(frac, 0.275);
    // whole columns: every row has the same pattern
    for (std::size_t r = 1; r < 320; ++r)
        for (std::size_t c = 0; c < 320; ++c) ASSERT_EQ(m.bits(r, c), m.bits(0, c));
    // 8% of the columns around DC are always present
    for (long f = -12; f < 12; ++f) EXPECT_EQ(m.bits(0, mri::frequency_index(f, 320)), 1);
    const SamplingMask h = mri::make_mask(MaskPattern::cartesian_horizontal, {64, 64}, 4.0, 0.08, 7);
    for (std::size_t r = 0; r < 64; ++r)
        for (std::size_t c = 1; c < 64; ++c) ASSERT_EQ(h.bits(r, c), h.bits(r, 0));
}

TEST(Masks, DeterministicPerSeed) {
    for (auto p : {MaskPattern::cartesian, MaskPattern::radial, MaskPattern::spiral, MaskPattern::gaussian2d}) {
        const auto a = mri::make_mask(p, {64, 64}, 4.0, 0.08, 11);
        const auto b = mri::make_mask(p, {64, 64}, 4.0, 0.08, 11);
        EXPECT_TRUE(std::equal(a.bits.begin(), a.bits.end(), b.bits.begin())) << to_string(p);
    }
    const auto a = mri::make_mask(MaskPattern::cartesian, {64, 64}, 4.0, 0.08, 1);
    const auto b = mri::make_mask(MaskPattern::cartesian, {64, 64}, 4.0, 0.08, 2);
    EXPECT_FALSE(std::equal(a.bits.begin(), a.bits.end(), b.bits.begin()));
}

TEST(Masks, AchievedAccelerationWithinTenPercent) {
    for (auto p : {MaskPattern::cartesian, MaskPattern::cartesian_horizontal, MaskPattern::radial,
                   MaskPattern::spiral, MaskPattern::gaussian2d}) {
        for (double accel : {2.0, 4.0, 8.0}) {
            const auto m = mri::make_mask(p, {128, 128}, accel, 0.04, 5);
            EXPECT_NEAR(m.achieved_acceleration() / accel, 1.0, 0.1) << to_string(p) << " x" << accel;
            EXPECT_EQ(m.bits(0, 0), 1) << to_string(p);
        }
    }
}

TEST(Masks, InfeasibleRequestsThrow) {
    EXPECT_THROW(mri::make_mask(MaskPattern::cartesian, {64, 64}, 0.5, 0.08, 0), std::invalid_argument);
    EXPECT_THROW(mri::make_mask(MaskPattern::cartesian, {64, 64}, 8.0, 0.5, 0), std::invalid_argument);
    EXPECT_THROW(mri::make_mask(MaskPattern::radial, {8, 8}, 100.0, 0.0, 0), std::invalid_argument);
    EXPECT_THROW(mri::make_mask(MaskPattern::cartesian, {64, 64}, 4.0, 1.5, 0), std::invalid_argument);
    EXPECT_THROW(parse_mask_pattern("zigzag"), std::invalid_argument);
    EXPECT_EQ(parse_mask_pattern("spiral"), MaskPattern::spiral);
}

TEST(ZeroFilled, RssOfFullyReconstructedCoils) {
    const Shape s{32, 32};
    const ComplexImage x = mri::phantom(s, mri::PhantomKind::shepp_logan);
    const Sensitivities sens = mri::simulate_coils(s, 4, 9);
    const KSpaceData z = mri::forward(x, sens, SamplingMask::full(s));
    const auto zf = mri::zero_filled(z);
    ASSERT_EQ(zf.coil_images.size(), 4u);
    for (std::size_t p = 0; p < s.size(); ++p) {
        EXPECT_LT(std::abs(zf.coil_images[2][p] - sens[2][p] * x[p]), 1e-12);
        EXPECT_NEAR(zf.rss[p], std::abs(x[p]), 1e-12);  // sum |sigma|^2 = 1
    }
}

TEST(Noise, StatisticsAndDeterminism) {
    KSpaceData z;
    z.mask = SamplingMask::full({64, 64});
    z.coils.assign(2, std::vector<Complex>(4096));
    KSpaceData w = z;
    mri::add_noise(z, 0.5, 3);
    mri::add_noise(w, 0.5, 3);
    EXPECT_EQ(z.coils, w.coils);
    double s = 0.0;
    for (const auto& c : z.coils)
        for (auto v : c) s += std::norm(v);
    EXPECT_NEAR(s / (2.0 * 8192.0), 0.25, 0.01);
    EXPECT_EQ(z.noise_std, 0.5);
}

TEST(Coils, NormalizedAndSmooth) {
    const Shape s{64, 64};
    const Sensitivities sens = mri::simulate_coils(s, 4, 2);
    for (std::size_t p = 0; p < s.size(); ++p) {
        double t = 0.0;
        for (const auto& c : sens) t += std::norm(c[p]);
        EXPECT_NEAR(t, 1.0, 1e-12);
    }
    for (const auto& c : sens) {
        const double energy = coil::channel_energy(real_part(c)) + coil::channel_energy(imag_part(c));
        // Dirichlet differences include the border jump, so measure interior only
        double interior = 0.0;
        for (std::size_t r = 0; r + 1 < 64; ++r)
            for (std::size_t q = 0; q + 1 < 64; ++q)
                interior += std::norm(c(r + 1, q) - c(r, q)) + std::norm(c(r, q + 1) - c(r, q));
        EXPECT_LT(std::sqrt(interior) / norm(c), 0.2);
        EXPECT_GT(energy, 0.0);
    }
    const Sensitivities one = mri::simulate_coils(s, 1, 2);
    for (auto v : one[0]) EXPECT_NEAR(std::abs(v), 1.0, 1e-12);
    EXPECT_THROW(mri::simulate_coils(s, 0, 0), std::invalid_argument);
}

TEST(Phantom, SheppLoganRange) {
    const ComplexImage x = mri::phantom({64, 64}, mri::PhantomKind::shepp_logan);
    double lo = 1e9, hi = -1e9;
    for (auto v : x) {
        EXPECT_EQ(v.imag(), 0.0);
        lo = std::min(lo, v.real());
        hi = std::max(hi, v.real());
    }
    EXPECT_EQ(lo, 0.0);
    EXPECT_EQ(hi, 1.0);
    EXPECT_EQ(mri::parse_phantom_kind("shepp-logan"), mri::PhantomKind::shepp_logan);
    EXPECT_THROW(mri::parse_phantom_kind("cat"), std::invalid_argument);
}
