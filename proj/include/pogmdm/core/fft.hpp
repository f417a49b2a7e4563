// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pogmdm Authors

#pragma once

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

#include "pogmdm/core/image.hpp"

namespace pogmdm::fft {

enum class Kind { forward, backward, dst1 };

namespace detail {

// FFTW planning is not thread-safe; execution with the new-array interface is.
// Plans are made with FFTW_UNALIGNED so any std::vector storage can be used.
class PlanCache {
public:
    static PlanCache& instance() {
        static PlanCache cache;
        return cache;
    }

    fftw_plan get(Kind kind, std::size_t rows, std::size_t cols) {
        std::lock_guard lock(mutex_);
        const auto key = std::make_tuple(static_cast<int>(kind), rows, cols);
        if (auto it = plans_.find(key); it != plans_.end()) return it->second;
        const int n = static_cast<int>(rows);
        const int m = static_cast<int>(cols);
        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        fftw_plan plan = nullptr;
        if (kind == Kind::dst1) {
            auto* in = fftw_alloc_real(rows * cols);
            auto* out = fftw_alloc_real(rows * cols);
            plan = fftw_plan_r2r_2d(n, m, in, out, FFTW_RODFT00, FFTW_RODFT00, flags);
            fftw_free(in);
            fftw_free(out);
        } else {
            auto* in = fftw_alloc_complex(rows * cols);
            auto* out = fftw_alloc_complex(rows * cols);
            const int sign = kind == Kind::forward ? FFTW_FORWARD : FFTW_BACKWARD;
            plan = fftw_plan_dft_2d(n, m, in, out, sign, flags);
            fftw_free(in);
            fftw_free(out);
        }
        if (plan == nullptr) throw std::runtime_error("fftw planning failed");
        plans_.emplace(key, plan);
        return plan;
    }

    ~PlanCache() {
        for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
    }

private:
    PlanCache() = default;
    std::mutex mutex_;
    std::map<std::tuple<int, std::size_t, std::size_t>, fftw_plan> plans_;
};

inline fftw_complex* as_fftw(Complex* p) { return reinterpret_cast<fftw_complex*>(p); }
inline fftw_complex* as_fftw(const Complex* p) {
    return reinterpret_cast<fftw_complex*>(const_cast<Complex*>(p));
}

inline ComplexImage run(Kind kind, const ComplexImage& in) {
    ComplexImage out(in.shape());
    if (in.empty()) return out;
    fftw_plan plan = PlanCache::instance().get(kind, in.rows(), in.cols());
    fftw_execute_dft(plan, as_fftw(in.data()), as_fftw(out.data()));
    return out;
}

}  // namespace detail

/// Unnormalized forward DFT, exp(-i w x) kernel.
inline ComplexImage forward(const ComplexImage& x) { return detail::run(Kind::forward, x); }
inline ComplexImage forward(const RealImage& x) { return forward(to_complex(x)); }

/// Unnormalized backward DFT; backward(forward(x)) == rows*cols*x.
inline ComplexImage backward(const ComplexImage& x) { return detail::run(Kind::backward, x); }

/// Normalized inverse DFT.
inline ComplexImage inverse(const ComplexImage& x) {
    ComplexImage out = backward(x);
    out *= 1.0 / static_cast<double>(x.size());
    return out;
}

/// Orthonormal (unitary) 2-D DFT and its inverse.
inline ComplexImage unitary_forward(const ComplexImage& x) {
    ComplexImage out = forward(x);
    out *= 1.0 / std::sqrt(static_cast<double>(x.size()));
    return out;
}
inline ComplexImage unitary_inverse(const ComplexImage& x) {
    ComplexImage out = backward(x);
    out *= 1.0 / std::sqrt(static_cast<double>(x.size()));
    return out;
}

/// Orthonormal 2-D DST-I. Symmetric and involutory: dst1(dst1(x)) == x.
inline RealImage dst1(const RealImage& x) {
    RealImage out(x.shape());
    if (x.empty()) return out;
    fftw_plan plan = detail::PlanCache::instance().get(Kind::dst1, x.rows(), x.cols());
    fftw_execute_r2r(plan, const_cast<double*>(x.data()), out.data());
    const double scale = 1.0 / std::sqrt(4.0 * static_cast<double>(x.rows() + 1) *
                                         static_cast<double>(x.cols() + 1));
    out *= scale;
    return out;
}

/// Spectrum of the reflected signal: Z(-w).
inline Complex mirrored(const ComplexImage& z, std::size_t r, std::size_t c) {
    const std::size_t rr = r == 0 ? 0 : z.rows() - r;
    const std::size_t cc = c == 0 ? 0 : z.cols() - c;
    return z(rr, cc);
}

/// Given Z = DFT(a + i b) for real a, b, recover DFT(a) and DFT(b).
inline std::pair<ComplexImage, ComplexImage> split_real_pair(const ComplexImage& z) {
    ComplexImage a(z.shape()), b(z.shape());
    const Complex half_i(0.0, 0.5);
    for (std::size_t r = 0; r < z.rows(); ++r) {
        for (std::size_t c = 0; c < z.cols(); ++c) {
            const Complex zz = z(r, c);
            const Complex zm = std::conj(mirrored(z, r, c));
            a(r, c) = 0.5 * (zz + zm);
            b(r, c) = -half_i * (zz - zm);
        }
    }
    return {std::move(a), std::move(b)};
}

}  // namespace pogmdm::fft
