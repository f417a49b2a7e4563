// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pogmdm Authors

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <type_traits>
#include <string>
#include <vector>

namespace pogmdm {

using Complex = std::complex<double>;

struct Shape {
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t size() const { return rows * cols; }
    friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(Shape s) {
    return std::to_string(s.rows) + "x" + std::to_string(s.cols);
}

/// Dense row-major 2-D array. Used for real images, complex images, filter
/// responses and spectra alike.
template <typename T>
class Image {
public:
    using value_type = T;

    Image() = default;
    Image(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    explicit Image(Shape s, T fill = T{}) : Image(s.rows, s.cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    Shape shape() const { return {rows_, cols_}; }
    bool empty() const { return data_.empty(); }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }

    auto begin() { return data_.begin(); }
    auto end() { return data_.end(); }
    auto begin() const { return data_.begin(); }
    auto end() const { return data_.end(); }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    Image& operator+=(const Image& o) {
        check_same(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Image& operator-=(const Image& o) {
        check_same(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    template <typename S>
    Image& operator*=(S s) {
        for (auto& v : data_) v *= s;
        return *this;
    }

    friend bool operator==(const Image&, const Image&) = default;

private:
    void check_same(const Image& o) const {
        if (o.shape() != shape())
            throw std::invalid_argument("image shape mismatch: " + to_string(shape()) +
                                        " vs " + to_string(o.shape()));
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using RealImage = Image<double>;
using ComplexImage = Image<Complex>;
/// Coil sensitivity maps sigma_1..sigma_c, one complex image per coil.
using Sensitivities = std::vector<ComplexImage>;

template <typename T>
Image<T> operator+(Image<T> a, const Image<T>& b) { return a += b; }
template <typename T>
Image<T> operator-(Image<T> a, const Image<T>& b) { return a -= b; }
template <typename T, typename S>
Image<T> operator*(S s, Image<T> a) { return a *= s; }

inline void require_shape(Shape got, Shape want, const char* what) {
    if (got != want)
        throw std::invalid_argument(std::string(what) + ": shape mismatch, expected " +
                                    to_string(want) + ", got " + to_string(got));
}

inline RealImage real_part(const ComplexImage& z) {
    RealImage out(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i].real();
    return out;
}

inline RealImage imag_part(const ComplexImage& z) {
    RealImage out(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i].imag();
    return out;
}

inline RealImage magnitude(const ComplexImage& z) {
    RealImage out(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = std::abs(z[i]);
    return out;
}

inline ComplexImage to_complex(const RealImage& re) {
    ComplexImage out(re.shape());
    for (std::size_t i = 0; i < re.size(); ++i) out[i] = re[i];
    return out;
}

inline ComplexImage combine(const RealImage& re, const RealImage& im) {
    require_shape(im.shape(), re.shape(), "combine");
    ComplexImage out(re.shape());
    for (std::size_t i = 0; i < re.size(); ++i) out[i] = Complex(re[i], im[i]);
    return out;
}

inline double squared_norm(const RealImage& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
}

inline double squared_norm(const ComplexImage& x) {
    double s = 0.0;
    for (const Complex& v : x) s += std::norm(v);
    return s;
}

template <typename T>
double norm(const Image<T>& x) { return std::sqrt(squared_norm(x)); }

inline double dot(const RealImage& a, const RealImage& b) {
    require_shape(b.shape(), a.shape(), "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Real inner product Re<a, b> = sum Re(conj(a) b).
inline double dot(const ComplexImage& a, const ComplexImage& b) {
    require_shape(b.shape(), a.shape(), "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (std::conj(a[i]) * b[i]).real();
    return s;
}

inline double max_value(const RealImage& x) {
    if (x.empty()) throw std::invalid_argument("max_value: empty image");
    return *std::max_element(x.begin(), x.end());
}

template <typename T>
bool all_finite(const Image<T>& x) {
    for (const auto& v : x) {
        if constexpr (std::is_same_v<T, Complex>) {
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
        } else {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

}  // namespace pogmdm
