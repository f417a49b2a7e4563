// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pogmdm Authors

#pragma once

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pogmdm/core/image.hpp"
#include "pogmdm/core/random.hpp"
#include "pogmdm/mri.hpp"
#include "pogmdm/prior.hpp"
#include "pogmdm/sampler.hpp"

namespace pogmdm::io {

class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

using Bytes = std::vector<std::uint8_t>;

/// Little-endian encoder, independent of host byte order.
class ByteWriter {
public:
    void magic(std::string_view m) { bytes_.insert(bytes_.end(), m.begin(), m.end()); }
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void f64s(std::span<const double> v) {
        for (double d : v) f64(d);
    }
    void raw(std::span<const std::uint8_t> b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }
    Bytes take() { return std::move(bytes_); }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    Bytes bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> b) : bytes_(b) {}

    void magic(std::string_view m) {
        need(m.size());
        if (std::memcmp(bytes_.data() + pos_, m.data(), m.size()) != 0)
            throw FormatError("bad magic, expected '" + std::string(m) + "'", pos_);
        pos_ += m.size();
    }
    void version(std::uint32_t expected) {
        const std::size_t at = pos_;
        const std::uint32_t v = u32();
        if (v != expected)
            throw FormatError("unsupported version " + std::to_string(v) + " (expected " +
                                  std::to_string(expected) + ")", at);
    }
    std::uint8_t u8() {
        need(1);
        return bytes_[pos_++];
    }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    void f64s(std::span<double> out) {
        need(out.size() * 8);
        for (double& d : out) d = f64();
    }
    std::span<const std::uint8_t> raw(std::size_t n) {
        need(n);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t offset() const { return pos_; }
    void finish() const {
        if (pos_ != bytes_.size()) throw FormatError("trailing bytes", pos_);
    }
    /// Bounds a count read from the file by the bytes that remain.
    std::size_t count(std::uint64_t n, std::size_t unit, const char* what) const {
        const std::size_t remaining = bytes_.size() - pos_;
        if (unit != 0 && n > remaining / unit)
            throw FormatError(std::string("truncated file: ") + what + " count " + std::to_string(n) +
                                  " exceeds remaining data", pos_);
        return static_cast<std::size_t>(n);
    }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n)
            throw FormatError("truncated file: need " + std::to_string(n) + " bytes, have " +
                                  std::to_string(bytes_.size() - pos_), pos_);
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

inline Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------- images

inline constexpr std::uint32_t kImageVersion = 1;
enum class ImageKind : std::uint32_t { real = 1, complex = 2 };

namespace detail {

inline void put_shape(ByteWriter& w, Shape s) {
    w.u64(s.rows);
    w.u64(s.cols);
}

inline Shape get_shape(ByteReader& r, std::size_t unit) {
    const std::size_t at = r.offset();
    const std::uint64_t rows = r.u64(), cols = r.u64();
    if (rows == 0 || cols == 0) throw FormatError("empty image shape", at);
    if (rows > (std::uint64_t{1} << 20) || cols > (std::uint64_t{1} << 20))
        throw FormatError("image shape too large", at);
    r.count(rows * cols, unit, "pixel");
    return {static_cast<std::size_t>(rows), static_cast<std::size_t>(cols)};
}

inline void put_real(ByteWriter& w, const RealImage& x) { w.f64s(x.values()); }
inline void put_complex(ByteWriter& w, const ComplexImage& x) {
    for (const Complex& v : x) {
        w.f64(v.real());
        w.f64(v.imag());
    }
}
inline RealImage get_real(ByteReader& r, Shape s) {
    RealImage x(s);
    r.f64s(x.values());
    return x;
}
inline ComplexImage get_complex(ByteReader& r, Shape s) {
    ComplexImage x(s);
    for (Complex& v : x) {
        const double re = r.f64();
        v = Complex(re, r.f64());
    }
    return x;
}

}  // namespace detail

/// IMGC: magic, version, kind, rows, cols, float64 pixels (complex interleaved).
inline Bytes encode_image(const RealImage& x) {
    ByteWriter w;
    w.magic("IMGC");
    w.u32(kImageVersion);
    w.u32(static_cast<std::uint32_t>(ImageKind::real));
    detail::put_shape(w, x.shape());
    detail::put_real(w, x);
    return w.take();
}

inline Bytes encode_image(const ComplexImage& x) {
    ByteWriter w;
    w.magic("IMGC");
    w.u32(kImageVersion);
    w.u32(static_cast<std::uint32_t>(ImageKind::complex));
    detail::put_shape(w, x.shape());
    detail::put_complex(w, x);
    return w.take();
}

/// Decodes either kind as complex (real images get zero imaginary part).
inline ComplexImage decode_complex_image(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.magic("IMGC");
    r.version(kImageVersion);
    const std::size_t at = r.offset();
    const std::uint32_t kind = r.u32();
    ComplexImage out;
    if (kind == static_cast<std::uint32_t>(ImageKind::real)) {
        const Shape s = detail::get_shape(r, 8);
        out = to_complex(detail::get_real(r, s));
    } else if (kind == static_cast<std::uint32_t>(ImageKind::complex)) {
        const Shape s = detail::get_shape(r, 16);
        out = detail::get_complex(r, s);
    } else {
        throw FormatError("unknown image kind " + std::to_string(kind), at);
    }
    r.finish();
    return out;
}

/// Real images as stored; complex images are reduced to their magnitude.
inline RealImage decode_real_image(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.magic("IMGC");
    r.version(kImageVersion);
    const std::size_t at = r.offset();
    const std::uint32_t kind = r.u32();
    if (kind == static_cast<std::uint32_t>(ImageKind::real)) {
        const Shape s = detail::get_shape(r, 8);
        RealImage out = detail::get_real(r, s);
        r.finish();
        return out;
    }
    if (kind == static_cast<std::uint32_t>(ImageKind::complex)) return magnitude(decode_complex_image(bytes));
    throw FormatError("unknown image kind " + std::to_string(kind), at);
}

template <typename T>
void write_image(const std::filesystem::path& path, const Image<T>& x) {
    write_file(path, encode_image(x));
}
inline RealImage read_real_image(const std::filesystem::path& path) { return decode_real_image(read_file(path)); }
inline ComplexImage read_complex_image(const std::filesystem::path& path) {
    return decode_complex_image(read_file(path));
}

// ---------------------------------------------------------------- model

inline constexpr std::uint32_t kModelVersion = 1;

/// PGDM: shape-independent parameters only.
inline Bytes encode_model(const ModelParams& p) {
    p.validate();
    ByteWriter w;
    w.magic("PGDM");
    w.u32(kModelVersion);
    w.u32(static_cast<std::uint32_t>(p.shearlet.lowpass.size()));
    w.f64s(p.shearlet.lowpass);
    w.u32(static_cast<std::uint32_t>(kGeneratorSize));
    w.f64s(p.shearlet.generator);
    w.u32(static_cast<std::uint32_t>(p.shearlet.gamma.size()));
    w.f64s(p.shearlet.gamma);
    w.u32(static_cast<std::uint32_t>(p.grid.count));
    w.f64(p.grid.lo);
    w.f64(p.grid.hi);
    w.f64(p.base_std);
    w.u32(static_cast<std::uint32_t>(free_weight_count(p.grid.count)));
    for (const auto& f : p.free_weights) w.f64s(f);
    return w.take();
}

inline ModelParams decode_model(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.magic("PGDM");
    r.version(kModelVersion);
    auto expect = [&](std::uint64_t want, const char* what) {
        const std::size_t at = r.offset();
        const std::uint32_t got = r.u32();
        if (got != want)
            throw FormatError(std::string("unexpected ") + what + " " + std::to_string(got), at);
    };
    ModelParams p;
    p.shearlet = ShearletParams::zeros();
    expect(kLowpassTaps, "low-pass tap count");
    r.f64s(p.shearlet.lowpass);
    expect(kGeneratorSize, "generator size");
    r.f64s(p.shearlet.generator);
    expect(kFilterCount, "filter count");
    r.f64s(p.shearlet.gamma);
    std::size_t at = r.offset();
    p.grid.count = r.u32();
    if (p.grid.count < 2 || p.grid.count > kMaxComponents)
        throw FormatError("component count out of range", at);
    p.grid.lo = r.f64();
    p.grid.hi = r.f64();
    p.base_std = r.f64();
    expect(free_weight_count(p.grid.count), "free weight count");
    p.free_weights.assign(kFilterCount, std::vector<double>(free_weight_count(p.grid.count)));
    for (auto& f : p.free_weights) r.f64s(f);
    r.finish();
    at = r.offset();
    try {
        p.validate();
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("invalid model: ") + e.what(), at);
    }
    return p;
}

inline void write_model(const std::filesystem::path& path, const ModelParams& p) { write_file(path, encode_model(p)); }
inline ModelParams read_model(const std::filesystem::path& path) { return decode_model(read_file(path)); }

// ---------------------------------------------------------------- k-space

inline constexpr std::uint32_t kKspaceVersion = 1;

/// KSPC: magic, version, n, m, c, f, packed mask bits (row-major, LSB
/// first), then per coil f interleaved complex64 samples.
inline Bytes encode_kspace(const KSpaceData& z) {
    const Shape s = z.shape();
    const std::size_t f = z.mask.sampled();
    ByteWriter w;
    w.magic("KSPC");
    w.u32(kKspaceVersion);
    w.u32(static_cast<std::uint32_t>(s.rows));
    w.u32(static_cast<std::uint32_t>(s.cols));
    w.u32(static_cast<std::uint32_t>(z.coils.size()));
    w.u64(f);
    std::vector<std::uint8_t> packed((s.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < s.size(); ++i)
        if (z.mask.bits[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    w.raw(packed);
    for (const auto& coil : z.coils) {
        if (coil.size() != f) throw std::invalid_argument("encode_kspace: coil sample count does not match mask");
        for (const Complex& v : coil) {
            w.f32(static_cast<float>(v.real()));
            w.f32(static_cast<float>(v.imag()));
        }
    }
    return w.take();
}

inline KSpaceData decode_kspace(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.magic("KSPC");
    r.version(kKspaceVersion);
    std::size_t at = r.offset();
    const std::uint32_t n = r.u32(), m = r.u32(), c = r.u32();
    if (n == 0 || m == 0 || c == 0) throw FormatError("empty k-space dimensions", at);
    at = r.offset();
    const std::uint64_t f = r.u64();
    if (f > static_cast<std::uint64_t>(n) * m) throw FormatError("sample count exceeds grid size", at);
    KSpaceData z;
    z.mask.bits = Image<std::uint8_t>(Shape{n, m}, 0);
    const std::size_t total = static_cast<std::size_t>(n) * m;
    at = r.offset();
    const auto packed = r.raw((total + 7) / 8);
    for (std::size_t i = 0; i < total; ++i) z.mask.bits[i] = (packed[i / 8] >> (i % 8)) & 1u;
    if (z.mask.sampled() != f) throw FormatError("mask bit count does not match sample count", at);
    z.mask.acceleration = f > 0 ? static_cast<double>(total) / static_cast<double>(f) : 0.0;
    r.count(static_cast<std::uint64_t>(c) * f, 8, "sample");
    z.coils.assign(c, std::vector<Complex>(f));
    for (auto& coil : z.coils)
        for (Complex& v : coil) {
            const float re = r.f32();
            v = Complex(re, r.f32());
        }
    r.finish();
    return z;
}

inline void write_kspace(const std::filesystem::path& path, const KSpaceData& z) { write_file(path, encode_kspace(z)); }
inline KSpaceData read_kspace(const std::filesystem::path& path) { return decode_kspace(read_file(path)); }

// ---------------------------------------------------------------- reconstruction

inline constexpr std::uint32_t kReconVersion = 1;

/// RCON: magic, version, n, m, c, has_map, then mmse, variance, map (if
/// present) and sensitivities as float64.
inline Bytes encode_recon(const ReconResult& res) {
    const Shape s = res.mmse.shape();
    ByteWriter w;
    w.magic("RCON");
    w.u32(kReconVersion);
    w.u64(s.rows);
    w.u64(s.cols);
    w.u32(static_cast<std::uint32_t>(res.sensitivities.size()));
    w.u8(res.map_image.empty() ? 0 : 1);
    detail::put_complex(w, res.mmse);
    require_shape(res.variance.shape(), s, "encode_recon");
    detail::put_real(w, res.variance);
    if (!res.map_image.empty()) {
        require_shape(res.map_image.shape(), s, "encode_recon");
        detail::put_complex(w, res.map_image);
    }
    for (const auto& si : res.sensitivities) {
        require_shape(si.shape(), s, "encode_recon");
        detail::put_complex(w, si);
    }
    return w.take();
}

inline ReconResult decode_recon(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.magic("RCON");
    r.version(kReconVersion);
    const Shape s = detail::get_shape(r, 24);
    const std::size_t at = r.offset();
    const std::uint32_t c = r.u32();
    const std::uint8_t has_map = r.u8();
    if (has_map > 1) throw FormatError("bad map flag", at + 4);
    r.count(c, s.size() * 16, "coil");
    ReconResult res;
    res.mmse = detail::get_complex(r, s);
    res.variance = detail::get_real(r, s);
    if (has_map) res.map_image = detail::get_complex(r, s);
    for (std::uint32_t i = 0; i < c; ++i) res.sensitivities.push_back(detail::get_complex(r, s));
    r.finish();
    return res;
}

inline void write_recon(const std::filesystem::path& path, const ReconResult& res) {
    write_file(path, encode_recon(res));
}
inline ReconResult read_recon(const std::filesystem::path& path) { return decode_recon(read_file(path)); }

// ---------------------------------------------------------------- PNG

namespace detail {

inline void png_chunk(Bytes& out, const char* type, std::span<const std::uint8_t> data) {
    const auto len = static_cast<std::uint32_t>(data.size());
    for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
    const std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const uLong crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
    for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(crc >> (8 * i)));
}

}  // namespace detail

/// 8-bit grayscale PNG of already quantized pixels.
inline Bytes encode_png(const Image<std::uint8_t>& gray) {
    const std::uint32_t w = static_cast<std::uint32_t>(gray.cols()), h = static_cast<std::uint32_t>(gray.rows());
    if (w == 0 || h == 0) throw std::invalid_argument("encode_png: empty image");
    Bytes out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    std::array<std::uint8_t, 13> ihdr{};
    for (int i = 0; i < 4; ++i) {
        ihdr[i] = static_cast<std::uint8_t>(w >> (24 - 8 * i));
        ihdr[4 + i] = static_cast<std::uint8_t>(h >> (24 - 8 * i));
    }
    ihdr[8] = 8;  // bit depth
    ihdr[9] = 0;  // grayscale
    detail::png_chunk(out, "IHDR", ihdr);
    Bytes raw;
    raw.reserve(static_cast<std::size_t>(h) * (w + 1));
    for (std::size_t r = 0; r < h; ++r) {
        raw.push_back(0);  // filter: none
        for (std::size_t c = 0; c < w; ++c) raw.push_back(gray(r, c));
    }
    uLongf size = compressBound(static_cast<uLong>(raw.size()));
    Bytes packed(size);
    if (compress2(packed.data(), &size, raw.data(), static_cast<uLong>(raw.size()), Z_BEST_COMPRESSION) != Z_OK)
        throw std::runtime_error("encode_png: zlib compression failed");
    packed.resize(size);
    detail::png_chunk(out, "IDAT", packed);
    detail::png_chunk(out, "IEND", {});
    return out;
}

/// Linear map of [0, max] to [0, 255]; values outside are clipped. A
/// non-positive max yields a black image.
inline Image<std::uint8_t> quantize(const RealImage& x, double max = -1.0) {
    if (max < 0.0) max = x.empty() ? 0.0 : max_value(x);
    Image<std::uint8_t> g(x.shape(), 0);
    if (!(max > 0.0)) return g;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = std::clamp(x[i] / max, 0.0, 1.0);
        g[i] = static_cast<std::uint8_t>(std::lround(255.0 * (std::isfinite(v) ? v : 0.0)));
    }
    return g;
}

inline void write_png(const std::filesystem::path& path, const RealImage& x, double max = -1.0) {
    write_file(path, encode_png(quantize(x, max)));
}

inline void write_png(const std::filesystem::path& path, const SamplingMask& mask) {
    Image<std::uint8_t> g(mask.shape(), 0);
    // display with DC in the centre
    const Shape s = mask.shape();
    for (std::size_t r = 0; r < s.rows; ++r)
        for (std::size_t c = 0; c < s.cols; ++c)
            g((r + s.rows / 2) % s.rows, (c + s.cols / 2) % s.cols) = mask.bits(r, c) ? 255 : 0;
    write_file(path, encode_png(g));
}

// ---------------------------------------------------------------- datasets

enum class DatasetKind { ellipses, textured };

inline DatasetKind parse_dataset_kind(const std::string& s) {
    if (s == "ellipses") return DatasetKind::ellipses;
    if (s == "textured") return DatasetKind::textured;
    throw std::invalid_argument("unknown dataset kind '" + s + "'");
}

/// Synthetic magnitude-like training images, each scaled to max 1. Image i
/// depends only on (seed, i).
inline std::vector<RealImage> make_dataset(DatasetKind kind, std::size_t count, Shape shape, std::uint64_t seed) {
    if (shape.size() == 0) throw std::invalid_argument("make_dataset: empty shape");
    std::vector<RealImage> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        RandomStream rng(seed, 0x64617461ULL + i);
        RealImage img = magnitude(mri::phantom(shape, mri::PhantomKind::ellipses, rng.next_u64()));
        if (kind == DatasetKind::textured) {
            // smooth multiplicative shading from a few random low-frequency cosines
            const double n = static_cast<double>(shape.rows), m = static_cast<double>(shape.cols);
            RealImage shade(shape, 1.0);
            for (int t = 0; t < 4; ++t) {
                const double fr = rng.uniform(0.0, 3.0) / n, fc = rng.uniform(0.0, 3.0) / m;
                const double ph = rng.uniform(0.0, 2.0 * std::numbers::pi), amp = rng.uniform(0.0, 0.15);
                for (std::size_t r = 0; r < shape.rows; ++r)
                    for (std::size_t c = 0; c < shape.cols; ++c)
                        shade(r, c) += amp * std::cos(2.0 * std::numbers::pi *
                                                          (fr * static_cast<double>(r) + fc * static_cast<double>(c)) +
                                                      ph);
            }
            for (std::size_t p = 0; p < img.size(); ++p) img[p] = std::max(0.0, img[p] * shade[p]);
        }
        const double peak = max_value(img);
        if (peak > 0.0)
            for (double& v : img) v /= peak;
        out.push_back(std::move(img));
    }
    return out;
}

inline std::filesystem::path dataset_file(const std::filesystem::path& dir, std::size_t i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%05zu.bin", i);
    return dir / name;
}

inline void write_dataset(const std::filesystem::path& dir, const std::vector<RealImage>& images) {
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < images.size(); ++i) write_image(dataset_file(dir, i), images[i]);
}

/// All image containers (*.bin) in a directory, in file name order.
inline std::vector<RealImage> read_dataset(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".bin") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<RealImage> out;
    out.reserve(files.size());
    for (const auto& f : files) out.push_back(read_real_image(f));
    return out;
}

}  // namespace pogmdm::io
