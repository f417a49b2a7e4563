// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pogmdm Authors

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "pogmdm/core/image.hpp"

namespace pogmdm {

inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Counter-based random stream. The n-th draw of stream (seed, id) is a pure
/// function of (seed, id, n), so chains can be replayed or run on any thread
/// without changing their values. Normals use Box-Muller with libm only, which
/// keeps results identical across standard library implementations.
class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::uint64_t id = 0)
        : key_(mix64(seed ^ mix64(id ^ 0xA0761D6478BD642FULL))) {}

    /// Independent stream keyed by this stream's key and a tag.
    RandomStream substream(std::uint64_t tag) const {
        RandomStream s(0);
        s.key_ = mix64(key_ ^ mix64(tag + 0xE7037ED1A0B428DBULL));
        return s;
    }

    std::uint64_t next_u64() { return mix64(key_ + (counter_++) * 0x9E3779B97F4A7C15ULL); }

    /// Uniform in the open interval (0, 1).
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    RealImage normal_image(Shape s) {
        RealImage out(s);
        for (auto& v : out) v = normal();
        return out;
    }

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace pogmdm
