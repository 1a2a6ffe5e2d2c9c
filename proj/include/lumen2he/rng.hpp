// Copyright (c) 2026 lumen2he contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace lumen2he {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t rotl64(std::uint64_t v, int k) {
    return (v << k) | (v >> (64 - k));
}

} // namespace detail

/// Deterministic xoshiro256++ stream with explicit, serializable state.
///
/// All randomness in the pipeline flows through this class so that runs are
/// reproducible bit-for-bit across invocations on the same build. Consumers
/// derive independent streams from one master seed with `stream(seed, label,
/// index)`; changing what one consumer draws never perturbs the others.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) {
        std::uint64_t x = seed;
        for (auto& w : state_) w = detail::splitmix64(x);
    }

    /// Derive the stream `label`/`index` (e.g. "augment", epoch 3) from a
    /// master seed. Same arguments always yield the same stream.
    static Rng stream(std::uint64_t master_seed, std::string_view label, std::uint64_t index = 0) {
        std::uint64_t x = master_seed;
        std::uint64_t a = detail::splitmix64(x);
        x ^= detail::fnv1a64(label);
        std::uint64_t b = detail::splitmix64(x);
        x ^= index * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL;
        std::uint64_t c = detail::splitmix64(x);
        return Rng(a ^ detail::rotl64(b, 17) ^ detail::rotl64(c, 41));
    }

    std::uint64_t next_u64() {
        std::uint64_t result = detail::rotl64(state_[0] + state_[3], 23) + state_[0];
        std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl64(state_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1), 53 mantissa bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, bound). Lemire's multiply-with-rejection; exact
    /// and platform-independent.
    std::uint64_t uniform_int(std::uint64_t bound) {
        if (bound <= 1) return 0;
        unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * bound;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < bound) {
            std::uint64_t threshold = (0 - bound) % bound;
            while (lo < threshold) {
                m = static_cast<unsigned __int128>(next_u64()) * bound;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Standard normal via Box-Muller. Always consumes exactly two uniform
    /// draws so stream positions stay branch-independent.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log1p(-u1));
        return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
    }

    /// In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    std::array<std::uint64_t, 4> state() const { return state_; }
    void set_state(const std::array<std::uint64_t, 4>& s) { state_ = s; }

private:
    std::array<std::uint64_t, 4> state_{};
};

} // namespace lumen2he
