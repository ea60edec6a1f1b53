#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>

#include "drawq/errors.hpp"

namespace drawq {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace detail

/// Named substream of a master seed.
///
/// Distinct labels under the same master seed yield independent sequences;
/// the same (master_seed, label) pair reproduces the same draws on every
/// platform. All conversions from raw bits are spelled out here instead of
/// going through std distributions, whose output is implementation-defined.
class RngStream {
public:
    RngStream() : RngStream(0, "") {}

    RngStream(std::uint64_t master_seed, std::string label)
        : master_seed_(master_seed),
          label_(std::move(label)),
          gen_(detail::splitmix64(master_seed_ ^ detail::fnv1a64(label_))) {}

    /// Derived stream with label "<label>/<sub>", independent of how many
    /// draws this stream has produced.
    RngStream child(std::string_view sub) const {
        std::string l = label_;
        l += '/';
        l += sub;
        return RngStream(master_seed_, std::move(l));
    }

    RngStream child(std::string_view sub, std::uint64_t index) const {
        return child(std::string(sub) + std::to_string(index));
    }

    /// Uniform double in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(raw() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). Rejection sampling, unbiased.
    int uniform_int(int n) {
        if (n <= 0) throw contract_error("RngStream::uniform_int: n must be positive");
        const std::uint64_t un = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        std::uint64_t r;
        do {
            r = raw();
        } while (r >= limit);
        return static_cast<int>(r % un);
    }

    /// Standard normal via Box-Muller (two uniforms per draw, no cached spare).
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::uint64_t master_seed() const { return master_seed_; }
    const std::string& label() const { return label_; }
    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t raw() {
        ++counter_;
        return gen_();
    }

    std::uint64_t master_seed_;
    std::string label_;
    std::mt19937_64 gen_;
    std::uint64_t counter_ = 0;
};

/// Independent stream for (master_seed, label).
inline RngStream rng_substream(std::uint64_t master_seed, std::string label) {
    return RngStream(master_seed, std::move(label));
}

}  // namespace drawq
