#ifndef DOWNSCALER_RNG_HPP
#define DOWNSCALER_RNG_HPP

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace downscaler {

// SplitMix64 finalizer; used to derive stream keys from (seed, path) tuples.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// PCG32 (XSH-RR). Small, fast, and reproducible across platforms.
class Pcg32 {
public:
    Pcg32() : Pcg32(0x853c49e6748fea9bULL, 0xda3e39cb94b95bdbULL) {}
    Pcg32(std::uint64_t seed, std::uint64_t seq) {
        state_ = 0u;
        inc_ = (seq << 1u) | 1u;
        next_u32();
        state_ += seed;
        next_u32();
    }

    std::uint32_t next_u32() {
        std::uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
    }

    std::uint64_t next_u64() {
        std::uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

private:
    std::uint64_t state_;
    std::uint64_t inc_;
};

// Deterministic random stream keyed by a seed and a derivation path.
// Substreams derived with distinct tags are statistically independent, so
// per-site / per-step work can run in any order without changing the result.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : RandomStream(seed, {}) {}

    RandomStream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
        key_ = mix64(seed ^ 0x5851f42d4c957f2dULL);
        for (std::uint64_t p : path) key_ = mix64(key_ ^ mix64(p));
        pcg_ = Pcg32(key_, mix64(key_ ^ 0x2545f4914f6cdd1dULL));
    }

    RandomStream substream(std::uint64_t tag) const {
        RandomStream s(0);
        s.key_ = mix64(key_ ^ mix64(tag));
        s.pcg_ = Pcg32(s.key_, mix64(s.key_ ^ 0x2545f4914f6cdd1dULL));
        s.has_cached_ = false;
        return s;
    }

    // Uniform double in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(pcg_.next_u64() >> 11) * 0x1.0p-53; }

    // Uniform double in (0, 1]; safe under log().
    double uniform_pos() { return (static_cast<double>(pcg_.next_u64() >> 11) + 1.0) * 0x1.0p-53; }

    std::uint32_t next_u32() { return pcg_.next_u32(); }

    // Uniform integer in [0, n).
    std::uint32_t below(std::uint32_t n) {
        // Unbiased via rejection of the wrap-around region.
        std::uint32_t threshold = (-n) % n;
        for (;;) {
            std::uint32_t r = pcg_.next_u32();
            if (r >= threshold) return r % n;
        }
    }

    // Standard normal, Box-Muller with pair caching.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform_pos();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(theta);
        has_cached_ = true;
        return r * std::cos(theta);
    }

    float normal_f() { return static_cast<float>(normal()); }

private:
    std::uint64_t key_ = 0;
    Pcg32 pcg_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

} // namespace downscaler

#endif
