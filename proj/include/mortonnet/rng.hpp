#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace mortonnet {

/// Deterministic 64-bit PRNG (splitmix64). The standard-library engines are
/// portable but the distributions are not, and several pipeline contracts
/// require bit-identical output across platforms and thread counts, so all
/// randomness in the project goes through this generator.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1), 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Unbiased uniform integer in [0, n). n must be > 0.
    std::uint64_t next_below(std::uint64_t n) {
        // rejection sampling on the top of the range
        std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    /// Standard normal via Box-Muller. Two uniforms per draw; no caching so
    /// the draw count per call is fixed.
    double next_gaussian() {
        double u1 = 1.0 - next_double();  // (0, 1]
        double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    /// Partial Fisher-Yates: first `take` entries of `items` become a uniform
    /// sample without replacement.
    template <class T>
    void partial_shuffle(std::vector<T>& items, std::size_t take) {
        if (items.empty()) return;
        if (take > items.size()) take = items.size();
        for (std::size_t i = 0; i < take && i + 1 < items.size(); ++i) {
            std::size_t j = i + static_cast<std::size_t>(next_below(items.size() - i));
            std::swap(items[i], items[j]);
        }
    }

    template <class T>
    void shuffle(std::vector<T>& items) {
        partial_shuffle(items, items.size());
    }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

    /// Stream derivation: a stable hash of (seed, a, b). Used to give every
    /// (point, sequence slot) its own RNG stream so generation order and
    /// parallel scheduling never change outputs.
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
        Rng h(seed ^ 0x6a09e667f3bcc909ULL);
        std::uint64_t m = h.next_u64();
        m ^= a + 0x9e3779b97f4a7c15ULL + (m << 6) + (m >> 2);
        Rng h2(m);
        m = h2.next_u64();
        m ^= b + 0x9e3779b97f4a7c15ULL + (m << 6) + (m >> 2);
        Rng h3(m);
        return h3.next_u64();
    }

private:
    std::uint64_t state_;
};

}  // namespace mortonnet
