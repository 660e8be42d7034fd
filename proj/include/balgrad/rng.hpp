#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "balgrad/errors.hpp"

namespace balgrad {

/// Deterministic random source. The engine (mt19937_64) is bit-exact per the
/// standard; the distributions are hand-rolled here because the standard
/// library's distribution objects are implementation-defined and would break
/// byte-identical reruns across toolchains.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via Box-Muller; caches the second deviate.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0, 1] so log(u1) is finite.
        const double u1 = 1.0 - uniform01();
        const double u2 = uniform01();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * 3.14159265358979323846 * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    /// Unbiased integer in [0, n) via rejection sampling.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw InvalidInput("Rng::below: n must be positive");
        const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::swap(v[i], v[below(i + 1)]);
        }
    }

    /// k distinct indices drawn from [0, n), returned sorted.
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k) {
        if (k > n) throw InvalidInput("Rng::sample_indices: k exceeds n");
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
        // Partial Fisher-Yates: after i swaps the prefix holds an unbiased sample.
        for (std::size_t i = 0; i < k; ++i) {
            std::swap(pool[i], pool[i + below(n - i)]);
        }
        pool.resize(k);
        std::sort(pool.begin(), pool.end());
        return pool;
    }

  private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace balgrad
