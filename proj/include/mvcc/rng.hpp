#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace mvcc {

// Deterministic RNG with hand-rolled distributions. std::mt19937_64 output is
// pinned by the standard; the distribution functions below are pinned by this
// file, so every stream is reproducible bit-for-bit across platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(splitmix(seed)) {}

    // Named substream: master seed -> independent child stream. Adding a new
    // consumer of one stream cannot perturb the others.
    Rng(std::uint64_t seed, std::string_view stream) {
        std::uint64_t h = 0x9e3779b97f4a7c15ull ^ seed;
        for (char ch : stream) {
            h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(ch));
            h *= 0x100000001b3ull;
        }
        state_ = splitmix(h);
    }

    std::uint64_t next_u64() {
        // xorshift* with the standard multiplier finisher.
        std::uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * 0x2545f4914f6cdd1dull;
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), n >= 1.
    std::uint64_t below(std::uint64_t n) {
        // Rejection sampling keeps the draw unbiased.
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % n;
    }

    int range(int lo, int hi) {  // inclusive ends
        return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    bool coin(double p = 0.5) { return uniform() < p; }

    double gaussian(double mean = 0.0, double stddev = 1.0) {
        // Box-Muller, both variates consumed in order (no cached spare, so the
        // stream position is a pure function of call count).
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

private:
    std::uint64_t state_;
};

}  // namespace mvcc
