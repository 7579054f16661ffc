#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace tdsurv {

// Seeded random stream with explicit transforms so that every draw is a pure
// function of the mt19937_64 output, bit-identical across platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform on [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // uniform on (0, 1), never returns an endpoint
    double uniform_open() {
        return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; two uniforms per draw, no cached spare
    double normal() {
        const double u1 = uniform_open();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    double exponential(double mean) { return -mean * std::log(uniform_open()); }

    bool bernoulli(double p) { return uniform() < p; }

    // unbiased integer in [0, n) by rejection
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
        for (;;) {
            const std::uint64_t x = gen_();
            if (x >= threshold) return x % n;
        }
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace tdsurv
