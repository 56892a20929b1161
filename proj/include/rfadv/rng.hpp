#pragma once

#include <cmath>
#include <cstdint>
#include <complex>
#include <random>

namespace rfadv {

// Deterministic seeded RNG. Every consumer derives an independent stream from
// (master seed, salts...) so results do not depend on evaluation order.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(mix(seed)) {}

    // Independent substream for (seed, a, b, c): mixes all salts through
    // splitmix64 so neighbouring indices land far apart.
    static Rng stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
        std::uint64_t s = mix(seed);
        s = mix(s ^ (0x9e3779b97f4a7c15ULL + a));
        s = mix(s ^ (0xbf58476d1ce4e5b9ULL + b));
        s = mix(s ^ (0x94d049bb133111ebULL + c));
        return Rng(s);
    }

    std::uint64_t bits() { return eng_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    // Uniform in (0, 1] — safe as a log() argument.
    double uniform_pos() { return 1.0 - uniform(); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Rejection sampling keeps the draw exactly uniform.
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do {
            v = eng_();
        } while (v >= limit);
        return v % n;
    }

    // Standard normal via Box-Muller (one draw per two uniforms; stateless).
    double gaussian() {
        double u1 = uniform_pos();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

    // Circularly-symmetric complex normal with total variance `var`
    // (var/2 per real component).
    std::complex<double> complex_gaussian(double var) {
        double s = std::sqrt(var / 2.0);
        return {gaussian(0.0, s), gaussian(0.0, s)};
    }

    // Rayleigh-distributed magnitude with scale sigma.
    double rayleigh(double sigma) { return sigma * std::sqrt(-2.0 * std::log(uniform_pos())); }

    template <typename It>
    void shuffle(It first, It last) {
        auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            std::swap(first[i - 1], first[below(i)]);
        }
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::mt19937_64 eng_;
};

} // namespace rfadv
