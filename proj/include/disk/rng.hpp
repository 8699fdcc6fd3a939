#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>

// Deterministic randomness.  mt19937_64 has a standard-specified output
// sequence, and every transform on top of it is written out by hand, so
// streams are reproducible across platforms and library versions.

namespace disk {

// splitmix64 finalizer; mixes a master seed with a stream index so derived
// streams are decorrelated and independent of evaluation order.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return mix_seed(mix_seed(seed, a), b);
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    // uniform in [0, 1), 53 bits
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double normal() {
        // Box-Muller, one draw per call, cached pair member discarded for
        // simplicity of the stream contract (two engine outputs per call).
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(6.283185307179586477 * u2);
    }

    // index draw from unnormalized nonnegative weights by inverse CDF
    std::size_t categorical(std::span<const double> w) {
        if (w.empty()) throw std::invalid_argument("categorical: empty weights");
        double total = 0.0;
        for (double x : w) {
            if (!(x >= 0.0)) throw std::invalid_argument("categorical: negative weight");
            total += x;
        }
        if (total <= 0.0) throw std::invalid_argument("categorical: zero mass");
        double u = uniform() * total;
        double c = 0.0;
        for (std::size_t i = 0; i + 1 < w.size(); i++) {
            c += w[i];
            if (u < c) return i;
        }
        return w.size() - 1;
    }

    std::uint64_t raw() { return eng_(); }

  private:
    std::mt19937_64 eng_;
};

}  // namespace disk
