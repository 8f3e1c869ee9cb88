#pragma once

// Deterministic random streams.
//
// The generator is SplitMix64 (Steele, Lea & Flood 2014): a 64-bit counter
// advanced by the golden-ratio increment and passed through a fixed mixer.
// A stream is identified by (seed, purpose); its starting counter is
//     mix64(seed) ^ mix64(fnv1a64(purpose))
// so that environment, agent, replay and analysis draws never share state.
// Integer draws use rejection sampling and doubles take the top 53 bits, so
// every draw is reproducible bit-for-bit across platforms and compilers.

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>
#include <utility>

namespace sflab {

inline constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

class Rng {
public:
    using result_type = std::uint64_t;

    Rng() : Rng(0, "default") {}
    Rng(std::uint64_t seed, std::string_view purpose)
        : state_(mix64(seed) ^ mix64(fnv1a64(purpose))) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }

    result_type operator()() { return next(); }

    std::uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix64(state_);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n), n > 0
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = max() - max() % n;
        std::uint64_t v;
        do {
            v = next();
        } while (v >= limit);
        return v % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // standard normal via Box-Muller (one value per call)
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Child stream; deterministic given this stream's current state.
    Rng split(std::string_view purpose) { return Rng(next(), purpose); }

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_;
};

} // namespace sflab
