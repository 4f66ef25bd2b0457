#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace sega {

// splitmix64: the mixer behind all seeding in the project. Counter-based, so
// any stream can be reconstructed from (seed, position) without serializing
// generator state.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t mix64(uint64_t a, uint64_t b) {
    uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    return splitmix64(s);
}

// FNV-1a over bytes; keys embedding-file entries and seeds the stub provider.
inline uint64_t fnv1a64(std::string_view text) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Small deterministic RNG. Everything that needs randomness takes one of
// these; streams are derived by mixing the run seed with stage/epoch tags so
// a resumed run replays the exact same draws.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {
        // burn-in so low-entropy seeds (0, 1, 2...) decorrelate
        splitmix64(state_);
    }

    uint64_t next_u64() { return splitmix64(state_); }

    // uniform in [0, 1) with 53 random bits
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform integer in [0, n), n > 0
    uint64_t uniform_int(uint64_t n) { return next_u64() % n; }

    // standard normal via Box-Muller; one value per call, no caching so the
    // stream position stays a pure function of call count
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    double uniform_range(double lo, double hi) { return lo + (hi - lo) * uniform(); }

private:
    uint64_t state_;
};

inline uint64_t stream_seed(uint64_t seed, std::string_view tag, uint64_t index = 0) {
    return mix64(mix64(seed, fnv1a64(tag)), index);
}

}  // namespace sega
