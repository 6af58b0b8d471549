#pragma once

#include <cstdint>
#include <cmath>

namespace nrf {

// Counter-based random streams. Every consumer derives its stream from a
// root seed plus logical keys (stage, epoch, ray id, ...), so results do not
// depend on thread scheduling or evaluation order.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
    return splitmix64(a ^ (0x9e3779b97f4a7c15ull + b + (a << 6) + (a >> 2)));
}

class Rng {
public:
    explicit Rng(uint64_t seed) : state_(splitmix64(seed ^ 0x853c49e6748fea9bull)) {
        if (state_ == 0) state_ = 0x4d595df4d0f33173ull;
    }

    // Keyed stream constructor: Rng(seed, k1, k2, ...)
    template <typename... Keys>
    Rng(uint64_t seed, Keys... keys) : Rng(fold(seed, keys...)) {}

    uint64_t next_u64() {
        // xorshift128+ style step on a single split state; quality is plenty
        // for sampling strata and init draws.
        uint64_t x = state_;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        state_ = x;
        return splitmix64(x);
    }

    uint32_t next_u32() { return static_cast<uint32_t>(next_u64() >> 32); }

    // Uniform in [0,1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n).
    uint64_t below(uint64_t n) {
        // Rejection-free modulo is fine here; n is tiny compared to 2^64.
        return n == 0 ? 0 : next_u64() % n;
    }

    // Standard normal via Box-Muller; one value per call (second discarded
    // to keep the stream position independent of call parity).
    double normal() {
        double u1 = 1.0 - uniform();  // (0,1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

private:
    template <typename... Keys>
    static uint64_t fold(uint64_t seed, Keys... keys) {
        uint64_t h = splitmix64(seed);
        ((h = hash_combine(h, static_cast<uint64_t>(keys))), ...);
        return h;
    }

    uint64_t state_;
};

}  // namespace nrf
