#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace toolplay {

// Deterministic seeded RNG. Uniform/normal draws are hand-rolled so results
// do not depend on the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    double uniform() {  // [0, 1)
        return (gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t uniform_index(std::uint64_t n) {
        // rejection sampling to avoid modulo bias
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do { v = gen_(); } while (v >= limit);
        return v % n;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do { u1 = uniform(); } while (u1 <= 0.0);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        have_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Named sub-seed derivation so every pipeline stage draws from an
// independent, reproducible stream (FNV-1a over stage name + index).
inline std::uint64_t derive_seed(std::uint64_t global, const std::string& stage, std::uint64_t index = 0) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xff;
            h *= 1099511628211ull;
        }
    };
    mix(global);
    for (char c : stage) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    mix(index);
    return h;
}

}  // namespace toolplay
