#pragma once

#include <cmath>
#include <cstdint>

namespace jseis {

// Counter-based PRNG: draw i is a pure function of (key, i), so streams can
// be split by deriving sub-keys and every consumer is reproducible in
// isolation. Mixing is the splitmix64 finalizer.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t key) : key_(key) {}

    static std::uint64_t mix(std::uint64_t key, std::uint64_t n) {
        std::uint64_t z = key + 0x9E3779B97F4A7C15ULL * (n + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Independent sub-key, e.g. one per trace or per epoch.
    static std::uint64_t derive(std::uint64_t key, std::uint64_t stream) {
        return mix(key, stream);
    }

    std::uint64_t next_u64() { return mix(key_, counter_++); }

    // [0, 1)
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_unit();
    }

    // Box-Muller; consumes two draws per call.
    double normal(double mean, double stddev) {
        const double u1 = next_unit();
        const double u2 = next_unit();
        const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
        const double two_pi = 6.283185307179586476925286766559;
        return mean + stddev * r * std::cos(two_pi * u2);
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace jseis
