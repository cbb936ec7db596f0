#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace ttnmtl {

/// Seeded pseudo-random source with platform-independent output.
///
/// The engine is std::mt19937_64, whose sequence is fixed by the standard.
/// The distribution layer is written out here because the std:: distributions
/// are implementation-defined, and runs must replay bit-for-bit.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::size_t below(std::size_t n);

    /// Standard normal via Box-Muller (one value per call, no caching).
    double normal();

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

/// Mixes a base seed with a stream label so derived streams do not overlap.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

} // namespace ttnmtl
