#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace cxr {

/// Seeded random source with platform-independent distributions.
///
/// The standard distribution classes are implementation defined, so the
/// uniform and normal draws are derived directly from the 64-bit engine
/// output. Identical seeds give identical streams on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t below(std::uint64_t n);

    /// Standard normal draw (Box-Muller, second value cached).
    double normal();

    /// Fisher-Yates shuffle driven by below().
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    /// Derive an independent child seed; used to give sub-tasks their own stream.
    std::uint64_t fork_seed() { return engine_() ^ 0x9e3779b97f4a7c15ULL; }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace cxr
