#pragma once

#include <array>
#include <cstdint>

namespace mvr {

/// Mixes two 64-bit values into one, suitable for deriving independent
/// sub-stream seeds:  seed_view = hash_combine(base_seed, view_index).
/// Uses the splitmix64 finalizer, which is a strong 64-bit mixer.
uint64_t hash_combine(uint64_t a, uint64_t b);

/// Three-way convenience overload: hash_combine(hash_combine(a, b), c).
uint64_t hash_combine(uint64_t a, uint64_t b, uint64_t c);

/// Deterministic random source (xoshiro256++ seeded via splitmix64).
///
/// Everything stochastic in this library draws from an Rng so runs are
/// reproducible bit-for-bit across platforms and compilers.  Distribution
/// sampling is implemented here rather than with <random> because the
/// standard library does not pin its distribution algorithms.
///
/// The full generator state can be saved and restored, which checkpointing
/// uses to make interrupted and uninterrupted runs indistinguishable.
class Rng {
public:
    explicit Rng(uint64_t seed);

    uint64_t next_u64();

    /// Uniform double in [0, 1), 53-bit resolution.
    double uniform();

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi);

    /// Uniform integer in [0, n).  Requires n > 0.
    int64_t uniform_int(int64_t n);

    /// Standard normal via Box-Muller.  Pairs are generated at once and the
    /// spare is cached, so draws come in a fixed, reproducible order.
    double normal();

    double normal(double mean, double stddev);

    /// Serialized state: 4 state words, spare-valid flag, spare value bits.
    std::array<uint64_t, 6> state() const;
    void set_state(const std::array<uint64_t, 6>& s);

private:
    std::array<uint64_t, 4> s_{};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace mvr
