#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace rwmatch {

/// Mixes a root seed with stream/index counters into an independent seed.
/// Used so that trial k of size s draws from the same stream regardless of
/// execution order.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream, std::uint64_t index = 0);

/// Seeded generator whose output sequence is fixed by the C++ standard
/// (mt19937_64) and converted to reals without the implementation-defined
/// standard distributions, so reports reproduce across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n);
    /// +1 or -1 with equal probability.
    double rademacher() { return (engine_() >> 63) ? 1.0 : -1.0; }
    /// Symmetric Dirichlet(1) draw of length n.
    std::vector<double> dirichlet_flat(std::size_t n);
    /// Index drawn with probability proportional to `cumulative` increments;
    /// `cumulative` must be nondecreasing with a positive last entry.
    std::size_t categorical(std::span<const double> cumulative);

private:
    std::mt19937_64 engine_;
};

}  // namespace rwmatch
