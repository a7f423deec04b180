#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "fdn/matrix.hpp"

namespace fdn {

/// xoshiro256** seeded through splitmix64.
///
/// The integer stream is fully specified, so a given seed yields the same
/// sequence on every platform. Normal draws use Box-Muller over that stream;
/// the second value of each pair is cached and returned by the next call.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() noexcept;
    /// Uniform in [0, 1) with 53 bits of precision.
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    /// Unbiased integer in [0, n). n must be positive.
    std::uint64_t uniform_index(std::uint64_t n);
    double normal() noexcept;

private:
    std::array<std::uint64_t, 4> state_{};
    std::uint64_t seed_;
    std::optional<double> spare_;
};

/// Stateless 64-bit mix used to derive independent stream seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept;

Matrix sample_gaussian(Rng& rng, std::size_t rows, std::size_t cols, double mean, double std);
Matrix sample_uniform(Rng& rng, std::size_t rows, std::size_t cols, double lo, double hi);

}  // namespace fdn
