#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace alphalaw {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Independent stream seed for cell `index` of stream `stream` under `base`.
/// Parallel tasks seed from this so results never depend on scheduling.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                          std::uint64_t index) noexcept;

std::uint64_t fnv1a64(std::string_view text) noexcept;

/// Uniform index in [0, n) from the top 53 bits of one draw. Unlike
/// std::uniform_int_distribution the mapping is fixed across standard libraries.
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Fisher-Yates shuffle driven by uniform_index.
void shuffle_indices(Rng& rng, std::vector<std::size_t>& items);

/// Symmetric Dirichlet draw (via normalized gamma variates).
std::vector<double> sample_dirichlet(Rng& rng, std::size_t k,
                                     double concentration);

}  // namespace alphalaw
