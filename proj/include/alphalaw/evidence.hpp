#pragma once

// Verifier evidence: the bimodal encoding b(correct) = s, b(other) =
// (1 − s)/(K − 1), flip-noise corruption, and strength grids.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "alphalaw/random.hpp"
#include "alphalaw/simplex.hpp"

namespace alphalaw {

inline constexpr double kDefaultStrength = 0.9;

struct EvidenceDist {
  BeliefDist dist;
  /// Index holding the concentrated mass, when built by encode_evidence.
  std::optional<std::size_t> correct_index;
  std::optional<double> strength;

  std::size_t k() const noexcept { return dist.k(); }
  std::span<const double> probs() const noexcept { return dist.probs(); }
  std::vector<double> log_probs() const { return dist.log_probs(); }

  /// Evidence without a known generating encoding.
  static EvidenceDist from_probs(std::span<const double> probs);

  friend bool operator==(const EvidenceDist&, const EvidenceDist&) = default;
};

EvidenceDist encode_evidence(std::size_t k, std::size_t correct_index,
                             double s = kDefaultStrength);

/// With probability p_flip re-encodes the mass on a uniformly chosen wrong
/// index. Always consumes exactly two draws from rng, so runs that share a
/// seed flip nested subsets as p_flip grows.
EvidenceDist inject_flip_noise(const EvidenceDist& b, double p_flip, Rng& rng);

/// Validates every level against 1/k_min < s < 1.
std::vector<double> strength_grid(std::span<const double> levels,
                                  std::size_t k_min);
std::vector<double> default_strength_grid();

}  // namespace alphalaw
