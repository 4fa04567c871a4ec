#include "alphalaw/evidence.hpp"

#include <cmath>
#include <string>

#include "alphalaw/errors.hpp"

namespace alphalaw {

EvidenceDist EvidenceDist::from_probs(std::span<const double> probs) {
  return EvidenceDist{BeliefDist::from_probs(probs), std::nullopt, std::nullopt};
}

EvidenceDist encode_evidence(std::size_t k, std::size_t correct_index,
                             double s) {
  if (k < 2) throw InvalidInput("evidence needs k >= 2");
  if (correct_index >= k) {
    throw InvalidInput("correct index " + std::to_string(correct_index) +
                       " out of range for k = " + std::to_string(k));
  }
  if (!std::isfinite(s) || s <= 1.0 / static_cast<double>(k) || s >= 1.0) {
    throw InvalidParameter("evidence strength s = " + std::to_string(s) +
                           " must lie in (1/k, 1)");
  }
  std::vector<double> probs(k, (1.0 - s) / static_cast<double>(k - 1));
  probs[correct_index] = s;
  return EvidenceDist{BeliefDist::from_probs(probs), correct_index, s};
}

EvidenceDist inject_flip_noise(const EvidenceDist& b, double p_flip, Rng& rng) {
  if (!(p_flip >= 0.0 && p_flip <= 1.0)) {
    throw InvalidParameter("p_flip must lie in [0, 1]");
  }
  if (!b.correct_index || !b.strength) {
    throw NotApplicable("flip noise needs evidence built by encode_evidence");
  }
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  const std::uint64_t pick = rng();
  if (u >= p_flip) return b;
  const std::size_t k = b.k();
  std::size_t j = static_cast<std::size_t>(pick % (k - 1));
  if (j >= *b.correct_index) ++j;
  return encode_evidence(k, j, *b.strength);
}

std::vector<double> strength_grid(std::span<const double> levels,
                                  std::size_t k_min) {
  if (levels.empty()) throw InvalidParameter("strength grid is empty");
  if (k_min < 2) throw InvalidParameter("k_min must be >= 2");
  for (double s : levels) {
    if (!std::isfinite(s) || s <= 1.0 / static_cast<double>(k_min) || s >= 1.0) {
      throw InvalidParameter("strength " + std::to_string(s) +
                             " outside (1/" + std::to_string(k_min) + ", 1)");
    }
  }
  return {levels.begin(), levels.end()};
}

std::vector<double> default_strength_grid() {
  return {0.51, 0.60, 0.70, 0.80, 0.90, 0.99};
}

}  // namespace alphalaw
