#pragma once

// Probability-simplex arithmetic in linear and log space.
//
// Every BeliefDist is kept strictly inside the simplex: entries below kFloor
// are raised to kFloor and the remaining mass is rescaled, so logs are always
// finite. Divergences are in nats.

#include <compare>
#include <cstddef>
#include <span>
#include <vector>

namespace alphalaw {

inline constexpr double kFloor = 1e-9;
/// L-infinity tolerance for treating two distributions as equal.
inline constexpr double kEqualTol = 1e-8;

struct Nats {
  double value = 0.0;
  auto operator<=>(const Nats&) const = default;
};

class BeliefDist {
 public:
  /// Validates non-negativity, finiteness and |sum - 1| <= sum_tol, then
  /// applies the floor and renormalizes.
  static BeliefDist from_probs(std::span<const double> probs,
                               double sum_tol = 1e-6);
  /// Accepts arbitrary non-negative weights with a positive finite sum.
  static BeliefDist from_weights(std::span<const double> weights);
  static BeliefDist uniform(std::size_t k);

  std::size_t k() const noexcept { return probs_.size(); }
  std::span<const double> probs() const noexcept { return probs_; }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::vector<double> log_probs() const;
  std::size_t argmax() const;
  /// True when entry i was raised to the floor.
  bool at_floor(std::size_t i) const;

  friend bool operator==(const BeliefDist&, const BeliefDist&) = default;

 private:
  explicit BeliefDist(std::vector<double> probs) : probs_(std::move(probs)) {}
  std::vector<double> probs_;
};

/// Softmax with max-subtraction; result floored.
BeliefDist normalize_log(std::span<const double> log_weights);

/// ℓ − logsumexp(ℓ), unclamped. Used where exact log coordinates matter.
std::vector<double> log_softmax(std::span<const double> log_weights);

double logsumexp(std::span<const double> values);

Nats kl_divergence(const BeliefDist& p, const BeliefDist& q);
/// KL(p‖q) from normalized log coordinates, using Σ q·φ(log p − log q)
/// with φ(x) = x·eˣ − eˣ + 1 ≥ 0, which avoids cancellation near p = q.
Nats kl_divergence_log(std::span<const double> log_p,
                       std::span<const double> log_q);

Nats hilbert_metric(const BeliefDist& p, const BeliefDist& q);
/// Works on unnormalized log weights too; the metric ignores constant shifts.
Nats hilbert_metric_log(std::span<const double> log_p,
                        std::span<const double> log_q);

Nats entropy(const BeliefDist& p);

double max_abs_diff(const BeliefDist& p, const BeliefDist& q);
bool approx_equal(const BeliefDist& p, const BeliefDist& q,
                  double tol = kEqualTol);

}  // namespace alphalaw
