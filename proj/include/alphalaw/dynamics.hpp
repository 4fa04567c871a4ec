#pragma once

// The α-update q' ∝ (q·b)^α, its fixed points, iterated trajectories and the
// numerical contraction certificate.
//
// Trajectories iterate in exact log coordinates. For constant α ≠ 1 the
// distance columns measure the gap to the fixed point q* ∝ b^{α/(1−α)}, where
// d_H(q_{t+1}, q*) = α·d_H(q_t, q*) holds exactly. For per-step schedules
// there is no common fixed point; distances are then taken to a reference
// orbit started from a caller-supplied point under the same schedule, which
// contracts by α_t per step.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "alphalaw/evidence.hpp"
#include "alphalaw/simplex.hpp"

namespace alphalaw {

/// Regime boundary tolerance around α = 1.
inline constexpr double kBayesTol = 1e-9;
/// Minimum |α − 1| for an isolated fixed point.
inline constexpr double kMarginalGap = 1e-6;
inline constexpr double kContractionTol = 1e-6;
/// Hilbert distances below this are under the resolution of double-precision
/// log coordinates; ratio checks skip them.
inline constexpr double kResolvableDistance = 1e-8;

enum class ScheduleMode { Constant, PerStep };

class AlphaSchedule {
 public:
  static AlphaSchedule constant(double alpha);
  static AlphaSchedule per_step(std::vector<double> alphas);

  ScheduleMode mode() const noexcept { return mode_; }
  bool is_constant() const noexcept { return mode_ == ScheduleMode::Constant; }
  std::span<const double> alphas() const noexcept { return alphas_; }
  /// Exponent of transition `step` (0-based).
  double at(std::size_t step) const;
  double geometric_mean() const;

  /// Regularization strength λ with α = 1/(1 + λ).
  static double lambda_of(double alpha) { return 1.0 / alpha - 1.0; }

 private:
  AlphaSchedule(ScheduleMode mode, std::vector<double> alphas)
      : mode_(mode), alphas_(std::move(alphas)) {}
  ScheduleMode mode_;
  std::vector<double> alphas_;
};

struct FixedPoint {
  BeliefDist q_star;
  std::vector<double> log_q_star;
  /// Normalization constant at the fixed point: ℓ* = α(ℓ* + β) + c*.
  double c_star = 0.0;
  double alpha = 0.0;
};

struct Trajectory {
  std::vector<BeliefDist> states;
  std::vector<std::vector<double>> log_states;
  /// Empty when no fixed point or reference orbit is available.
  std::vector<Nats> kl_to_fixed;
  std::vector<Nats> hilbert_to_fixed;
  AlphaSchedule schedule;
  EvidenceDist evidence;
  std::optional<FixedPoint> fixed_point;
  std::vector<std::vector<double>> reference_log_states;

  std::size_t steps() const noexcept { return states.size() - 1; }
  bool has_distances() const noexcept { return !hilbert_to_fixed.empty(); }
};

enum class RegimeLabel { Contractive, Bayesian, Expansive };

struct Regime {
  RegimeLabel label;
  double alpha;
};

std::string_view to_string(RegimeLabel label);

/// normalize_log(α·(log q + log b)); exact Bayes at α = 1.
BeliefDist alpha_update(const BeliefDist& q, const EvidenceDist& b,
                        double alpha);
/// Same update on normalized log coordinates, without the floor.
std::vector<double> alpha_update_log(std::span<const double> log_q,
                                     std::span<const double> log_b,
                                     double alpha);

BeliefDist two_param_update(const BeliefDist& q, const EvidenceDist& b,
                            double alpha_q0, double alpha_b);

FixedPoint fixed_point(const EvidenceDist& b, double alpha);

/// A per-step schedule must have exactly `steps` entries. `reference_start`
/// seeds the comparison orbit when the schedule has no single fixed point.
Trajectory simulate_trajectory(
    const BeliefDist& q0, const EvidenceDist& b, const AlphaSchedule& schedule,
    std::size_t steps,
    const std::optional<BeliefDist>& reference_start = std::nullopt);

Regime classify_regime(double alpha);

struct CertificateReport {
  std::vector<double> step_alphas;
  /// d_H(t+1)/d_H(t); nullopt where d_H(t) is below kResolvableDistance.
  std::vector<std::optional<double>> hilbert_ratios;
  std::size_t resolved_steps = 0;
  double max_ratio_error = 0.0;
  bool exact_contraction = true;
  /// KL(t+1)/KL(t) on resolved steps, for the asymptotic α² rate.
  std::vector<std::optional<double>> kl_ratios;
  /// Π_{s<t} α_s², one entry per state.
  std::vector<double> cumulative_product_sq;
  /// Whether KL(q_t‖q*) ≤ Π α_s²·KL(q_0‖q*) held at every resolved step.
  bool kl_bounded = true;
  std::vector<std::size_t> kl_bound_violations;
  double geometric_mean = 0.0;
};

CertificateReport contraction_certificate(const Trajectory& traj);

/// α·KL(q‖q_prev) − E_q[log b]. Its minimizer is q ∝ q_prev·b^{1/α}.
double variational_objective(const BeliefDist& q, const BeliefDist& q_prev,
                             const EvidenceDist& b, double alpha);
/// Closed-form minimizer of variational_objective.
BeliefDist variational_minimizer(const BeliefDist& q_prev,
                                 const EvidenceDist& b, double alpha);
/// α·KL(q‖q_prev) − α·E_q[log b] − (1−α)·H(q), which equals
/// KL(q‖(q_prev·b)^α/Z) − log Z and so is minimized by alpha_update.
double tempered_objective(const BeliefDist& q, const BeliefDist& q_prev,
                          const EvidenceDist& b, double alpha);

/// Log-odds r_t = ℓ_t(0) − ℓ_t(1) of the unclamped update started from the
/// uniform prior, t = 0..steps. Requires k = 2, b(0) ≥ ½, α ≥ 1.
std::vector<double> log_odds_instability_demo(const EvidenceDist& b,
                                              double alpha, std::size_t steps);

/// Columns: step, q_0..q_{K−1}, alpha_t, kl_to_fixed, hilbert_to_fixed.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);

}  // namespace alphalaw
