#include "alphalaw/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "alphalaw/csv.hpp"
#include "alphalaw/errors.hpp"

namespace alphalaw {

namespace {

void require_exponent(double alpha, const char* name) {
  // Zero is allowed: it erases the corresponding term.
  if (!std::isfinite(alpha) || alpha < 0.0) {
    throw InvalidParameter(std::string(name) + " must be finite and >= 0");
  }
}

void require_same_k(std::size_t a, std::size_t b) {
  if (a != b) {
    throw DimensionError("dimension mismatch: " + std::to_string(a) + " vs " +
                         std::to_string(b));
  }
}

}  // namespace

AlphaSchedule AlphaSchedule::constant(double alpha) {
  if (!std::isfinite(alpha) || alpha <= 0.0) {
    throw InvalidParameter("schedule exponents must be positive and finite");
  }
  return AlphaSchedule(ScheduleMode::Constant, {alpha});
}

AlphaSchedule AlphaSchedule::per_step(std::vector<double> alphas) {
  if (alphas.empty()) throw InvalidParameter("schedule must not be empty");
  for (double a : alphas) {
    if (!std::isfinite(a) || a <= 0.0) {
      throw InvalidParameter("schedule exponents must be positive and finite");
    }
  }
  return AlphaSchedule(ScheduleMode::PerStep, std::move(alphas));
}

double AlphaSchedule::at(std::size_t step) const {
  if (mode_ == ScheduleMode::Constant) return alphas_.front();
  return alphas_.at(step);
}

double AlphaSchedule::geometric_mean() const {
  double acc = 0.0;
  for (double a : alphas_) acc += std::log(a);
  return std::exp(acc / static_cast<double>(alphas_.size()));
}

std::string_view to_string(RegimeLabel label) {
  switch (label) {
    case RegimeLabel::Contractive:
      return "contractive";
    case RegimeLabel::Bayesian:
      return "bayesian";
    case RegimeLabel::Expansive:
      return "expansive";
  }
  return "unknown";
}

std::vector<double> alpha_update_log(std::span<const double> log_q,
                                     std::span<const double> log_b,
                                     double alpha) {
  require_same_k(log_q.size(), log_b.size());
  require_exponent(alpha, "alpha");
  std::vector<double> w(log_q.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = alpha * (log_q[i] + log_b[i]);
  return log_softmax(w);
}

BeliefDist alpha_update(const BeliefDist& q, const EvidenceDist& b,
                        double alpha) {
  return two_param_update(q, b, alpha, alpha);
}

BeliefDist two_param_update(const BeliefDist& q, const EvidenceDist& b,
                            double alpha_q0, double alpha_b) {
  require_same_k(q.k(), b.k());
  require_exponent(alpha_q0, "alpha_q0");
  require_exponent(alpha_b, "alpha_b");
  const auto lq = q.log_probs();
  const auto lb = b.log_probs();
  std::vector<double> w(q.k());
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = alpha_q0 * lq[i] + alpha_b * lb[i];
  }
  return normalize_log(w);
}

FixedPoint fixed_point(const EvidenceDist& b, double alpha) {
  require_exponent(alpha, "alpha");
  if (std::abs(alpha - 1.0) <= kMarginalGap) {
    throw MarginalStability("no isolated fixed point for alpha within " +
                            std::to_string(kMarginalGap) + " of 1");
  }
  const double exponent = alpha / (1.0 - alpha);
  const auto beta = b.log_probs();
  std::vector<double> w(beta.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = exponent * beta[i];
  auto log_star = log_softmax(w);

  // Round trip: one update must return the same point.
  const auto next = alpha_update_log(log_star, beta, alpha);
  for (std::size_t i = 0; i < next.size(); ++i) {
    if (std::abs(next[i] - log_star[i]) > kEqualTol * std::max(1.0, std::abs(log_star[i]))) {
      throw Error("fixed point failed its self-consistency check");
    }
  }
  const double c_star = (1.0 - alpha) * log_star[0] - alpha * beta[0];
  return FixedPoint{normalize_log(log_star), std::move(log_star), c_star, alpha};
}

Trajectory simulate_trajectory(const BeliefDist& q0, const EvidenceDist& b,
                               const AlphaSchedule& schedule,
                               std::size_t steps,
                               const std::optional<BeliefDist>& reference_start) {
  if (steps < 1) throw InvalidParameter("steps must be >= 1");
  if (!schedule.is_constant() && schedule.alphas().size() != steps) {
    throw InvalidParameter("per-step schedule has " +
                           std::to_string(schedule.alphas().size()) +
                           " entries but " + std::to_string(steps) +
                           " steps were requested");
  }
  require_same_k(q0.k(), b.k());

  Trajectory traj{{}, {}, {}, {}, schedule, b, std::nullopt, {}};
  const auto beta = b.log_probs();

  std::vector<double> log_state = log_softmax(q0.log_probs());
  traj.log_states.reserve(steps + 1);
  traj.states.reserve(steps + 1);
  traj.states.push_back(q0);
  traj.log_states.push_back(log_state);
  for (std::size_t t = 0; t < steps; ++t) {
    log_state = alpha_update_log(log_state, beta, schedule.at(t));
    traj.states.push_back(normalize_log(log_state));
    traj.log_states.push_back(log_state);
  }

  const bool isolated_fixed =
      schedule.is_constant() &&
      std::abs(schedule.at(0) - 1.0) > kMarginalGap;
  if (isolated_fixed) {
    traj.fixed_point = fixed_point(b, schedule.at(0));
    traj.reference_log_states.assign(steps + 1, traj.fixed_point->log_q_star);
  } else if (reference_start) {
    require_same_k(reference_start->k(), b.k());
    std::vector<double> ref = log_softmax(reference_start->log_probs());
    traj.reference_log_states.push_back(ref);
    for (std::size_t t = 0; t < steps; ++t) {
      ref = alpha_update_log(ref, beta, schedule.at(t));
      traj.reference_log_states.push_back(ref);
    }
  }

  if (!traj.reference_log_states.empty()) {
    for (std::size_t t = 0; t <= steps; ++t) {
      const auto& ref = traj.reference_log_states[t];
      traj.kl_to_fixed.push_back(kl_divergence_log(traj.log_states[t], ref));
      traj.hilbert_to_fixed.push_back(
          hilbert_metric_log(traj.log_states[t], ref));
    }
  }
  return traj;
}

Regime classify_regime(double alpha) {
  if (!std::isfinite(alpha) || alpha <= 0.0) {
    throw InvalidParameter("alpha must be positive and finite");
  }
  if (alpha < 1.0 - kBayesTol) return {RegimeLabel::Contractive, alpha};
  if (alpha > 1.0 + kBayesTol) return {RegimeLabel::Expansive, alpha};
  return {RegimeLabel::Bayesian, alpha};
}

CertificateReport contraction_certificate(const Trajectory& traj) {
  if (!traj.has_distances()) {
    throw NotApplicable(
        "trajectory has no fixed point or reference orbit to compare against");
  }
  const std::size_t steps = traj.steps();
  CertificateReport rep;
  rep.geometric_mean = traj.schedule.geometric_mean();
  rep.cumulative_product_sq.push_back(1.0);
  for (std::size_t t = 0; t < steps; ++t) {
    const double a = traj.schedule.at(t);
    rep.step_alphas.push_back(a);
    rep.cumulative_product_sq.push_back(rep.cumulative_product_sq.back() * a * a);
  }

  const double kl0 = traj.kl_to_fixed.front().value;
  for (std::size_t t = 0; t < steps; ++t) {
    const double d_now = traj.hilbert_to_fixed[t].value;
    const double d_next = traj.hilbert_to_fixed[t + 1].value;
    if (d_now < kResolvableDistance || d_next < kResolvableDistance) {
      rep.hilbert_ratios.push_back(std::nullopt);
      rep.kl_ratios.push_back(std::nullopt);
      continue;
    }
    const double ratio = d_next / d_now;
    rep.hilbert_ratios.push_back(ratio);
    ++rep.resolved_steps;
    const double err = std::abs(ratio - rep.step_alphas[t]);
    rep.max_ratio_error = std::max(rep.max_ratio_error, err);
    if (err > kContractionTol) rep.exact_contraction = false;

    const double kl_now = traj.kl_to_fixed[t].value;
    const double kl_next = traj.kl_to_fixed[t + 1].value;
    rep.kl_ratios.push_back(kl_now > 0.0 ? std::optional(kl_next / kl_now)
                                         : std::nullopt);
    const double bound = rep.cumulative_product_sq[t + 1] * kl0;
    if (kl_next > bound * (1.0 + 1e-12)) {
      rep.kl_bounded = false;
      rep.kl_bound_violations.push_back(t + 1);
    }
  }
  return rep;
}

double variational_objective(const BeliefDist& q, const BeliefDist& q_prev,
                             const EvidenceDist& b, double alpha) {
  require_same_k(q.k(), q_prev.k());
  require_same_k(q.k(), b.k());
  const auto lb = b.log_probs();
  double expected_log_b = 0.0;
  for (std::size_t i = 0; i < q.k(); ++i) expected_log_b += q[i] * lb[i];
  return alpha * kl_divergence(q, q_prev).value - expected_log_b;
}

BeliefDist variational_minimizer(const BeliefDist& q_prev,
                                 const EvidenceDist& b, double alpha) {
  require_same_k(q_prev.k(), b.k());
  if (!std::isfinite(alpha) || alpha <= 0.0) {
    throw InvalidParameter("alpha must be positive and finite");
  }
  return two_param_update(q_prev, b, 1.0, 1.0 / alpha);
}

double tempered_objective(const BeliefDist& q, const BeliefDist& q_prev,
                          const EvidenceDist& b, double alpha) {
  require_same_k(q.k(), q_prev.k());
  require_same_k(q.k(), b.k());
  const auto lb = b.log_probs();
  double expected_log_b = 0.0;
  for (std::size_t i = 0; i < q.k(); ++i) expected_log_b += q[i] * lb[i];
  return alpha * kl_divergence(q, q_prev).value - alpha * expected_log_b -
         (1.0 - alpha) * entropy(q).value;
}

std::vector<double> log_odds_instability_demo(const EvidenceDist& b,
                                              double alpha, std::size_t steps) {
  if (b.k() != 2) throw InvalidParameter("log-odds demo needs k = 2");
  if (b.probs()[0] < 0.5) {
    throw InvalidParameter("log-odds demo needs b(0) >= 1/2");
  }
  if (!std::isfinite(alpha) || alpha < 1.0) {
    throw InvalidParameter("log-odds demo needs alpha >= 1");
  }
  const auto beta = b.log_probs();
  std::vector<double> log_state = BeliefDist::uniform(2).log_probs();
  std::vector<double> r{0.0};
  for (std::size_t t = 0; t < steps; ++t) {
    log_state = alpha_update_log(log_state, beta, alpha);
    r.push_back(log_state[0] - log_state[1]);
  }
  return r;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  const std::size_t k = traj.evidence.k();
  out << "step";
  for (std::size_t i = 0; i < k; ++i) out << ",q_" << i;
  out << ",alpha_t,kl_to_fixed,hilbert_to_fixed\n";
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    out << t;
    for (double p : traj.states[t].probs()) out << ',' << csv::num(p);
    out << ',';
    if (t > 0) out << csv::num(traj.schedule.at(t - 1));
    out << ',';
    if (traj.has_distances()) out << csv::num(traj.kl_to_fixed[t].value);
    out << ',';
    if (traj.has_distances()) out << csv::num(traj.hilbert_to_fixed[t].value);
    out << '\n';
  }
}

}  // namespace alphalaw
