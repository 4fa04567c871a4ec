#include "alphalaw/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "alphalaw/errors.hpp"

namespace alphalaw {

namespace {

void require_same_k(std::size_t a, std::size_t b) {
  if (a != b) {
    throw DimensionError("dimension mismatch: " + std::to_string(a) + " vs " +
                         std::to_string(b));
  }
}

// Normalizes w in place and lifts entries below kFloor, rescaling the rest
// so the total stays 1. Floored entries end up exactly kFloor.
void normalize_with_floor(std::vector<double>& w) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& v : w) v /= total;

  std::vector<bool> floored(w.size(), false);
  for (std::size_t round = 0; round <= w.size(); ++round) {
    bool changed = false;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!floored[i] && w[i] < kFloor) {
        floored[i] = true;
        changed = true;
      }
    }
    if (!changed) return;
    double free_mass = 0.0;
    std::size_t n_floored = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (floored[i]) {
        ++n_floored;
      } else {
        free_mass += w[i];
      }
    }
    const double target = 1.0 - static_cast<double>(n_floored) * kFloor;
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] = floored[i] ? kFloor : w[i] * target / free_mass;
    }
  }
}

// x·eˣ − eˣ + 1, series near zero: Σ_{n≥2} xⁿ (n−1)/n!.
double phi(double x) {
  if (std::abs(x) < 1e-3) {
    const double x2 = x * x;
    return x2 * (0.5 + x * (1.0 / 3.0 + x * (1.0 / 8.0 + x * (1.0 / 30.0))));
  }
  return x * std::exp(x) - std::expm1(x);
}

}  // namespace

BeliefDist BeliefDist::from_probs(std::span<const double> probs,
                                  double sum_tol) {
  if (probs.size() < 2) throw InvalidInput("distribution needs k >= 2");
  double total = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p)) throw InvalidInput("non-finite probability");
    if (p < 0.0) throw InvalidInput("negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > sum_tol) {
    throw InvalidInput("probabilities sum to " + std::to_string(total));
  }
  std::vector<double> w(probs.begin(), probs.end());
  normalize_with_floor(w);
  return BeliefDist(std::move(w));
}

BeliefDist BeliefDist::from_weights(std::span<const double> weights) {
  if (weights.size() < 2) throw InvalidInput("distribution needs k >= 2");
  double total = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) {
      throw InvalidInput("weights must be finite and non-negative");
    }
    total += w;
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw InvalidInput("weights must have a positive finite sum");
  }
  std::vector<double> w(weights.begin(), weights.end());
  normalize_with_floor(w);
  return BeliefDist(std::move(w));
}

BeliefDist BeliefDist::uniform(std::size_t k) {
  if (k < 2) throw InvalidInput("distribution needs k >= 2");
  return BeliefDist(std::vector<double>(k, 1.0 / static_cast<double>(k)));
}

std::vector<double> BeliefDist::log_probs() const {
  std::vector<double> out(probs_.size());
  std::transform(probs_.begin(), probs_.end(), out.begin(),
                 [](double p) { return std::log(p); });
  return out;
}

std::size_t BeliefDist::argmax() const {
  return static_cast<std::size_t>(
      std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

bool BeliefDist::at_floor(std::size_t i) const {
  return probs_.at(i) <= kFloor * (1.0 + 1e-6);
}

double logsumexp(std::span<const double> values) {
  const double m = *std::max_element(values.begin(), values.end());
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - m);
  return m + std::log(acc);
}

std::vector<double> log_softmax(std::span<const double> log_weights) {
  if (log_weights.size() < 2) throw InvalidInput("need k >= 2 log weights");
  for (double w : log_weights) {
    if (!std::isfinite(w)) throw InvalidInput("non-finite log weight");
  }
  const double lse = logsumexp(log_weights);
  std::vector<double> out(log_weights.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = log_weights[i] - lse;
  return out;
}

BeliefDist normalize_log(std::span<const double> log_weights) {
  if (log_weights.size() < 2) throw InvalidInput("need k >= 2 log weights");
  for (double w : log_weights) {
    if (!std::isfinite(w)) throw InvalidInput("non-finite log weight");
  }
  const double m = *std::max_element(log_weights.begin(), log_weights.end());
  std::vector<double> w(log_weights.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(log_weights[i] - m);
  return BeliefDist::from_weights(w);
}

Nats kl_divergence(const BeliefDist& p, const BeliefDist& q) {
  require_same_k(p.k(), q.k());
  return kl_divergence_log(p.log_probs(), q.log_probs());
}

Nats kl_divergence_log(std::span<const double> log_p,
                       std::span<const double> log_q) {
  require_same_k(log_p.size(), log_q.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < log_p.size(); ++i) {
    acc += std::exp(log_q[i]) * phi(log_p[i] - log_q[i]);
  }
  return Nats{acc};
}

Nats hilbert_metric(const BeliefDist& p, const BeliefDist& q) {
  require_same_k(p.k(), q.k());
  return hilbert_metric_log(p.log_probs(), q.log_probs());
}

Nats hilbert_metric_log(std::span<const double> log_p,
                        std::span<const double> log_q) {
  require_same_k(log_p.size(), log_q.size());
  double hi = -std::numeric_limits<double>::infinity();
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < log_p.size(); ++i) {
    const double d = log_p[i] - log_q[i];
    hi = std::max(hi, d);
    lo = std::min(lo, d);
  }
  return Nats{hi - lo};
}

Nats entropy(const BeliefDist& p) {
  double acc = 0.0;
  for (double v : p.probs()) acc -= v * std::log(v);
  return Nats{std::max(acc, 0.0)};
}

double max_abs_diff(const BeliefDist& p, const BeliefDist& q) {
  require_same_k(p.k(), q.k());
  double m = 0.0;
  for (std::size_t i = 0; i < p.k(); ++i) m = std::max(m, std::abs(p[i] - q[i]));
  return m;
}

bool approx_equal(const BeliefDist& p, const BeliefDist& q, double tol) {
  return p.k() == q.k() && max_abs_diff(p, q) < tol;
}

}  // namespace alphalaw
