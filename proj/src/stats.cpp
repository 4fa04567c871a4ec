#include "alphalaw/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "alphalaw/errors.hpp"
#include "alphalaw/parallel.hpp"
#include "alphalaw/random.hpp"

namespace alphalaw::stats {

namespace {

constexpr std::size_t kBlock = 512;
constexpr std::uint64_t kPermStream = 0x7065726dULL;

void require_same_size(std::size_t a, std::size_t b) {
  if (a != b) throw DimensionError("input lengths differ");
}

bool at_least(double value, double observed) {
  return value >= observed - 1e-12 * std::max(1.0, std::abs(observed));
}

}  // namespace

double mean(std::span<const double> v) {
  if (v.empty()) throw InsufficientData("mean of an empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw InsufficientData("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidParameter("quantile level must lie in [0, 1]");
  std::sort(v.begin(), v.end());
  const double h = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = h - static_cast<double>(lo);
  if (frac == 0.0 || v[lo] == v[hi]) return v[lo];  // keeps ±inf samples finite-safe
  return v[lo] + frac * (v[hi] - v[lo]);
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  require_same_size(x.size(), y.size());
  if (x.size() < 2) throw InsufficientData("line fit needs at least 2 points");
  const double mx = mean(x);
  const double my = mean(y);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0) throw DegenerateDesign("line fit predictor has zero variance");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r_squared = syy > 0.0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 0.0;
  return f;
}

double one_way_f(std::span<const double> values,
                 std::span<const std::size_t> labels) {
  require_same_size(values.size(), labels.size());
  if (values.empty()) return 0.0;
  const std::size_t groups = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<double> sum(groups, 0.0);
  std::vector<std::size_t> count(groups, 0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum[labels[i]] += values[i];
    ++count[labels[i]];
  }
  const double grand = mean(values);
  std::size_t used = 0;
  double ssb = 0.0;
  for (std::size_t g = 0; g < groups; ++g) {
    if (count[g] == 0) continue;
    ++used;
    const double m = sum[g] / static_cast<double>(count[g]);
    ssb += static_cast<double>(count[g]) * (m - grand) * (m - grand);
  }
  double ssw = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double m = sum[labels[i]] / static_cast<double>(count[labels[i]]);
    ssw += (values[i] - m) * (values[i] - m);
  }
  const std::size_t n = values.size();
  if (used < 2 || n <= used) return 0.0;
  const double between = ssb / static_cast<double>(used - 1);
  const double within = ssw / static_cast<double>(n - used);
  if (within <= 0.0) {
    return between > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  }
  return between / within;
}

double welch_f(std::span<const double> values, std::span<const std::size_t> labels) {
  require_same_size(values.size(), labels.size());
  if (values.empty()) return 0.0;
  const std::size_t groups = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<double> sum(groups, 0.0), ss(groups, 0.0);
  std::vector<std::size_t> count(groups, 0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum[labels[i]] += values[i];
    ++count[labels[i]];
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = values[i] - sum[labels[i]] / static_cast<double>(count[labels[i]]);
    ss[labels[i]] += d * d;
  }
  double w_total = 0.0, weighted_mean = 0.0;
  std::vector<double> w(groups, 0.0);
  std::size_t used = 0;
  for (std::size_t g = 0; g < groups; ++g) {
    if (count[g] == 0) continue;
    ++used;
    const double var = count[g] > 1 ? ss[g] / static_cast<double>(count[g] - 1) : 0.0;
    if (!(var > 0.0)) return one_way_f(values, labels);
    w[g] = static_cast<double>(count[g]) / var;
    w_total += w[g];
    weighted_mean += w[g] * sum[g] / static_cast<double>(count[g]);
  }
  if (used < 2) return 0.0;
  weighted_mean /= w_total;
  double a = 0.0, lambda = 0.0;
  for (std::size_t g = 0; g < groups; ++g) {
    if (count[g] == 0) continue;
    const double m = sum[g] / static_cast<double>(count[g]);
    a += w[g] * (m - weighted_mean) * (m - weighted_mean);
    const double h = 1.0 - w[g] / w_total;
    lambda += h * h / static_cast<double>(count[g] - 1);
  }
  const double k = static_cast<double>(used);
  a /= (k - 1.0);
  const double b = 1.0 + 2.0 * (k - 2.0) / (k * k - 1.0) * lambda;
  return a / b;
}

PermutationResult permutation_test(
    std::size_t n,
    const std::function<double(std::span<const std::size_t>)>& statistic,
    std::uint64_t seed, std::size_t permutations, std::size_t exact_limit) {
  std::vector<std::size_t> identity(n);
  std::iota(identity.begin(), identity.end(), 0);
  PermutationResult res;
  res.statistic = statistic(identity);

  if (n <= exact_limit) {
    std::vector<std::size_t> perm = identity;
    std::size_t total = 0, hits = 0;
    do {
      ++total;
      if (at_least(statistic(perm), res.statistic)) ++hits;
    } while (std::next_permutation(perm.begin(), perm.end()));
    res.permutations = total;
    res.exact = true;
    res.p_value = static_cast<double>(hits) / static_cast<double>(total);
    return res;
  }

  if (permutations < 1) throw InvalidParameter("need at least one permutation");
  const std::size_t blocks = (permutations + kBlock - 1) / kBlock;
  std::vector<std::size_t> hits(blocks, 0);
  parallel_for(blocks, [&](std::size_t blk) {
    Rng rng(derive_seed(seed, kPermStream, blk));
    std::vector<std::size_t> perm(n);
    const std::size_t end = std::min(permutations, (blk + 1) * kBlock);
    for (std::size_t p = blk * kBlock; p < end; ++p) {
      std::iota(perm.begin(), perm.end(), 0);
      shuffle_indices(rng, perm);
      if (at_least(statistic(perm), res.statistic)) ++hits[blk];
    }
  });
  const std::size_t count = std::accumulate(hits.begin(), hits.end(), std::size_t{0});
  res.permutations = permutations;
  res.p_value = static_cast<double>(1 + count) / static_cast<double>(permutations + 1);
  return res;
}

PermutationResult f_permutation_test(std::span<const double> values,
                                     std::span<const std::size_t> labels,
                                     std::uint64_t seed,
                                     std::size_t permutations,
                                     GroupStatistic statistic) {
  require_same_size(values.size(), labels.size());
  const std::vector<double> v(values.begin(), values.end());
  const std::vector<std::size_t> l(labels.begin(), labels.end());
  return permutation_test(
      v.size(),
      [&](std::span<const std::size_t> perm) {
        thread_local std::vector<std::size_t> relabeled;
        relabeled.resize(l.size());
        for (std::size_t i = 0; i < l.size(); ++i) relabeled[i] = l[perm[i]];
        return statistic == GroupStatistic::WelchF ? welch_f(v, relabeled)
                                                   : one_way_f(v, relabeled);
      },
      seed, permutations);
}

PermutationResult slope_permutation_test(std::span<const double> x,
                                         std::span<const double> y,
                                         std::uint64_t seed,
                                         std::size_t permutations) {
  require_same_size(x.size(), y.size());
  if (x.size() < 3) throw InsufficientData("slope test needs at least 3 points");
  const std::vector<double> xs(x.begin(), x.end());
  const std::vector<double> ys(y.begin(), y.end());
  const double mx = mean(xs);
  double sxx = 0.0;
  for (double v : xs) sxx += (v - mx) * (v - mx);
  if (sxx <= 0.0) throw DegenerateDesign("slope test predictor has zero variance");
  return permutation_test(
      xs.size(),
      [&](std::span<const std::size_t> perm) {
        double sxy = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) sxy += (xs[i] - mx) * ys[perm[i]];
        return std::abs(sxy / sxx);
      },
      seed, permutations);
}

std::optional<double> auroc(std::span<const double> scores,
                            const std::vector<bool>& labels) {
  require_same_size(scores.size(), labels.size());
  const std::size_t n = scores.size();
  std::size_t pos = 0;
  for (bool b : labels) pos += b ? 1 : 0;
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) return std::nullopt;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) {
      if (labels[order[t]]) rank_sum += avg_rank;
    }
    i = j + 1;
  }
  const double p = static_cast<double>(pos);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(neg));
}

double expected_calibration_error(std::span<const double> confidence,
                                  const std::vector<bool>& labels,
                                  std::size_t bins) {
  require_same_size(confidence.size(), labels.size());
  if (bins < 1) throw InvalidParameter("ECE needs at least one bin");
  if (confidence.empty()) throw InsufficientData("ECE of an empty sample");
  std::vector<double> conf_sum(bins, 0.0), hit_sum(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (std::size_t i = 0; i < confidence.size(); ++i) {
    const double c = std::clamp(confidence[i], 0.0, 1.0);
    const auto b = std::min(static_cast<std::size_t>(c * static_cast<double>(bins)), bins - 1);
    conf_sum[b] += c;
    hit_sum[b] += labels[i] ? 1.0 : 0.0;
    ++count[b];
  }
  double ece = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    if (count[b] == 0) continue;
    ece += std::abs(hit_sum[b] - conf_sum[b]);
  }
  return ece / static_cast<double>(confidence.size());
}

double brier_score(std::span<const double> confidence,
                   const std::vector<bool>& labels) {
  require_same_size(confidence.size(), labels.size());
  if (confidence.empty()) throw InsufficientData("Brier score of an empty sample");
  double acc = 0.0;
  for (std::size_t i = 0; i < confidence.size(); ++i) {
    const double d = confidence[i] - (labels[i] ? 1.0 : 0.0);
    acc += d * d;
  }
  return acc / static_cast<double>(confidence.size());
}

}  // namespace alphalaw::stats
