#pragma once

// Small statistics toolkit shared by estimation and experiments.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace alphalaw::stats {

double mean(std::span<const double> v);
/// Sample standard deviation (n − 1 denominator); 0 for fewer than 2 values.
double sample_std(std::span<const double> v);
/// Linear-interpolation quantile (Hyndman–Fan type 7), p in [0, 1].
double quantile(std::vector<double> v, double p);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Ordinary least squares of y on x with an intercept.
LineFit fit_line(std::span<const double> x, std::span<const double> y);

/// One-way ANOVA F statistic. `labels[i]` is the group of `values[i]`.
double one_way_f(std::span<const double> values,
                 std::span<const std::size_t> labels);

/// Welch's heteroscedastic one-way statistic. Falls back to one_way_f when a
/// group has fewer than 2 values or zero variance.
double welch_f(std::span<const double> values, std::span<const std::size_t> labels);

struct PermutationResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t permutations = 0;
  bool exact = false;
};

inline constexpr std::size_t kDefaultPermutations = 9999;
inline constexpr std::size_t kExactPermutationLimit = 8;

/// Upper-tail permutation test. `statistic(perm)` evaluates the statistic
/// with item i relabeled as perm[i]; the identity gives the observed value.
/// Up to `exact_limit` items every permutation is enumerated and
/// p = #{T_π ≥ T_obs} / n!. Otherwise p = (1 + #{T_π ≥ T_obs}) / (P + 1)
/// over P seeded random permutations.
PermutationResult permutation_test(
    std::size_t n,
    const std::function<double(std::span<const std::size_t>)>& statistic,
    std::uint64_t seed, std::size_t permutations = kDefaultPermutations,
    std::size_t exact_limit = kExactPermutationLimit);

enum class GroupStatistic { ClassicF, WelchF };

/// Group-label permutation test of a one-way statistic. Welch's statistic is
/// studentized, so its permutation test stays calibrated when group
/// variances differ.
PermutationResult f_permutation_test(std::span<const double> values,
                                     std::span<const std::size_t> labels,
                                     std::uint64_t seed,
                                     std::size_t permutations = kDefaultPermutations,
                                     GroupStatistic statistic = GroupStatistic::ClassicF);

/// Two-sided test of a zero OLS slope using |slope| as the statistic.
PermutationResult slope_permutation_test(std::span<const double> x,
                                         std::span<const double> y,
                                         std::uint64_t seed,
                                         std::size_t permutations = kDefaultPermutations);

/// Mann–Whitney AUROC with averaged tie ranks. nullopt when every label is
/// the same.
std::optional<double> auroc(std::span<const double> scores,
                            const std::vector<bool>& labels);

/// Expected calibration error with `bins` equal-width bins over [0, 1].
double expected_calibration_error(std::span<const double> confidence,
                                  const std::vector<bool>& labels,
                                  std::size_t bins = 10);

double brier_score(std::span<const double> confidence,
                   const std::vector<bool>& labels);

}  // namespace alphalaw::stats
