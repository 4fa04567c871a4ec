#pragma once

// Log-space regression of posteriors on prior-plus-evidence.
//
// Each record contributes K points x_i = log q0(i) + log b(i), y_i = log q1(i).
// The normalizer of q1 differs per record, so pooled fits give every record
// its own intercept and estimate the shared slope from within-record
// deviations. The reported intercept is the pooled ȳ − α̂·x̄.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "alphalaw/records.hpp"

namespace alphalaw {

struct RegressionPoint {
  double x = 0.0;
  double y = 0.0;
  std::string record_id;
  std::size_t candidate_index = 0;
  /// True when q0, b or q1 sits at the probability floor; such points carry
  /// a clamped log value and are left out of every fit.
  bool censored = false;
};

std::vector<RegressionPoint> build_regression_points(const RevisionRecord& record);

/// Points built against a replacement evidence vector (same q0 and q1).
std::vector<RegressionPoint> build_regression_points(const RevisionRecord& record,
                                                     const EvidenceDist& evidence);

enum class FitMethod { PooledOls, PerProblem };
std::string_view to_string(FitMethod m);

struct FitResult {
  double alpha = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t n_points = 0;
  std::size_t n_records = 0;
  std::optional<double> ci_low;
  std::optional<double> ci_high;
  FitMethod method = FitMethod::PooledOls;
};

/// Additive within-record summary of one record's uncensored points.
struct RecordMoments {
  std::size_t n = 0;
  double sum_x = 0.0;
  double sum_y = 0.0;
  double sxx = 0.0;  // centered within the record
  double sxy = 0.0;
  double syy = 0.0;
};

RecordMoments record_moments(std::span<const RegressionPoint> points);

/// Pooled fit from per-record moments; records with no points are ignored.
FitResult fit_from_moments(std::span<const RecordMoments> moments);

/// Needs at least 2 contributing records (InsufficientData) and non-zero
/// within-record predictor variance (DegenerateDesign).
FitResult fit_alpha_pooled(const std::vector<RevisionRecord>& records);

/// OLS over one record's own points. Needs k >= 3 and 3 uncensored points
/// (TooFewPoints). Slopes are returned unclamped, negative ones included.
FitResult fit_alpha_per_problem(const RevisionRecord& record);

struct ConfidenceInterval {
  double low = 0.0;
  double high = 0.0;
  std::size_t resamples = 0;  // resamples that produced a finite statistic
};

inline constexpr std::size_t kMinBootstrapResamples = 100;
inline constexpr std::size_t kMinBootstrapRecords = 10;

/// Percentile 95% interval from resampling whole units with replacement.
/// `statistic` receives the resampled unit indices; non-finite values are
/// dropped. Resample r draws from its own derived stream.
ConfidenceInterval bootstrap_ci(
    std::size_t n_units,
    const std::function<double(std::span<const std::size_t>)>& statistic,
    std::size_t resamples, std::uint64_t seed);

/// Convenience overload refitting `fit` on each resampled record set.
ConfidenceInterval bootstrap_ci(
    const std::vector<RevisionRecord>& records,
    const std::function<double(const std::vector<RevisionRecord>&)>& fit,
    std::size_t resamples, std::uint64_t seed);

/// Pooled-slope interval computed from per-record moments (same draws as the
/// generic path, without rebuilding points).
ConfidenceInterval bootstrap_pooled_ci(std::span<const RecordMoments> moments,
                                       std::size_t resamples, std::uint64_t seed);

struct TwoParamFit {
  double alpha_q0 = 0.0;
  double alpha_b = 0.0;
  double intercept = 0.0;
  /// alpha_b / alpha_q0, NaN when alpha_q0 == 0.
  double trust_ratio = 0.0;
  /// +inf for a rank-deficient design.
  double condition_number = 0.0;
  double r_squared = 0.0;
  double delta_r_squared_vs_unified = 0.0;
  bool reliable = true;
  std::size_t n_points = 0;
  std::size_t n_records = 0;
};

/// Two-predictor fit of log q1 on (log q0, log b) with per-record intercepts.
/// A rank-deficient design yields the minimum-norm solution with
/// reliable = false and an infinite condition number instead of an error.
TwoParamFit fit_two_param(const std::vector<RevisionRecord>& records);

/// 2-norm condition number of the fitted design [record indicators | log q0 |
/// log b], each column scaled to unit length. `group` gives the record of
/// each row.
double design_condition_number(std::span<const double> log_q0,
                               std::span<const double> log_b,
                               std::span<const std::size_t> group);

enum class StabilityVerdict { Stable, Marginal, Unstable };
std::string_view to_string(StabilityVerdict v);

struct GeometricMeanResult {
  double geometric_mean = 0.0;
  double product_sq = 0.0;  // Π α_t²
  StabilityVerdict verdict = StabilityVerdict::Marginal;
};

GeometricMeanResult geometric_mean_alpha(std::span<const double> step_alphas);

std::string fit_csv_header();
std::string fit_csv_row(std::string_view label, const FitResult& fit);
std::string two_param_csv_header();
std::string two_param_csv_row(std::string_view label, const TwoParamFit& fit);

}  // namespace alphalaw
