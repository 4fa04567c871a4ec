#pragma once

// Seeded analysis pipelines over revision records. Every function here is a
// deterministic function of its inputs and seed; worker count never changes
// the output.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "alphalaw/dynamics.hpp"
#include "alphalaw/estimation.hpp"
#include "alphalaw/records.hpp"
#include "alphalaw/stats.hpp"

namespace alphalaw {

struct ExperimentOptions {
  std::uint64_t seed = 0;
  /// 0 skips bootstrap intervals.
  std::size_t bootstrap_resamples = 1000;
  std::size_t permutations = stats::kDefaultPermutations;
};

struct AblationLevel {
  double level = 0.0;
  FitResult fit;
  /// Spread of per-problem slopes, for levels summarized by their mean.
  std::optional<double> alpha_std;
  /// Level-specific diagnostic (see AblationResult::metric_name).
  std::optional<double> metric;
  std::size_t skipped = 0;
};

struct AblationResult {
  std::string factor;
  std::vector<AblationLevel> levels;
  std::string metric_name;
  double test_statistic = 0.0;
  double p_value = 1.0;
  std::string test_method;
  std::vector<std::string> warnings;
};

inline constexpr double kDefaultR2Threshold = 0.3;

/// Per-problem slopes with R² above the threshold, grouped by K. Level fits
/// hold the group mean slope; the test is Welch's F with permuted group
/// labels. Groups left with fewer than 2 records are dropped with a warning.
AblationResult run_k_ablation(const std::vector<RevisionRecord>& records,
                              double r2_threshold, const ExperimentOptions& opts);

/// Refits against flip-corrupted evidence while keeping every original q1.
/// Record i reuses the same random stream at each level, so flipped sets are
/// nested. The metric is the mean KL(b_noisy ‖ b_clean); the test is the OLS
/// slope of α̂ on p_flip with a permutation p-value.
AblationResult run_noise_ablation(const std::vector<RevisionRecord>& records,
                                  const std::vector<double>& flip_grid,
                                  const ExperimentOptions& opts);

/// Re-encodes each record's evidence at every strength in the grid and refits
/// against the fixed q1. Records for which s ≤ 1/K are skipped at that level.
AblationResult run_evidence_sensitivity(const std::vector<RevisionRecord>& records,
                                        const std::vector<double>& s_grid,
                                        const ExperimentOptions& opts);

struct StepSummary {
  std::size_t step = 0;
  std::size_t n = 0;
  double alpha_mean = 0.0;
  double alpha_std = 0.0;
  double ci_low = 0.0;   // 2.5th percentile of per-problem slopes
  double ci_high = 0.0;  // 97.5th percentile
};

struct MultiStepSummary {
  std::vector<StepSummary> per_step;
  double slope = 0.0;
  double intercept = 0.0;
  double slope_p = 1.0;
  double trend_r_squared = 0.0;
  double geo_mean = 0.0;
  StabilityVerdict verdict = StabilityVerdict::Marginal;
  std::size_t skipped = 0;
};

/// Needs at least 3 distinct steps (InsufficientSteps).
MultiStepSummary run_multistep_analysis(const std::vector<RevisionRecord>& records,
                                        const ExperimentOptions& opts);

struct IdentifiabilityConfig {
  std::size_t n_trials = 300;
  std::size_t k = 4;
  std::size_t records_per_trial = 50;
  double alpha_true = 1.170;
  double sigma = 0.0;
  double s = kDefaultStrength;
  std::uint64_t seed = 0;
};

struct IdentifiabilityArm {
  std::string name;
  PriorSpec prior;
  std::size_t trials = 0;
  double median_condition_number = 0.0;
  double reliable_fraction = 0.0;
  double alpha_q0_mean = 0.0;
  double alpha_q0_std = 0.0;
  double alpha_b_mean = 0.0;
  double alpha_b_std = 0.0;
  double unified_alpha_mean = 0.0;
  double unified_alpha_max_error = 0.0;
  double delta_r_squared_median = 0.0;
  double delta_r_squared_max = 0.0;
};

struct IdentifiabilityReport {
  IdentifiabilityConfig config;
  std::vector<IdentifiabilityArm> arms;  // uniform, near_uniform, dirichlet
};

/// Three prior arms: exact uniform, near-uniform (Dirichlet 500) and
/// Dirichlet(0.5). Needs n_trials >= 10.
IdentifiabilityReport run_identifiability(const IdentifiabilityConfig& config);

struct CalibrationRow {
  std::string signal;
  std::size_t n = 0;
  std::optional<double> auroc;
  double ece = 0.0;
  double brier = 0.0;
};

struct CalibrationTable {
  std::vector<CalibrationRow> rows;  // max_prob, margin, entropy, alpha
  std::size_t n_correct = 0;
  std::size_t n_incorrect = 0;
  std::vector<std::string> warnings;
};

/// Scores each labeled record by four signals. Ranking uses max q1, the
/// top-two margin, negated entropy and the raw per-problem slope; ECE and
/// Brier use max q1, the margin, 1 − H/ln K and the slope clipped to [0, 1].
CalibrationTable calibration_compare(const std::vector<RevisionRecord>& records,
                                     std::size_t bins = 10);

struct ReportBundle {
  std::vector<std::pair<std::string, FitResult>> pooled_fits;
  std::vector<std::pair<std::string, TwoParamFit>> two_param_fits;
  std::vector<std::pair<const RevisionRecord*, FitResult>> per_problem;
  std::optional<AblationResult> evidence_sensitivity;
  std::optional<AblationResult> noise_ablation;
  std::optional<AblationResult> k_ablation;
  std::optional<MultiStepSummary> multistep;
  std::optional<CalibrationTable> calibration;
  std::optional<IdentifiabilityReport> identifiability;
  std::optional<Trajectory> trajectory;
  std::optional<SummaryReport> summary;
  std::optional<QualityReport> quality;
};

struct ManifestEntry {
  std::string name;
  std::size_t rows = 0;
  std::string sha256;
};

struct Manifest {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<ManifestEntry> files;
};

std::string sha256_hex(const std::string& bytes);

/// Writes one CSV per present section plus manifest.json. Output bytes depend
/// only on the bundle, seed and config.
Manifest emit_report(const ReportBundle& bundle, const std::string& out_dir,
                     std::uint64_t seed, const nlohmann::ordered_json& config);

void write_ablation_csv(std::ostream& out, const AblationResult& result);
void write_multistep_csv(std::ostream& out, const MultiStepSummary& summary);
void write_calibration_csv(std::ostream& out, const CalibrationTable& table);
void write_identifiability_csv(std::ostream& out, const IdentifiabilityReport& report);

}  // namespace alphalaw
