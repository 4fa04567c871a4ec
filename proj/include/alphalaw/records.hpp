#pragma once

// Revision records: one (q0, b, q1) tuple per problem, their JSONL
// serialization, the data-quality filter and the synthetic generator.
//
// JSONL fields, in serialization order: problem_id, model, dataset, k, q0, b,
// q1, source_method ("llm" | "fallback"), step, correct_index (int | null),
// s (float | null). Unknown fields are kept and written back after these.

#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "alphalaw/evidence.hpp"
#include "alphalaw/simplex.hpp"

namespace alphalaw {

enum class SourceMethod { Llm, Fallback };

std::string_view to_string(SourceMethod m);

struct RevisionRecord {
  std::string problem_id;
  std::string model;
  std::string dataset;
  std::size_t k = 0;
  BeliefDist q0 = BeliefDist::uniform(2);
  EvidenceDist evidence = EvidenceDist::from_probs(std::vector{0.5, 0.5});
  BeliefDist q1 = BeliefDist::uniform(2);
  SourceMethod source_method = SourceMethod::Llm;
  std::size_t step = 1;
  /// Ground-truth answer index, when known.
  std::optional<std::size_t> correct_index;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();

  std::size_t predicted_index() const { return q1.argmax(); }
  /// True when argmax q1 matches the ground truth; nullopt without labels.
  std::optional<bool> is_correct() const;
  /// Checks that q0, b and q1 all have dimension k and step >= 1.
  void validate() const;
};

enum class ParseErrorKind {
  Json,
  MissingField,
  WrongType,
  Dimension,
  Sum,
  Negative,
  Value,
};

std::string_view to_string(ParseErrorKind kind);

struct ParseError {
  std::size_t line = 0;  // 1-based
  ParseErrorKind kind = ParseErrorKind::Json;
  std::string message;
};

struct ParseOutcome {
  std::vector<RevisionRecord> records;
  std::vector<ParseError> errors;
};

/// Streams line by line; a bad line becomes a ParseError and parsing goes on.
ParseOutcome parse_records(std::istream& in);
ParseOutcome parse_records_text(const std::string& text);
/// Throws InvalidInput (message prefixed with the error kind) for a bad line.
RevisionRecord parse_record_line(const std::string& line);

nlohmann::ordered_json to_json(const RevisionRecord& r);
void write_records(std::ostream& out, const std::vector<RevisionRecord>& records);
std::string serialize_records(const std::vector<RevisionRecord>& records);

std::vector<RevisionRecord> read_records_file(const std::string& path,
                                              std::vector<ParseError>* errors);
void write_records_file(const std::string& path,
                        const std::vector<RevisionRecord>& records);

struct FilterPolicy {
  /// Models whose fallback fraction exceeds this are dropped entirely.
  double fallback_rate_threshold = 0.20;
};

struct QualityReport {
  std::size_t total = 0;
  std::size_t kept = 0;
  double fallback_rate = 0.0;
  double invalid_rate = 0.0;
  std::map<std::string, double> per_model_contamination;
  std::vector<std::string> excluded_models;
};

/// `invalid_lines` counts lines rejected by parsing, for invalid_rate.
std::pair<std::vector<RevisionRecord>, QualityReport> quality_filter(
    const std::vector<RevisionRecord>& records, const FilterPolicy& policy = {},
    std::size_t invalid_lines = 0);

enum class PriorMode { Uniform, Dirichlet };

struct PriorSpec {
  PriorMode mode = PriorMode::Uniform;
  double concentration = 0.5;

  /// "uniform" or "dirichlet:<concentration>" ("dirichlet" alone uses 0.5).
  static PriorSpec parse(const std::string& text);
  std::string describe() const;
};

struct SynthConfig {
  std::size_t n = 100;
  std::size_t k = 4;
  double alpha_true = 1.0;
  /// When set, q1 ∝ q0^{alpha_q0}·b^{alpha_b} instead of (q0·b)^alpha_true.
  std::optional<std::pair<double, double>> two_param;
  PriorSpec prior;
  double s = kDefaultStrength;
  double log_noise_sigma = 0.0;
  std::uint64_t seed = 0;
  std::string model = "synthetic";
  std::string dataset = "synthetic";
  /// Fraction of records relabeled as fallback (exact count, random subset).
  double fallback_fraction = 0.0;

  void validate() const;
};

/// q1 = normalize_log(α·(log q0 + log b) + ε), ε ~ N(0, σ²) per coordinate.
/// Record i draws from its own derived stream; output depends only on config.
std::vector<RevisionRecord> synthesize_records(const SynthConfig& config);

/// Iterated protocol: each problem revises `schedule.size()` times with the
/// previous posterior as the new prior and the same encoded evidence; step t
/// uses exponent schedule[t-1]. Records are ordered by problem, then step.
std::vector<RevisionRecord> synthesize_multistep(
    const SynthConfig& config, const std::vector<double>& schedule);

struct SummaryReport {
  std::size_t n_records = 0;
  std::size_t n_fallback = 0;
  std::map<std::size_t, std::size_t> k_histogram;
  std::map<std::pair<std::string, std::string>, std::size_t> group_sizes;
  std::map<std::size_t, std::size_t> step_histogram;
};

SummaryReport dataset_summary(const std::vector<RevisionRecord>& records);

}  // namespace alphalaw
