#include "alphalaw/records.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "alphalaw/errors.hpp"
#include "alphalaw/random.hpp"

namespace alphalaw {

using nlohmann::ordered_json;

namespace {

constexpr double kSumTol = 1e-6;

struct LineError {
  ParseErrorKind kind;
  std::string message;
};

[[noreturn]] void fail(ParseErrorKind kind, std::string message) {
  throw LineError{kind, std::move(message)};
}

const ordered_json& require(const ordered_json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(ParseErrorKind::MissingField, fmt::format("missing field '{}'", key));
  return *it;
}

std::string require_string(const ordered_json& obj, const char* key) {
  const auto& v = require(obj, key);
  if (!v.is_string()) fail(ParseErrorKind::WrongType, fmt::format("'{}' must be a string", key));
  return v.get<std::string>();
}

std::size_t to_index(const ordered_json& v, const char* key) {
  if (!v.is_number_integer()) {
    fail(ParseErrorKind::WrongType, fmt::format("'{}' must be an integer", key));
  }
  const auto raw = v.get<std::int64_t>();
  if (raw < 0) fail(ParseErrorKind::Value, fmt::format("'{}' must be non-negative", key));
  return static_cast<std::size_t>(raw);
}

std::vector<double> require_probs(const ordered_json& obj, const char* key,
                                  std::size_t k) {
  const auto& v = require(obj, key);
  if (!v.is_array()) fail(ParseErrorKind::WrongType, fmt::format("'{}' must be an array", key));
  if (v.size() != k) {
    fail(ParseErrorKind::Dimension,
         fmt::format("'{}' has {} entries, expected k = {}", key, v.size(), k));
  }
  std::vector<double> out;
  out.reserve(k);
  double total = 0.0;
  for (const auto& e : v) {
    if (!e.is_number()) fail(ParseErrorKind::WrongType, fmt::format("'{}' entries must be numbers", key));
    const double p = e.get<double>();
    if (!std::isfinite(p)) fail(ParseErrorKind::Value, fmt::format("'{}' has a non-finite entry", key));
    if (p < 0.0) fail(ParseErrorKind::Negative, fmt::format("'{}' has a negative entry", key));
    total += p;
    out.push_back(p);
  }
  if (std::abs(total - 1.0) > kSumTol) {
    fail(ParseErrorKind::Sum, fmt::format("'{}' sums to {:.9g}", key, total));
  }
  return out;
}

const char* const kKnownFields[] = {"problem_id", "model", "dataset", "k",
                                    "q0", "b", "q1", "source_method",
                                    "step", "correct_index", "s"};

bool is_known(const std::string& key) {
  return std::any_of(std::begin(kKnownFields), std::end(kKnownFields),
                     [&](const char* f) { return key == f; });
}

}  // namespace

std::string_view to_string(SourceMethod m) {
  return m == SourceMethod::Llm ? "llm" : "fallback";
}

std::string_view to_string(ParseErrorKind kind) {
  switch (kind) {
    case ParseErrorKind::Json: return "json";
    case ParseErrorKind::MissingField: return "missing_field";
    case ParseErrorKind::WrongType: return "wrong_type";
    case ParseErrorKind::Dimension: return "dimension";
    case ParseErrorKind::Sum: return "sum";
    case ParseErrorKind::Negative: return "negative";
    case ParseErrorKind::Value: return "value";
  }
  return "unknown";
}

std::optional<bool> RevisionRecord::is_correct() const {
  if (!correct_index) return std::nullopt;
  return predicted_index() == *correct_index;
}

void RevisionRecord::validate() const {
  if (k < 2) throw InvalidInput("record " + problem_id + ": k must be >= 2");
  if (q0.k() != k || evidence.k() != k || q1.k() != k) {
    throw DimensionError("record " + problem_id + ": q0, b, q1 must have dimension k");
  }
  if (step < 1) throw InvalidInput("record " + problem_id + ": step must be >= 1");
  if (correct_index && *correct_index >= k) {
    throw InvalidInput("record " + problem_id + ": correct_index out of range");
  }
}

namespace {

RevisionRecord parse_line(const std::string& line) {
  ordered_json obj;
  try {
    obj = ordered_json::parse(line);
  } catch (const ordered_json::parse_error& e) {
    fail(ParseErrorKind::Json, e.what());
  }
  if (!obj.is_object()) fail(ParseErrorKind::Json, "line is not a JSON object");

  RevisionRecord r;
  r.problem_id = require_string(obj, "problem_id");
  r.model = require_string(obj, "model");
  r.dataset = require_string(obj, "dataset");
  r.k = to_index(require(obj, "k"), "k");
  if (r.k < 2) fail(ParseErrorKind::Value, "k must be >= 2");

  const auto q0 = require_probs(obj, "q0", r.k);
  const auto b = require_probs(obj, "b", r.k);
  const auto q1 = require_probs(obj, "q1", r.k);

  const auto method = require_string(obj, "source_method");
  if (method == "llm") {
    r.source_method = SourceMethod::Llm;
  } else if (method == "fallback") {
    r.source_method = SourceMethod::Fallback;
  } else {
    fail(ParseErrorKind::Value, "source_method must be 'llm' or 'fallback'");
  }

  if (auto it = obj.find("step"); it != obj.end() && !it->is_null()) {
    r.step = to_index(*it, "step");
    if (r.step < 1) fail(ParseErrorKind::Value, "step must be >= 1");
  }
  if (auto it = obj.find("correct_index"); it != obj.end() && !it->is_null()) {
    r.correct_index = to_index(*it, "correct_index");
    if (*r.correct_index >= r.k) fail(ParseErrorKind::Value, "correct_index out of range");
  }
  std::optional<double> s;
  if (auto it = obj.find("s"); it != obj.end() && !it->is_null()) {
    if (!it->is_number()) fail(ParseErrorKind::WrongType, "'s' must be a number");
    s = it->get<double>();
    if (!(*s > 0.0 && *s < 1.0)) fail(ParseErrorKind::Value, "'s' must lie in (0, 1)");
  }

  r.q0 = BeliefDist::from_probs(q0, kSumTol);
  r.q1 = BeliefDist::from_probs(q1, kSumTol);
  r.evidence = EvidenceDist::from_probs(b);
  if (s) {
    r.evidence.strength = s;
    r.evidence.correct_index = r.evidence.dist.argmax();
  }
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!is_known(it.key())) r.extra[it.key()] = it.value();
  }
  return r;
}

}  // namespace

RevisionRecord parse_record_line(const std::string& line) {
  try {
    return parse_line(line);
  } catch (const LineError& e) {
    throw InvalidInput(std::string(to_string(e.kind)) + ": " + e.message);
  }
}

ParseOutcome parse_records(std::istream& in) {
  ParseOutcome out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      out.records.push_back(parse_line(line));
    } catch (const LineError& e) {
      out.errors.push_back({line_no, e.kind, e.message});
    } catch (const Error& e) {
      out.errors.push_back({line_no, ParseErrorKind::Value, e.what()});
    }
  }
  return out;
}

ParseOutcome parse_records_text(const std::string& text) {
  std::istringstream in(text);
  return parse_records(in);
}

ordered_json to_json(const RevisionRecord& r) {
  ordered_json j;
  j["problem_id"] = r.problem_id;
  j["model"] = r.model;
  j["dataset"] = r.dataset;
  j["k"] = r.k;
  j["q0"] = std::vector<double>(r.q0.probs().begin(), r.q0.probs().end());
  j["b"] = std::vector<double>(r.evidence.probs().begin(), r.evidence.probs().end());
  j["q1"] = std::vector<double>(r.q1.probs().begin(), r.q1.probs().end());
  j["source_method"] = std::string(to_string(r.source_method));
  j["step"] = r.step;
  j["correct_index"] = r.correct_index ? ordered_json(*r.correct_index) : ordered_json(nullptr);
  j["s"] = r.evidence.strength ? ordered_json(*r.evidence.strength) : ordered_json(nullptr);
  for (auto it = r.extra.begin(); it != r.extra.end(); ++it) {
    if (!is_known(it.key())) j[it.key()] = it.value();
  }
  return j;
}

void write_records(std::ostream& out, const std::vector<RevisionRecord>& records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

std::string serialize_records(const std::vector<RevisionRecord>& records) {
  std::ostringstream out;
  write_records(out, records);
  return out.str();
}

std::vector<RevisionRecord> read_records_file(const std::string& path,
                                              std::vector<ParseError>* errors) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open records file '" + path + "'");
  auto outcome = parse_records(in);
  if (errors) *errors = std::move(outcome.errors);
  return std::move(outcome.records);
}

void write_records_file(const std::string& path,
                        const std::vector<RevisionRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write records file '" + path + "'");
  write_records(out, records);
  if (!out) throw IoError("write failed for '" + path + "'");
}

std::pair<std::vector<RevisionRecord>, QualityReport> quality_filter(
    const std::vector<RevisionRecord>& records, const FilterPolicy& policy,
    std::size_t invalid_lines) {
  QualityReport rep;
  rep.total = records.size();

  std::map<std::string, std::pair<std::size_t, std::size_t>> per_model;
  std::size_t fallback = 0;
  for (const auto& r : records) {
    auto& [n, fb] = per_model[r.model];
    ++n;
    if (r.source_method == SourceMethod::Fallback) {
      ++fb;
      ++fallback;
    }
  }
  for (const auto& [model, counts] : per_model) {
    const double rate = static_cast<double>(counts.second) / static_cast<double>(counts.first);
    rep.per_model_contamination[model] = rate;
    if (rate > policy.fallback_rate_threshold) rep.excluded_models.push_back(model);
  }

  std::vector<RevisionRecord> kept;
  for (const auto& r : records) {
    if (r.source_method != SourceMethod::Llm) continue;
    if (std::find(rep.excluded_models.begin(), rep.excluded_models.end(), r.model) !=
        rep.excluded_models.end()) {
      continue;
    }
    kept.push_back(r);
  }
  rep.kept = kept.size();
  rep.fallback_rate = rep.total ? static_cast<double>(fallback) / static_cast<double>(rep.total) : 0.0;
  const std::size_t seen = rep.total + invalid_lines;
  rep.invalid_rate = seen ? static_cast<double>(invalid_lines) / static_cast<double>(seen) : 0.0;
  return {std::move(kept), std::move(rep)};
}

PriorSpec PriorSpec::parse(const std::string& text) {
  if (text == "uniform") return {PriorMode::Uniform, 0.5};
  if (text == "dirichlet") return {PriorMode::Dirichlet, 0.5};
  const std::string prefix = "dirichlet:";
  if (text.rfind(prefix, 0) == 0) {
    try {
      std::size_t used = 0;
      const double c = std::stod(text.substr(prefix.size()), &used);
      if (used == text.size() - prefix.size() && c > 0.0 && std::isfinite(c)) {
        return {PriorMode::Dirichlet, c};
      }
    } catch (const std::exception&) {
    }
  }
  throw InvalidParameter("prior must be 'uniform' or 'dirichlet:<c>' with c > 0, got '" + text + "'");
}

std::string PriorSpec::describe() const {
  return mode == PriorMode::Uniform ? "uniform" : fmt::format("dirichlet:{}", concentration);
}

void SynthConfig::validate() const {
  if (n < 1) throw InvalidParameter("n must be >= 1");
  if (k < 2) throw InvalidParameter("k must be >= 2");
  if (!(alpha_true >= 0.0) || !std::isfinite(alpha_true)) {
    throw InvalidParameter("alpha must be finite and >= 0");
  }
  if (two_param && (!(two_param->first >= 0.0) || !(two_param->second >= 0.0))) {
    throw InvalidParameter("two-parameter exponents must be >= 0");
  }
  if (!(log_noise_sigma >= 0.0) || !std::isfinite(log_noise_sigma)) {
    throw InvalidParameter("sigma must be finite and >= 0");
  }
  if (!(fallback_fraction >= 0.0 && fallback_fraction <= 1.0)) {
    throw InvalidParameter("fallback fraction must lie in [0, 1]");
  }
  // encode_evidence validates s against k.
  (void)encode_evidence(k, 0, s);
}

namespace {

BeliefDist draw_prior(Rng& rng, std::size_t k, const PriorSpec& prior) {
  if (prior.mode == PriorMode::Uniform) return BeliefDist::uniform(k);
  return BeliefDist::from_weights(sample_dirichlet(rng, k, prior.concentration));
}

BeliefDist draw_posterior(Rng& rng, const BeliefDist& q0, const EvidenceDist& b,
                          double alpha_q0, double alpha_b, double sigma) {
  const auto lq = q0.log_probs();
  const auto lb = b.log_probs();
  std::vector<double> w(q0.k());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = alpha_q0 * lq[i] + alpha_b * lb[i];
  if (sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, sigma);
    for (double& v : w) v += noise(rng);
  }
  return normalize_log(w);
}

void mark_fallbacks(std::vector<RevisionRecord>& records, double fraction,
                    std::uint64_t seed) {
  const auto count = static_cast<std::size_t>(
      std::floor(fraction * static_cast<double>(records.size()) + 0.5));
  if (count == 0) return;
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 2, 0));
  shuffle_indices(rng, order);
  for (std::size_t i = 0; i < count; ++i) {
    auto& r = records[order[i]];
    r.source_method = SourceMethod::Fallback;
    r.q1 = BeliefDist::uniform(r.k);
  }
}

}  // namespace

std::vector<RevisionRecord> synthesize_records(const SynthConfig& config) {
  config.validate();
  const double a_q0 = config.two_param ? config.two_param->first : config.alpha_true;
  const double a_b = config.two_param ? config.two_param->second : config.alpha_true;

  std::vector<RevisionRecord> out;
  out.reserve(config.n);
  for (std::size_t i = 0; i < config.n; ++i) {
    Rng rng(derive_seed(config.seed, 1, i));
    RevisionRecord r;
    r.problem_id = fmt::format("synth-{}-{}", config.seed, i);
    r.model = config.model;
    r.dataset = config.dataset;
    r.k = config.k;
    r.q0 = draw_prior(rng, config.k, config.prior);
    const auto correct = static_cast<std::size_t>(rng() % config.k);
    r.correct_index = correct;
    r.evidence = encode_evidence(config.k, correct, config.s);
    r.q1 = draw_posterior(rng, r.q0, r.evidence, a_q0, a_b, config.log_noise_sigma);
    out.push_back(std::move(r));
  }
  mark_fallbacks(out, config.fallback_fraction, config.seed);
  return out;
}

std::vector<RevisionRecord> synthesize_multistep(
    const SynthConfig& config, const std::vector<double>& schedule) {
  config.validate();
  if (schedule.empty()) throw InvalidParameter("multi-step schedule is empty");
  for (double a : schedule) {
    if (!(a > 0.0) || !std::isfinite(a)) throw InvalidParameter("schedule entries must be positive");
  }
  std::vector<RevisionRecord> out;
  out.reserve(config.n * schedule.size());
  for (std::size_t i = 0; i < config.n; ++i) {
    Rng rng(derive_seed(config.seed, 3, i));
    BeliefDist prior = draw_prior(rng, config.k, config.prior);
    const auto correct = static_cast<std::size_t>(rng() % config.k);
    const auto b = encode_evidence(config.k, correct, config.s);
    for (std::size_t t = 0; t < schedule.size(); ++t) {
      RevisionRecord r;
      r.problem_id = fmt::format("synth-{}-{}", config.seed, i);
      r.model = config.model;
      r.dataset = config.dataset;
      r.k = config.k;
      r.q0 = prior;
      r.correct_index = correct;
      r.evidence = b;
      r.q1 = draw_posterior(rng, prior, b, schedule[t], schedule[t], config.log_noise_sigma);
      r.step = t + 1;
      prior = r.q1;
      out.push_back(std::move(r));
    }
  }
  return out;
}

SummaryReport dataset_summary(const std::vector<RevisionRecord>& records) {
  SummaryReport rep;
  rep.n_records = records.size();
  for (const auto& r : records) {
    if (r.source_method == SourceMethod::Fallback) ++rep.n_fallback;
    ++rep.k_histogram[r.k];
    ++rep.group_sizes[{r.model, r.dataset}];
    ++rep.step_histogram[r.step];
  }
  return rep;
}

}  // namespace alphalaw
