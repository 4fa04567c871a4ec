#pragma once

// Elicitation protocol: generate M candidates, elicit a prior over the K
// options, present the verifier outcome, elicit a posterior. Providers only
// need to turn a prompt into text.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "alphalaw/records.hpp"

namespace alphalaw {

struct SamplingParams {
  double temperature = 0.7;
  int max_tokens = 512;
};

class Provider {
 public:
  virtual ~Provider() = default;
  /// Throws TransportError on failures worth retrying.
  virtual std::string complete(const std::string& prompt, const SamplingParams& params) = 0;
};

struct ProtocolConfig {
  std::size_t m_candidates = 8;
  double temperature = 0.7;
  double evidence_strength = kDefaultStrength;
  std::size_t max_retries = 3;
  double request_timeout_s = 30.0;
  /// First retry waits this long, doubling after each failure.
  double backoff_base_s = 0.5;
  std::size_t concurrency = 4;
  int max_tokens = 512;
  std::string endpoint;
  std::string model_name = "mock";
  std::string dataset = "custom";
  std::string auth_token_env_var = "ALPHALAW_API_KEY";

  void validate() const;
};

struct Problem {
  std::string id;
  std::string prompt;
  std::vector<std::string> options;
  std::size_t correct_index = 0;
};

/// One JSON object per line: {"id", "prompt", "options": [...], "correct_index"}.
std::vector<Problem> read_problems_file(const std::string& path);

struct ElicitationResult {
  BeliefDist probs = BeliefDist::uniform(2);
  SourceMethod source_method = SourceMethod::Llm;
  std::string raw_text;
};

/// Reads k probabilities from a reply. A bare JSON array is taken as is;
/// otherwise the first k decimal numbers in the text are used. Values that
/// are negative, too few, or sum outside [0.9, 1.1] give the uniform
/// distribution flagged as fallback. Accepted values are renormalized.
ElicitationResult parse_probability_response(const std::string& text, std::size_t k);

/// Prompt templates with {{name}} placeholders, one file per protocol step.
struct PromptTemplates {
  std::string generate;
  std::string prior;
  std::string posterior;

  /// Loads generate.txt, prior.txt and posterior.txt from a directory.
  static PromptTemplates load(const std::string& dir);
  /// The template directory shipped with the build.
  static std::string default_dir();
};

/// Replaces every {{key}} with its value; unknown placeholders are left intact.
std::string render_template(const std::string& tmpl,
                            const std::vector<std::pair<std::string, std::string>>& values);

/// Runs the four steps for one problem. Transport failures are retried with
/// exponential backoff; exhausting retries throws CollectionError.
RevisionRecord run_protocol(const Problem& problem, const ProtocolConfig& config,
                            Provider& provider, const PromptTemplates& templates);

struct CollectionFailure {
  std::string problem_id;
  std::string message;
};

struct CollectionOutcome {
  std::vector<RevisionRecord> records;  // in input order
  std::vector<CollectionFailure> failures;
};

/// Collects up to config.concurrency problems at once; output order follows
/// the input order regardless of completion order.
CollectionOutcome collect(const std::vector<Problem>& problems, const ProtocolConfig& config,
                          Provider& provider, const PromptTemplates& templates);

struct MockConfig {
  /// Posterior ∝ q0^alpha_q0 · b^alpha_b; alpha sets both when the pair is unset.
  double alpha = 1.0;
  std::optional<std::pair<double, double>> two_param;
  PriorSpec prior;
  /// Probability that a posterior reply is unparseable text.
  double fail_rate = 0.0;
  std::uint64_t seed = 0;
};

/// Offline provider. Every reply is a pure function of (seed, prompt), so it
/// is safe to share across threads and gives identical output on every run.
class MockProvider final : public Provider {
 public:
  explicit MockProvider(MockConfig config);
  std::string complete(const std::string& prompt, const SamplingParams& params) override;

 private:
  MockConfig config_;
};

/// Chat-completion endpoint over HTTP(S). Request body:
/// {"model", "messages": [{"role": "user", "content"}], "temperature",
/// "max_tokens"}. The reply text is read from choices[0].message.content,
/// then choices[0].text, then a top-level "content" or "text" field.
class HttpProvider final : public Provider {
 public:
  explicit HttpProvider(ProtocolConfig config);
  std::string complete(const std::string& prompt, const SamplingParams& params) override;

 private:
  ProtocolConfig config_;
  std::string scheme_host_port_;
  std::string path_;
  std::string token_;
};

}  // namespace alphalaw
