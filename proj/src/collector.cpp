#include "alphalaw/collector.hpp"

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "alphalaw/dynamics.hpp"
#include "alphalaw/errors.hpp"
#include "alphalaw/parallel.hpp"
#include "alphalaw/random.hpp"

#ifndef ALPHALAW_PROMPT_DIR
#define ALPHALAW_PROMPT_DIR "prompts/v1"
#endif

namespace alphalaw {

namespace {

const std::regex& number_re() {
  static const std::regex re(R"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)");
  return re;
}

std::vector<double> all_numbers(const std::string& text) {
  std::vector<double> out;
  for (std::sregex_iterator it(text.begin(), text.end(), number_re()), end; it != end; ++it) {
    out.push_back(std::strtod(it->str().c_str(), nullptr));
  }
  return out;
}

std::string format_probs(std::span<const double> p) {
  std::string out = "[";
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (i) out += ", ";
    out += fmt::format("{:.17g}", p[i]);
  }
  return out + "]";
}

std::string numbered_options(const std::vector<std::string>& options) {
  std::string out;
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (i) out += '\n';
    out += fmt::format("{}. {}", i + 1, options[i]);
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double unit_draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return static_cast<double>(derive_seed(seed, stream, index) >> 11) * 0x1.0p-53;
}

}  // namespace

void ProtocolConfig::validate() const {
  if (m_candidates < 2) throw InvalidParameter("m_candidates must be >= 2");
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    throw InvalidParameter("temperature must be >= 0");
  }
  if (!(evidence_strength > 0.0 && evidence_strength < 1.0)) {
    throw InvalidParameter("evidence strength must lie in (0, 1)");
  }
  if (concurrency < 1) throw InvalidParameter("concurrency must be >= 1");
  if (!(request_timeout_s > 0.0)) throw InvalidParameter("request timeout must be positive");
  if (!(backoff_base_s >= 0.0)) throw InvalidParameter("backoff base must be >= 0");
}

std::vector<Problem> read_problems_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open problems file '" + path + "'");
  std::vector<Problem> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Problem p;
      p.id = j.at("id").get<std::string>();
      p.prompt = j.at("prompt").get<std::string>();
      p.options = j.at("options").get<std::vector<std::string>>();
      const auto ci = j.at("correct_index").get<std::int64_t>();
      if (p.options.size() < 2) throw InvalidInput("need at least 2 options");
      if (ci < 0 || static_cast<std::size_t>(ci) >= p.options.size()) {
        throw InvalidInput("correct_index out of range");
      }
      p.correct_index = static_cast<std::size_t>(ci);
      out.push_back(std::move(p));
    } catch (const std::exception& e) {
      throw InvalidInput(fmt::format("{}:{}: {}", path, line_no, e.what()));
    }
  }
  return out;
}

ElicitationResult parse_probability_response(const std::string& text, std::size_t k) {
  ElicitationResult res;
  res.raw_text = text;
  res.probs = BeliefDist::uniform(k);
  res.source_method = SourceMethod::Fallback;

  std::optional<std::vector<double>> values;
  const auto strict = nlohmann::json::parse(text, nullptr, false);
  if (!strict.is_discarded() && strict.is_array() && strict.size() == k &&
      std::all_of(strict.begin(), strict.end(), [](const auto& v) { return v.is_number(); })) {
    values = strict.get<std::vector<double>>();
  } else {
    auto nums = all_numbers(text);
    if (nums.size() >= k) {
      nums.resize(k);
      values = std::move(nums);
    }
  }
  if (!values) return res;

  double total = 0.0;
  for (double v : *values) {
    if (!std::isfinite(v) || v < 0.0) return res;
    total += v;
  }
  if (!(total >= 0.9 && total <= 1.1)) return res;
  res.probs = BeliefDist::from_weights(*values);
  res.source_method = SourceMethod::Llm;
  return res;
}

PromptTemplates PromptTemplates::load(const std::string& dir) {
  return {read_file(dir + "/generate.txt"), read_file(dir + "/prior.txt"),
          read_file(dir + "/posterior.txt")};
}

std::string PromptTemplates::default_dir() { return ALPHALAW_PROMPT_DIR; }

std::string render_template(const std::string& tmpl,
                            const std::vector<std::pair<std::string, std::string>>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find("{{", pos);
    if (open == std::string::npos) break;
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string::npos) break;
    out.append(tmpl, pos, open - pos);
    const std::string key = tmpl.substr(open + 2, close - open - 2);
    auto it = std::find_if(values.begin(), values.end(), [&](const auto& kv) { return kv.first == key; });
    if (it != values.end()) {
      out += it->second;
    } else {
      out.append(tmpl, open, close + 2 - open);
    }
    pos = close + 2;
  }
  out.append(tmpl, pos, std::string::npos);
  return out;
}

namespace {

std::string call_with_retries(Provider& provider, const std::string& prompt,
                              const ProtocolConfig& config, const std::string& problem_id) {
  const SamplingParams params{config.temperature, config.max_tokens};
  for (std::size_t attempt = 0;; ++attempt) {
    try {
      return provider.complete(prompt, params);
    } catch (const TransportError& e) {
      if (attempt >= config.max_retries) {
        throw CollectionError(fmt::format("problem {}: giving up after {} attempt(s): {}", problem_id,
                                          attempt + 1, e.what()));
      }
      const double wait = config.backoff_base_s * std::ldexp(1.0, static_cast<int>(attempt));
      if (wait > 0.0) std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    }
  }
}

}  // namespace

RevisionRecord run_protocol(const Problem& problem, const ProtocolConfig& config,
                            Provider& provider, const PromptTemplates& templates) {
  config.validate();
  const std::size_t k = problem.options.size();
  if (k < 2) throw InvalidInput("problem " + problem.id + ": need at least 2 options");
  if (problem.correct_index >= k) throw InvalidInput("problem " + problem.id + ": correct_index out of range");
  const auto evidence = encode_evidence(k, problem.correct_index, config.evidence_strength);

  const std::string options = numbered_options(problem.options);
  const std::string k_text = std::to_string(k);

  std::string candidates;
  for (std::size_t i = 1; i <= config.m_candidates; ++i) {
    const auto prompt = render_template(templates.generate, {{"problem", problem.prompt},
                                                             {"options", options},
                                                             {"candidate_index", std::to_string(i)},
                                                             {"m", std::to_string(config.m_candidates)}});
    const auto text = call_with_retries(provider, prompt, config, problem.id);
    if (i > 1) candidates += '\n';
    candidates += fmt::format("Candidate {}: {}", i, text);
  }

  const auto prior_prompt = render_template(templates.prior, {{"problem", problem.prompt},
                                                              {"options", options},
                                                              {"candidates", candidates},
                                                              {"k", k_text}});
  const auto prior = parse_probability_response(
      call_with_retries(provider, prior_prompt, config, problem.id), k);

  const auto posterior_prompt = render_template(
      templates.posterior, {{"problem", problem.prompt},
                            {"options", options},
                            {"k", k_text},
                            {"prior", format_probs(prior.probs.probs())},
                            {"verified_option", std::to_string(problem.correct_index + 1)},
                            {"s", fmt::format("{}", config.evidence_strength)}});
  const auto posterior = parse_probability_response(
      call_with_retries(provider, posterior_prompt, config, problem.id), k);

  RevisionRecord r;
  r.problem_id = problem.id;
  r.model = config.model_name;
  r.dataset = config.dataset;
  r.k = k;
  r.q0 = prior.probs;
  r.evidence = evidence;
  r.q1 = posterior.probs;
  r.correct_index = problem.correct_index;
  r.source_method = (prior.source_method == SourceMethod::Fallback ||
                     posterior.source_method == SourceMethod::Fallback)
                        ? SourceMethod::Fallback
                        : SourceMethod::Llm;
  r.extra["prior_raw"] = prior.raw_text;
  r.extra["posterior_raw"] = posterior.raw_text;
  return r;
}

CollectionOutcome collect(const std::vector<Problem>& problems, const ProtocolConfig& config,
                          Provider& provider, const PromptTemplates& templates) {
  config.validate();
  std::vector<std::optional<RevisionRecord>> slots(problems.size());
  std::vector<std::optional<std::string>> errors(problems.size());
  parallel_for(
      problems.size(),
      [&](std::size_t i) {
        try {
          slots[i] = run_protocol(problems[i], config, provider, templates);
        } catch (const CollectionError& e) {
          errors[i] = e.what();
        }
      },
      static_cast<unsigned>(config.concurrency));
  CollectionOutcome out;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    if (slots[i]) out.records.push_back(std::move(*slots[i]));
    if (errors[i]) out.failures.push_back({problems[i].id, *errors[i]});
  }
  return out;
}

MockProvider::MockProvider(MockConfig config) : config_(std::move(config)) {
  if (!(config_.fail_rate >= 0.0 && config_.fail_rate <= 1.0)) {
    throw InvalidParameter("mock fail rate must lie in [0, 1]");
  }
  if (config_.two_param) {
    if (!(config_.two_param->first >= 0.0) || !(config_.two_param->second >= 0.0)) {
      throw InvalidParameter("mock exponents must be >= 0");
    }
  } else if (!(config_.alpha >= 0.0) || !std::isfinite(config_.alpha)) {
    throw InvalidParameter("mock alpha must be finite and >= 0");
  }
}

std::string MockProvider::complete(const std::string& prompt, const SamplingParams&) {
  const std::uint64_t h = fnv1a64(prompt);
  std::smatch m;

  static const std::regex k_re(R"(Number of options:\s*(\d+))");
  static const std::regex prior_re(R"(Your earlier probabilities:\s*\[([^\]]*)\])");
  static const std::regex verified_re(R"(Verification result:\s*option\s+(\d+)\s+is correct)");
  static const std::regex strength_re(R"(Verifier reliability:\s*([0-9.eE+-]+))");

  if (!std::regex_search(prompt, m, k_re)) {
    return fmt::format("After working through the problem I choose option {}.",
                       1 + derive_seed(config_.seed, h, 2) % 4);
  }
  const auto k = static_cast<std::size_t>(std::stoul(m[1].str()));
  if (k < 2) return "There are not enough options to answer.";

  std::smatch pm;
  if (!std::regex_search(prompt, pm, prior_re)) {
    if (config_.prior.mode == PriorMode::Uniform) {
      return format_probs(BeliefDist::uniform(k).probs());
    }
    Rng rng(derive_seed(config_.seed, h, 0));
    return format_probs(BeliefDist::from_weights(sample_dirichlet(rng, k, config_.prior.concentration)).probs());
  }

  if (unit_draw(config_.seed, h, 1) < config_.fail_rate) {
    return "I am not sure how to revise these numbers.";
  }
  const auto earlier = all_numbers(pm[1].str());
  std::smatch vm;
  if (earlier.size() != k || !std::regex_search(prompt, vm, verified_re)) {
    return "The request did not contain what I expected.";
  }
  const auto verified = std::stoul(vm[1].str());
  if (verified < 1 || verified > k) return "The verified option does not exist.";
  double s = kDefaultStrength;
  std::smatch sm;
  if (std::regex_search(prompt, sm, strength_re)) s = std::strtod(sm[1].str().c_str(), nullptr);

  const auto q0 = BeliefDist::from_weights(earlier);
  const auto b = encode_evidence(k, verified - 1, s);
  const double a_q0 = config_.two_param ? config_.two_param->first : config_.alpha;
  const double a_b = config_.two_param ? config_.two_param->second : config_.alpha;
  return format_probs(two_param_update(q0, b, a_q0, a_b).probs());
}

HttpProvider::HttpProvider(ProtocolConfig config) : config_(std::move(config)) {
  static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config_.endpoint, m, url_re)) {
    throw InvalidParameter("endpoint must be an http:// or https:// URL, got '" + config_.endpoint + "'");
  }
  scheme_host_port_ = m[1].str();
  path_ = m[2].matched ? m[2].str() : "/";
  if (!config_.auth_token_env_var.empty()) {
    if (const char* t = std::getenv(config_.auth_token_env_var.c_str())) token_ = t;
  }
}

std::string HttpProvider::complete(const std::string& prompt, const SamplingParams& params) {
  httplib::Client client(scheme_host_port_);
  const auto timeout = std::chrono::duration<double>(config_.request_timeout_s);
  const auto usec = std::chrono::duration_cast<std::chrono::microseconds>(timeout);
  client.set_connection_timeout(usec);
  client.set_read_timeout(usec);
  client.set_write_timeout(usec);
  if (!token_.empty()) client.set_bearer_token_auth(token_);

  nlohmann::ordered_json body;
  body["model"] = config_.model_name;
  body["messages"] = nlohmann::ordered_json::array({{{"role", "user"}, {"content", prompt}}});
  body["temperature"] = params.temperature;
  body["max_tokens"] = params.max_tokens;

  auto res = client.Post(path_, body.dump(), "application/json");
  if (!res) {
    throw TransportError(fmt::format("request to {} failed: {}", config_.endpoint,
                                     httplib::to_string(res.error())));
  }
  if (res->status < 200 || res->status >= 300) {
    throw TransportError(fmt::format("{} returned HTTP {}", config_.endpoint, res->status));
  }
  const auto j = nlohmann::json::parse(res->body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw TransportError(fmt::format("{} returned a non-JSON body", config_.endpoint));
  }
  if (auto c = j.find("choices"); c != j.end() && c->is_array() && !c->empty()) {
    const auto& first = (*c)[0];
    if (auto msg = first.find("message"); msg != first.end() && msg->is_object()) {
      if (auto content = msg->find("content"); content != msg->end() && content->is_string()) {
        return content->get<std::string>();
      }
    }
    if (auto text = first.find("text"); text != first.end() && text->is_string()) {
      return text->get<std::string>();
    }
  }
  for (const char* key : {"content", "text"}) {
    if (auto it = j.find(key); it != j.end() && it->is_string()) return it->get<std::string>();
  }
  throw TransportError(fmt::format("{} returned no text content", config_.endpoint));
}

}  // namespace alphalaw
