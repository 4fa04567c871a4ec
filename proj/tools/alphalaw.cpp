// Command-line front end: one analysis pipeline per subcommand.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "alphalaw/collector.hpp"
#include "alphalaw/dynamics.hpp"
#include "alphalaw/errors.hpp"
#include "alphalaw/estimation.hpp"
#include "alphalaw/experiments.hpp"
#include "alphalaw/parallel.hpp"
#include "alphalaw/random.hpp"
#include "alphalaw/records.hpp"
#include "alphalaw/stats.hpp"

namespace al = alphalaw;
using nlohmann::ordered_json;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string out = "out";
  unsigned jobs = 1;
};

// Options that do not change results stay out of the manifest config.
const std::set<std::string> kUnrecordedOptions = {"--help", "--config", "--jobs", "--out"};

ordered_json command_config(const CLI::App& sub, const Globals& g) {
  ordered_json j;
  j["command"] = sub.get_name();
  j["seed"] = g.seed;
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_name();
    if (name.empty() || kUnrecordedOptions.count(name)) continue;
    const std::string key = name.rfind("--", 0) == 0 ? name.substr(2) : name;
    if (opt->count() > 0) {
      const auto& res = opt->reduced_results();
      if (opt->get_expected_max() > 1) {
        j[key] = res;
      } else if (opt->get_type_size() == 0) {
        j[key] = true;
      } else {
        j[key] = res.empty() ? std::string{} : res.front();
      }
    } else {
      j[key] = opt->get_default_str();
    }
  }
  return j;
}

std::vector<al::RevisionRecord> load_records(const std::string& path, std::size_t* invalid = nullptr) {
  std::vector<al::ParseError> errors;
  auto records = al::read_records_file(path, &errors);
  for (const auto& e : errors) {
    fmt::print(stderr, "{}:{}: {}: {}\n", path, e.line, al::to_string(e.kind), e.message);
  }
  if (invalid) *invalid = errors.size();
  if (records.empty()) throw al::InvalidInput("no valid records in '" + path + "'");
  return records;
}

std::vector<al::RevisionRecord> drop_fallback(std::vector<al::RevisionRecord> records) {
  const auto before = records.size();
  std::erase_if(records, [](const auto& r) { return r.source_method == al::SourceMethod::Fallback; });
  if (records.size() != before) {
    fmt::print(stderr, "note: {} fallback record(s) excluded from fits\n", before - records.size());
  }
  if (records.empty()) throw al::InvalidInput("every record is a fallback record");
  return records;
}

al::FitResult pooled_with_ci(const std::vector<al::RevisionRecord>& records, std::size_t resamples,
                             std::uint64_t seed) {
  auto fit = al::fit_alpha_pooled(records);
  if (resamples > 0) {
    if (records.size() < al::kMinBootstrapRecords) {
      fmt::print(stderr, "note: fewer than {} records, bootstrap interval skipped\n",
                 al::kMinBootstrapRecords);
    } else {
      std::vector<al::RecordMoments> moments;
      for (const auto& r : records) moments.push_back(al::record_moments(al::build_regression_points(r)));
      const auto ci = al::bootstrap_pooled_ci(moments, resamples, seed);
      fit.ci_low = ci.low;
      fit.ci_high = ci.high;
    }
  }
  return fit;
}

std::vector<std::pair<std::string, al::FitResult>> grouped_fits(
    const std::vector<al::RevisionRecord>& records, std::size_t resamples, std::uint64_t seed) {
  std::vector<std::pair<std::string, al::FitResult>> out;
  out.emplace_back("all", pooled_with_ci(records, resamples, seed));

  std::map<std::string, std::vector<al::RevisionRecord>> groups;
  for (const auto& r : records) groups[r.model + "/" + r.dataset].push_back(r);
  if (groups.size() < 2) return out;

  std::vector<double> alphas;
  std::uint64_t gi = 1;
  for (const auto& [label, recs] : groups) {
    try {
      auto fit = pooled_with_ci(recs, resamples, al::derive_seed(seed, 0x67, gi++));
      alphas.push_back(fit.alpha);
      out.emplace_back(label, fit);
    } catch (const al::Error& e) {
      fmt::print(stderr, "note: group {} not fitted: {}\n", label, e.what());
    }
  }
  if (alphas.size() >= 2) {
    // Spread across group fits, kept apart from the pooled interval above.
    al::FitResult summary;
    summary.alpha = al::stats::mean(alphas);
    const double sd = al::stats::sample_std(alphas);
    summary.ci_low = summary.alpha - sd;
    summary.ci_high = summary.alpha + sd;
    summary.intercept = std::numeric_limits<double>::quiet_NaN();
    summary.r_squared = std::numeric_limits<double>::quiet_NaN();
    summary.n_records = alphas.size();
    out.emplace_back("group_mean_pm_std", summary);
  }
  return out;
}

void print_certificate(const al::Trajectory& traj) {
  if (traj.schedule.is_constant()) {
    const auto regime = al::classify_regime(traj.schedule.at(0));
    fmt::print("regime: {} (alpha = {})\n", al::to_string(regime.label), traj.schedule.at(0));
  } else {
    const auto g = al::geometric_mean_alpha(traj.schedule.alphas());
    fmt::print("schedule: {} steps, geometric mean {:.6g}, product of squares {:.6g} ({})\n",
               traj.schedule.alphas().size(), g.geometric_mean, g.product_sq,
               al::to_string(g.verdict));
  }
  if (traj.fixed_point) {
    fmt::print("fixed point: [{:.6g}]\n", fmt::join(traj.fixed_point->q_star.probs(), ", "));
  }
  if (!traj.has_distances()) {
    fmt::print("certificate: not available (no fixed point or reference orbit)\n");
    return;
  }
  const auto cert = al::contraction_certificate(traj);
  fmt::print("hilbert contraction: {} resolved step(s), max |ratio - alpha_t| = {:.3g}, exact = {}\n",
             cert.resolved_steps, cert.max_ratio_error, cert.exact_contraction ? "yes" : "no");
  fmt::print("kl bound: {}", cert.kl_bounded ? "holds" : "violated at steps");
  for (auto t : cert.kl_bound_violations) fmt::print(" {}", t);
  fmt::print("\n");
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const auto piece = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(piece, &used));
      if (piece.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(piece);
    } catch (const std::exception&) {
      throw al::InvalidInput("cannot parse number list '" + text + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

void report_manifest(const al::Manifest& m, const std::string& out) {
  for (const auto& f : m.files) fmt::print(stderr, "wrote {}/{} ({} rows)\n", out, f.name, f.rows);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Belief-revision exponent toolkit: simulate, estimate and audit alpha-law updates.",
               "alphalaw"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.set_config("--config", "", "Read options from a TOML/INI file; command-line flags win");
  Globals g;
  app.add_option("--seed", g.seed, "Top-level random seed")->capture_default_str();
  app.add_option("--out", g.out, "Output directory for CSV files and the manifest")->capture_default_str();
  app.add_option("--jobs", g.jobs, "Worker threads (output does not depend on this)")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);

  std::function<void()> run;

  // simulate
  auto* sim = app.add_subcommand("simulate", "Iterate the alpha update and certify contraction");
  struct {
    double alpha = 0.8;
    std::string schedule;
    std::size_t k = 4;
    std::size_t steps = 20;
    double s = al::kDefaultStrength;
    std::size_t correct = 0;
    std::string q0, b, reference;
  } so;
  sim->add_option("--alpha", so.alpha, "Constant exponent")->capture_default_str();
  sim->add_option("--schedule", so.schedule, "Comma-separated per-step exponents (overrides --alpha)");
  sim->add_option("--k", so.k, "Number of options")->capture_default_str();
  sim->add_option("--steps", so.steps, "Number of updates")->capture_default_str();
  sim->add_option("--evidence-s", so.s, "Evidence strength s")->capture_default_str();
  sim->add_option("--correct", so.correct, "Index receiving evidence mass s")->capture_default_str();
  sim->add_option("--q0", so.q0, "Comma-separated starting distribution (default uniform)");
  sim->add_option("--b", so.b, "Comma-separated evidence distribution (overrides --k/--evidence-s)");
  sim->add_option("--reference", so.reference,
                  "Comma-separated start of a reference orbit (used without an isolated fixed point)");
  sim->callback([&] {
    run = [&] {
      const auto evidence = so.b.empty() ? al::encode_evidence(so.k, so.correct, so.s)
                                         : al::EvidenceDist::from_probs(parse_list(so.b));
      const auto q0 = so.q0.empty() ? al::BeliefDist::uniform(evidence.k())
                                    : al::BeliefDist::from_probs(parse_list(so.q0));
      const auto schedule = so.schedule.empty() ? al::AlphaSchedule::constant(so.alpha)
                                                : al::AlphaSchedule::per_step(parse_list(so.schedule));
      std::optional<al::BeliefDist> ref;
      if (!so.reference.empty()) ref = al::BeliefDist::from_probs(parse_list(so.reference));
      al::ReportBundle bundle;
      bundle.trajectory = al::simulate_trajectory(q0, evidence, schedule, so.steps, ref);
      print_certificate(*bundle.trajectory);
      report_manifest(al::emit_report(bundle, g.out, g.seed, command_config(*sim, g)), g.out);
    };
  });

  // estimate
  auto* est = app.add_subcommand("estimate", "Fit the exponent to revision records");
  struct {
    std::string input;
    std::string model = "unified";
    std::size_t bootstrap = 1000;
  } eo;
  est->add_option("--input", eo.input, "Records JSONL file")->required();
  est->add_option("--model", eo.model, "unified or two-param")
      ->capture_default_str()
      ->check(CLI::IsMember({"unified", "two-param"}));
  est->add_option("--bootstrap", eo.bootstrap, "Bootstrap resamples (0 disables intervals)")
      ->capture_default_str();
  est->callback([&] {
    run = [&] {
      const auto records = drop_fallback(load_records(eo.input));
      al::ReportBundle bundle;
      bundle.pooled_fits = grouped_fits(records, eo.bootstrap, g.seed);
      if (eo.model == "two-param") bundle.two_param_fits.emplace_back("all", al::fit_two_param(records));
      bundle.summary = al::dataset_summary(records);
      const auto& all = bundle.pooled_fits.front().second;
      fmt::print("alpha = {:.6g}, R^2 = {:.4f}, n = {} points / {} records\n", all.alpha, all.r_squared,
                 all.n_points, all.n_records);
      report_manifest(al::emit_report(bundle, g.out, g.seed, command_config(*est, g)), g.out);
    };
  });

  // per-problem
  auto* per = app.add_subcommand("per-problem", "Fit the exponent separately for every record");
  std::string per_input;
  per->add_option("--input", per_input, "Records JSONL file")->required();
  per->callback([&] {
    run = [&] {
      const auto records = drop_fallback(load_records(per_input));
      al::ReportBundle bundle;
      std::size_t skipped = 0;
      for (const auto& r : records) {
        try {
          bundle.per_problem.emplace_back(&r, al::fit_alpha_per_problem(r));
        } catch (const al::TooFewPoints&) {
          ++skipped;
        } catch (const al::DegenerateDesign&) {
          ++skipped;
        }
      }
      if (skipped) fmt::print(stderr, "note: {} record(s) could not be fitted individually\n", skipped);
      if (bundle.per_problem.empty()) throw al::InsufficientData("no record supports a per-problem fit");
      report_manifest(al::emit_report(bundle, g.out, g.seed, command_config(*per, g)), g.out);
    };
  });

  // sweep-evidence
  auto* sweep = app.add_subcommand("sweep-evidence", "Refit after re-encoding evidence at each strength");
  struct {
    std::string input;
    std::vector<double> grid = al::default_strength_grid();
    std::size_t bootstrap = 1000;
  } swo;
  sweep->add_option("--input", swo.input, "Records JSONL file")->required();
  sweep->add_option("--grid", swo.grid, "Comma-separated evidence strengths")
      ->delimiter(',')
      ->capture_default_str();
  sweep->add_option("--bootstrap", swo.bootstrap, "Bootstrap resamples (0 disables intervals)")
      ->capture_default_str();
  sweep->callback([&] {
    run = [&] {
      const auto records = drop_fallback(load_records(swo.input));
      al::ExperimentOptions opts{g.seed, swo.bootstrap, al::stats::kDefaultPermutations};
      al::ReportBundle bundle;
      bundle.evidence_sensitivity = al::run_evidence_sensitivity(records, swo.grid, opts);
      for (const auto& w : bundle.evidence_sensitivity->warnings) fmt::print(stderr, "note: {}\n", w);
      report_manifest(al::emit_report(bundle, g.out, g.seed, command_config(*sweep, g)), g.out);
    };
  });

  // ablate-noise
  auto* noise = app.add_subcommand("ablate-noise", "Refit against flip-corrupted evidence");
  struct {
    std::string input;
    std::vector<double> grid{0.0, 0.2, 0.4};
    std::size_t bootstrap = 1000;
  } no;
  noise->add_option("--input", no.input, "Records JSONL file")->required();
  noise->add_option("--grid", no.grid, "Comma-separated flip probabilities")
      ->delimiter(',')
      ->capture_default_str();
  noise->add_option("--bootstrap", no.bootstrap, "Bootstrap resamples (0 disables intervals)")
      ->capture_default_str();
  noise->callback([&] {
    run = [&] {
      const auto records = drop_fallback(load_records(no.input));
      al::ExperimentOptions opts{g.seed, no.bootstrap, al::stats::kDefaultPermutations};
      al::ReportBundle bundle;
      bundle.noise_ablation = al::run_noise_ablation(records, no.grid, opts);
      for (const auto& w : bundle.noise_ablation->warnings) fmt::print(stderr, "note: {}\n", w);
      report_manifest(al::emit_report(bundle, g.out, g.seed, command_config(*noise, g)), g.out);
    };
  });

  // ablate-k
  auto* kab = app.add_subcommand("ablate-k", "Compare per-problem exponents across option counts");
  struct {
    std::string input;
    double r2 = al::kDefaultR2Threshold;
    std::size_t permutations = al::stats::kDefaultPermutations;
  } ko;
  kab->add_option("--input", ko.input, "Records JSONL file")->required();
  kab->add_option("--r2-threshold", ko.r2, "Keep per-problem fits with R^2 above this")->capture_default_str();
  kab->add_option("--permutations", ko.permutations, "Label permutations for the p-value")
      ->capture_default_str();
  kab->callback([&] {
    run = [&] {
      const auto records = drop_fallback(load_records(ko.input));
      al::ExperimentOptions opts{g.seed, 0, ko.permutations};
      al::ReportBundle bundle;
      bundle.k_ablation = al::run_k_ablation(records, ko.r2, opts);
      for (const auto& w : bundle.k_ablation->warnings) fmt::print(stderr, "warning: {}\n", w);
      fmt::print("statistic = {:.6g}, p = {:.4g} ({})\n", bundle.k_ablation->test_statistic,
                 bundle.k_ablation->p_value, bundle.k_ablation->test_method);
      report_manifest(al::emit_report(bundle, g.out, g.seed, command_config(*kab, g)), g.out);
    };
  });

  // multistep
  auto* ms = app.add_subcommand("multistep", "Summarize per-step exponents and their trend");
  struct {
    std::string input;
    std::size_t permutations = al::stats::kDefaultPermutations;
  } mo;
  ms->add_option("--input", mo.input, "Records JSONL file with a step field")->required();
  ms->add_option("--permutations", mo.permutations, "Permutations when exact enumeration is too large")
      ->capture_default_str();
  ms->callback([&] {
    run = [&] {
      const auto records = drop_fallback(load_records(mo.input));
      al::ExperimentOptions opts{g.seed, 0, mo.permutations};
      al::ReportBundle bundle;
      bundle.multistep = al::run_multistep_analysis(records, opts);
      fmt::print("slope = {:.6g}, p = {:.4g}, geometric mean = {:.6g}\n", bundle.multistep->slope,
                 bundle.multistep->slope_p, bundle.multistep->geo_mean);
      report_manifest(al::emit_report(bundle, g.out, g.seed, command_config(*ms, g)), g.out);
    };
  });

  // identifiability
  auto* ident = app.add_subcommand("identifiability", "Two-parameter conditioning across prior arms");
  al::IdentifiabilityConfig io;
  ident->add_option("--trials", io.n_trials, "Synthetic trials per arm")->capture_default_str();
  ident->add_option("--k", io.k, "Number of options")->capture_default_str();
  ident->add_option("--records-per-trial", io.records_per_trial, "Records per trial")->capture_default_str();
  ident->add_option("--alpha", io.alpha_true, "Generating exponent")->capture_default_str();
  ident->add_option("--sigma", io.sigma, "Log-space noise standard deviation")->capture_default_str();
  ident->add_option("--s", io.s, "Evidence strength")->capture_default_str();
  ident->callback([&] {
    run = [&] {
      io.seed = g.seed;
      al::ReportBundle bundle;
      bundle.identifiability = al::run_identifiability(io);
      for (const auto& a : bundle.identifiability->arms) {
        fmt::print("{}: median condition number {:.4g}, max dR^2 {:.3g}\n", a.name,
                   a.median_condition_number, a.delta_r_squared_max);
      }
      report_manifest(al::emit_report(bundle, g.out, g.seed, command_config(*ident, g)), g.out);
    };
  });

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "Compare confidence signals by AUROC, ECE and Brier");
  struct {
    std::string input;
    std::size_t bins = 10;
  } co;
  cal->add_option("--input", co.input, "Records JSONL file with correct_index")->required();
  cal->add_option("--bins", co.bins, "Equal-width ECE bins")->capture_default_str();
  cal->callback([&] {
    run = [&] {
      const auto records = drop_fallback(load_records(co.input));
      al::ReportBundle bundle;
      bundle.calibration = al::calibration_compare(records, co.bins);
      for (const auto& w : bundle.calibration->warnings) fmt::print(stderr, "warning: {}\n", w);
      report_manifest(al::emit_report(bundle, g.out, g.seed, command_config(*cal, g)), g.out);
    };
  });

  // filter
  auto* filt = app.add_subcommand("filter", "Drop fallback records and contaminated models");
  struct {
    std::string input, output;
    double threshold = 0.20;
  } fo;
  filt->add_option("--input", fo.input, "Records JSONL file")->required();
  filt->add_option("--threshold", fo.threshold, "Maximum per-model fallback rate")->capture_default_str();
  filt->add_option("--output", fo.output, "Filtered JSONL (default <out>/filtered.jsonl)");
  filt->callback([&] {
    run = [&] {
      std::size_t invalid = 0;
      const auto records = load_records(fo.input, &invalid);
      auto [kept, report] = al::quality_filter(records, {fo.threshold}, invalid);
      std::filesystem::create_directories(g.out);
      const auto path = fo.output.empty() ? g.out + "/filtered.jsonl" : fo.output;
      al::write_records_file(path, kept);
      for (const auto& m : report.excluded_models) {
        fmt::print(stderr, "excluded model {} (fallback rate {:.3f})\n", m, report.per_model_contamination[m]);
      }
      fmt::print("kept {} of {} records\n", report.kept, report.total);
      al::ReportBundle bundle;
      bundle.quality = report;
      report_manifest(al::emit_report(bundle, g.out, g.seed, command_config(*filt, g)), g.out);
    };
  });

  // synth
  auto* syn = app.add_subcommand("synth", "Generate synthetic revision records");
  al::SynthConfig sc;
  struct {
    std::string prior = "uniform";
    std::string schedule;
    std::string output;
    double alpha_q0 = -1.0, alpha_b = -1.0;
  } sy;
  syn->add_option("--n", sc.n, "Number of problems")->capture_default_str();
  syn->add_option("--k", sc.k, "Number of options")->capture_default_str();
  syn->add_option("--alpha", sc.alpha_true, "Generating exponent")->capture_default_str();
  auto* aq = syn->add_option("--alpha-q0", sy.alpha_q0, "Prior exponent (two-parameter generator)");
  auto* ab = syn->add_option("--alpha-b", sy.alpha_b, "Evidence exponent (two-parameter generator)");
  aq->needs(ab);
  ab->needs(aq);
  syn->add_option("--prior", sy.prior, "uniform or dirichlet:<concentration>")->capture_default_str();
  syn->add_option("--s", sc.s, "Evidence strength")->capture_default_str();
  syn->add_option("--sigma", sc.log_noise_sigma, "Log-space noise standard deviation")->capture_default_str();
  syn->add_option("--fallback-fraction", sc.fallback_fraction, "Fraction relabeled as fallback")
      ->capture_default_str();
  syn->add_option("--model", sc.model, "Model label")->capture_default_str();
  syn->add_option("--dataset", sc.dataset, "Dataset label")->capture_default_str();
  syn->add_option("--schedule", sy.schedule, "Comma-separated per-step exponents (multi-step records)");
  syn->add_option("--output", sy.output, "Records JSONL (default <out>/records.jsonl)");
  syn->callback([&] {
    run = [&] {
      sc.seed = g.seed;
      sc.prior = al::PriorSpec::parse(sy.prior);
      if (sy.alpha_q0 >= 0.0 || sy.alpha_b >= 0.0) sc.two_param = std::pair{sy.alpha_q0, sy.alpha_b};
      const auto records = sy.schedule.empty() ? al::synthesize_records(sc)
                                               : al::synthesize_multistep(sc, parse_list(sy.schedule));
      std::error_code ec;
      std::filesystem::create_directories(g.out, ec);
      const auto path = sy.output.empty() ? g.out + "/records.jsonl" : sy.output;
      al::write_records_file(path, records);
      fmt::print(stderr, "wrote {} ({} records)\n", path, records.size());
    };
  });

  // collect
  auto* col = app.add_subcommand("collect", "Run the elicitation protocol against a provider");
  al::ProtocolConfig pc;
  struct {
    std::string problems, provider = "mock", prompts, output;
    double mock_alpha = 1.0;
    std::string mock_prior = "uniform";
    double mock_fail_rate = 0.0;
  } cl;
  col->add_option("--problems", cl.problems, "Problems JSONL: id, prompt, options, correct_index")->required();
  col->add_option("--provider", cl.provider, "mock or http")
      ->capture_default_str()
      ->check(CLI::IsMember({"mock", "http"}));
  col->add_option("--endpoint", pc.endpoint, "Chat-completion URL (http provider)");
  col->add_option("--model-name", pc.model_name, "Model name sent to the endpoint and stored in records")
      ->capture_default_str();
  col->add_option("--dataset", pc.dataset, "Dataset label for records")->capture_default_str();
  col->add_option("--token-env", pc.auth_token_env_var, "Environment variable holding the bearer token")
      ->capture_default_str();
  col->add_option("--m", pc.m_candidates, "Candidate solutions per problem")->capture_default_str();
  col->add_option("--temperature", pc.temperature, "Sampling temperature")->capture_default_str();
  col->add_option("--s", pc.evidence_strength, "Evidence strength")->capture_default_str();
  col->add_option("--retries", pc.max_retries, "Retries per request")->capture_default_str();
  col->add_option("--timeout", pc.request_timeout_s, "Request timeout in seconds")->capture_default_str();
  col->add_option("--backoff", pc.backoff_base_s, "First retry delay in seconds, doubling")
      ->capture_default_str();
  col->add_option("--concurrency", pc.concurrency, "Problems collected at once")->capture_default_str();
  col->add_option("--prompts", cl.prompts, "Prompt template directory (default: the shipped templates)");
  col->add_option("--mock-alpha", cl.mock_alpha, "Exponent followed by the mock provider")
      ->capture_default_str();
  col->add_option("--mock-prior", cl.mock_prior, "Mock prior: uniform or dirichlet:<concentration>")
      ->capture_default_str();
  col->add_option("--mock-fail-rate", cl.mock_fail_rate, "Probability of an unparseable mock posterior")
      ->capture_default_str();
  col->add_option("--output", cl.output, "Records JSONL (default <out>/collected.jsonl)");
  col->callback([&] {
    run = [&] {
      const auto problems = al::read_problems_file(cl.problems);
      const auto templates =
          al::PromptTemplates::load(cl.prompts.empty() ? al::PromptTemplates::default_dir() : cl.prompts);
      std::unique_ptr<al::Provider> provider;
      if (cl.provider == "mock") {
        al::MockConfig mc;
        mc.alpha = cl.mock_alpha;
        mc.prior = al::PriorSpec::parse(cl.mock_prior);
        mc.fail_rate = cl.mock_fail_rate;
        mc.seed = g.seed;
        provider = std::make_unique<al::MockProvider>(mc);
      } else {
        provider = std::make_unique<al::HttpProvider>(pc);
      }
      const auto outcome = al::collect(problems, pc, *provider, templates);
      std::error_code ec;
      std::filesystem::create_directories(g.out, ec);
      const auto path = cl.output.empty() ? g.out + "/collected.jsonl" : cl.output;
      al::write_records_file(path, outcome.records);
      fmt::print(stderr, "wrote {} ({} records)\n", path, outcome.records.size());
      for (const auto& f : outcome.failures) fmt::print(stderr, "failed {}: {}\n", f.problem_id, f.message);
      if (!outcome.failures.empty()) {
        throw al::CollectionError(fmt::format("{} problem(s) failed", outcome.failures.size()));
      }
    };
  });

  // report
  auto* rep = app.add_subcommand("report", "Run every applicable analysis and write all tables");
  struct {
    std::string input;
    std::size_t bootstrap = 1000;
    std::size_t permutations = al::stats::kDefaultPermutations;
    double r2 = al::kDefaultR2Threshold;
  } ro;
  rep->add_option("--input", ro.input, "Records JSONL file")->required();
  rep->add_option("--bootstrap", ro.bootstrap, "Bootstrap resamples (0 disables intervals)")
      ->capture_default_str();
  rep->add_option("--permutations", ro.permutations, "Permutations for p-values")->capture_default_str();
  rep->add_option("--r2-threshold", ro.r2, "Per-problem R^2 filter for the K comparison")
      ->capture_default_str();
  rep->callback([&] {
    run = [&] {
      std::size_t invalid = 0;
      const auto raw = load_records(ro.input, &invalid);
      al::ReportBundle bundle;
      bundle.quality = al::quality_filter(raw, {}, invalid).second;
      const auto records = drop_fallback(raw);
      bundle.summary = al::dataset_summary(records);
      const al::ExperimentOptions opts{g.seed, ro.bootstrap, ro.permutations};
      auto attempt = [](const char* what, auto&& fn) {
        try {
          fn();
        } catch (const al::Error& e) {
          fmt::print(stderr, "note: {} skipped: {}\n", what, e.what());
        }
      };
      attempt("pooled fit", [&] { bundle.pooled_fits = grouped_fits(records, ro.bootstrap, g.seed); });
      attempt("two-parameter fit", [&] { bundle.two_param_fits.emplace_back("all", al::fit_two_param(records)); });
      for (const auto& r : records) {
        try {
          bundle.per_problem.emplace_back(&r, al::fit_alpha_per_problem(r));
        } catch (const al::Error&) {
        }
      }
      if (bundle.summary->k_histogram.size() >= 2) {
        attempt("K comparison", [&] { bundle.k_ablation = al::run_k_ablation(records, ro.r2, opts); });
      }
      if (bundle.summary->step_histogram.size() >= 3) {
        attempt("multi-step analysis", [&] { bundle.multistep = al::run_multistep_analysis(records, opts); });
      }
      const bool encoded = std::all_of(records.begin(), records.end(), [](const auto& r) {
        return r.evidence.correct_index && r.evidence.strength;
      });
      if (encoded) {
        attempt("evidence sweep", [&] {
          bundle.evidence_sensitivity = al::run_evidence_sensitivity(records, al::default_strength_grid(), opts);
        });
        attempt("noise ablation", [&] {
          bundle.noise_ablation = al::run_noise_ablation(records, {0.0, 0.2, 0.4}, opts);
        });
      }
      if (std::any_of(records.begin(), records.end(), [](const auto& r) { return r.correct_index.has_value(); })) {
        attempt("calibration", [&] { bundle.calibration = al::calibration_compare(records); });
      }
      report_manifest(al::emit_report(bundle, g.out, g.seed, command_config(*rep, g)), g.out);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fmt::print(stderr, "error: {}\n\n", e.what());
    const CLI::App* failing = &app;
    for (const auto* sub : app.get_subcommands()) failing = sub;
    std::cerr << failing->help();
    return 1;
  }

  al::set_default_jobs(g.jobs);
  try {
    if (run) run();
    return 0;
  } catch (const al::IoError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const al::TransportError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const al::CollectionError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
}
