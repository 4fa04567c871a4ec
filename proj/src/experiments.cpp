#include "alphalaw/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "alphalaw/csv.hpp"
#include "alphalaw/errors.hpp"
#include "alphalaw/parallel.hpp"
#include "alphalaw/random.hpp"

namespace alphalaw {

namespace {

constexpr std::uint64_t kNoiseStream = 0x6e6f6973ULL;
constexpr std::uint64_t kLevelStream = 0x6c76ULL;
constexpr std::uint64_t kTestStream = 0x74657374ULL;
constexpr std::uint64_t kArmStream = 0x61726dULL;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::optional<std::size_t> evidence_index(const RevisionRecord& r) {
  if (r.evidence.correct_index) return r.evidence.correct_index;
  return r.correct_index;
}

void attach_ci(FitResult& fit, std::span<const RecordMoments> moments,
               const ExperimentOptions& opts, std::uint64_t level_index) {
  if (opts.bootstrap_resamples == 0) return;
  std::size_t contributing = 0;
  for (const auto& m : moments) contributing += m.n > 0 ? 1 : 0;
  if (contributing < kMinBootstrapRecords) return;
  const auto ci = bootstrap_pooled_ci(moments, opts.bootstrap_resamples,
                                      derive_seed(opts.seed, kLevelStream, level_index));
  fit.ci_low = ci.low;
  fit.ci_high = ci.high;
}

void slope_test(AblationResult& res, const ExperimentOptions& opts) {
  std::vector<double> x, y;
  for (const auto& l : res.levels) {
    if (std::isfinite(l.fit.alpha)) {
      x.push_back(l.level);
      y.push_back(l.fit.alpha);
    }
  }
  if (x.size() < 3) {
    res.test_statistic = x.size() == 2 ? (y[1] - y[0]) / (x[1] - x[0]) : 0.0;
    res.p_value = 1.0;
    res.test_method = "ols_slope(too few levels for a test)";
    return;
  }
  const auto line = stats::fit_line(x, y);
  const auto perm = stats::slope_permutation_test(x, y, derive_seed(opts.seed, kTestStream, 0),
                                                  opts.permutations);
  res.test_statistic = line.slope;
  res.p_value = perm.p_value;
  res.test_method = perm.exact ? fmt::format("ols_slope,exact_permutation({})", perm.permutations)
                               : fmt::format("ols_slope,permutation({})", perm.permutations);
}

}  // namespace

AblationResult run_k_ablation(const std::vector<RevisionRecord>& records,
                              double r2_threshold, const ExperimentOptions& opts) {
  AblationResult res;
  res.factor = "k";

  std::vector<std::optional<FitResult>> fits(records.size());
  parallel_for(records.size(), [&](std::size_t i) {
    try {
      fits[i] = fit_alpha_per_problem(records[i]);
    } catch (const TooFewPoints&) {
    } catch (const DegenerateDesign&) {
    }
  });

  std::map<std::size_t, std::vector<FitResult>> groups;
  std::map<std::size_t, std::size_t> skipped;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (fits[i] && fits[i]->r_squared > r2_threshold) {
      groups[records[i].k].push_back(*fits[i]);
    } else {
      ++skipped[records[i].k];
    }
  }

  std::vector<double> values;
  std::vector<std::size_t> labels;
  for (const auto& [k, group] : groups) {
    if (group.size() < 2) {
      res.warnings.push_back(fmt::format("k = {}: only {} record(s) pass the R² filter; level dropped",
                                         k, group.size()));
      continue;
    }
    AblationLevel lvl;
    lvl.level = static_cast<double>(k);
    std::vector<double> alphas, r2;
    std::size_t points = 0;
    for (const auto& f : group) {
      alphas.push_back(f.alpha);
      r2.push_back(f.r_squared);
      points += f.n_points;
    }
    lvl.fit.alpha = stats::mean(alphas);
    lvl.fit.r_squared = stats::mean(r2);
    lvl.fit.intercept = kNaN;
    lvl.fit.n_points = points;
    lvl.fit.n_records = group.size();
    lvl.fit.method = FitMethod::PerProblem;
    lvl.alpha_std = stats::sample_std(alphas);
    lvl.skipped = skipped[k];
    const std::size_t label = res.levels.size();
    for (double a : alphas) {
      values.push_back(a);
      labels.push_back(label);
    }
    res.levels.push_back(lvl);
  }

  if (res.levels.size() < 2) {
    res.test_statistic = 0.0;
    res.p_value = 1.0;
    res.test_method = "none(single level)";
    return res;
  }
  const auto perm = stats::f_permutation_test(values, labels,
                                              derive_seed(opts.seed, kTestStream, 1), opts.permutations,
                                              stats::GroupStatistic::WelchF);
  res.test_statistic = perm.statistic;
  res.p_value = perm.p_value;
  res.test_method = fmt::format("welch_f,{}permutation({})", perm.exact ? "exact_" : "",
                                perm.permutations);
  return res;
}

AblationResult run_noise_ablation(const std::vector<RevisionRecord>& records,
                                  const std::vector<double>& flip_grid,
                                  const ExperimentOptions& opts) {
  AblationResult res;
  res.factor = "p_flip";
  res.metric_name = "mean_kl_b_noisy_b_clean";

  std::vector<const RevisionRecord*> usable;
  std::size_t missing = 0;
  for (const auto& r : records) {
    if (r.evidence.correct_index && r.evidence.strength) {
      usable.push_back(&r);
    } else {
      ++missing;
    }
  }
  if (missing > 0) {
    res.warnings.push_back(fmt::format("{} record(s) without an evidence encoding skipped", missing));
  }

  for (std::size_t li = 0; li < flip_grid.size(); ++li) {
    const double p = flip_grid[li];
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidParameter("flip probabilities must lie in [0, 1]");
    std::vector<RecordMoments> moments(usable.size());
    std::vector<double> kl(usable.size(), 0.0);
    parallel_for(usable.size(), [&](std::size_t i) {
      const auto& r = *usable[i];
      Rng rng(derive_seed(opts.seed, kNoiseStream, i));
      const auto noisy = inject_flip_noise(r.evidence, p, rng);
      moments[i] = record_moments(build_regression_points(r, noisy));
      kl[i] = kl_divergence(noisy.dist, r.evidence.dist).value;
    });
    AblationLevel lvl;
    lvl.level = p;
    lvl.fit = fit_from_moments(moments);
    attach_ci(lvl.fit, moments, opts, li);
    lvl.metric = usable.empty() ? kNaN : stats::mean(kl);
    lvl.skipped = missing;
    res.levels.push_back(lvl);
  }
  slope_test(res, opts);
  return res;
}

AblationResult run_evidence_sensitivity(const std::vector<RevisionRecord>& records,
                                        const std::vector<double>& s_grid,
                                        const ExperimentOptions& opts) {
  AblationResult res;
  res.factor = "s";
  for (std::size_t li = 0; li < s_grid.size(); ++li) {
    const double s = s_grid[li];
    std::vector<RecordMoments> moments(records.size());
    std::vector<char> used(records.size(), 0);
    parallel_for(records.size(), [&](std::size_t i) {
      const auto& r = records[i];
      const auto idx = evidence_index(r);
      if (!idx || !(s > 1.0 / static_cast<double>(r.k)) || !(s < 1.0)) return;
      moments[i] = record_moments(build_regression_points(r, encode_evidence(r.k, *idx, s)));
      used[i] = 1;
    });
    AblationLevel lvl;
    lvl.level = s;
    lvl.skipped = records.size() - static_cast<std::size_t>(std::count(used.begin(), used.end(), 1));
    lvl.fit = fit_from_moments(moments);
    attach_ci(lvl.fit, moments, opts, li);
    res.levels.push_back(lvl);
    if (lvl.skipped > 0) {
      res.warnings.push_back(fmt::format("s = {}: {} record(s) skipped", s, lvl.skipped));
    }
  }
  slope_test(res, opts);
  return res;
}

MultiStepSummary run_multistep_analysis(const std::vector<RevisionRecord>& records,
                                        const ExperimentOptions& opts) {
  std::map<std::size_t, std::vector<std::size_t>> by_step;
  for (std::size_t i = 0; i < records.size(); ++i) by_step[records[i].step].push_back(i);
  if (by_step.size() < 3) {
    throw InsufficientSteps(fmt::format("multi-step analysis needs at least 3 distinct steps, got {}",
                                        by_step.size()));
  }
  std::vector<std::optional<double>> alpha(records.size());
  parallel_for(records.size(), [&](std::size_t i) {
    try {
      alpha[i] = fit_alpha_per_problem(records[i]).alpha;
    } catch (const TooFewPoints&) {
    } catch (const DegenerateDesign&) {
    }
  });

  MultiStepSummary out;
  std::vector<double> steps, means;
  for (const auto& [step, idx] : by_step) {
    std::vector<double> a;
    for (auto i : idx) {
      if (alpha[i]) {
        a.push_back(*alpha[i]);
      } else {
        ++out.skipped;
      }
    }
    if (a.empty()) continue;
    StepSummary s;
    s.step = step;
    s.n = a.size();
    s.alpha_mean = stats::mean(a);
    s.alpha_std = stats::sample_std(a);
    s.ci_low = stats::quantile(a, 0.025);
    s.ci_high = stats::quantile(a, 0.975);
    out.per_step.push_back(s);
    steps.push_back(static_cast<double>(step));
    means.push_back(s.alpha_mean);
  }
  if (out.per_step.size() < 3) {
    throw InsufficientSteps("fewer than 3 steps have fittable records");
  }
  const auto line = stats::fit_line(steps, means);
  out.slope = line.slope;
  out.intercept = line.intercept;
  out.trend_r_squared = line.r_squared;
  out.slope_p = stats::slope_permutation_test(steps, means, derive_seed(opts.seed, kTestStream, 2),
                                              opts.permutations)
                    .p_value;
  if (std::all_of(means.begin(), means.end(), [](double m) { return m > 0.0; })) {
    const auto g = geometric_mean_alpha(means);
    out.geo_mean = g.geometric_mean;
    out.verdict = g.verdict;
  } else {
    out.geo_mean = kNaN;
    out.verdict = StabilityVerdict::Unstable;
  }
  return out;
}

IdentifiabilityReport run_identifiability(const IdentifiabilityConfig& config) {
  if (config.n_trials < 10) throw InvalidParameter("identifiability needs at least 10 trials");
  IdentifiabilityReport rep;
  rep.config = config;
  const std::pair<const char*, PriorSpec> arms[] = {
      {"uniform", {PriorMode::Uniform, 0.5}},
      {"near_uniform", {PriorMode::Dirichlet, 500.0}},
      {"dirichlet", {PriorMode::Dirichlet, 0.5}},
  };
  for (std::size_t a = 0; a < std::size(arms); ++a) {
    const auto& [name, prior] = arms[a];
    std::vector<TwoParamFit> two(config.n_trials);
    std::vector<double> unified(config.n_trials, kNaN);
    parallel_for(config.n_trials, [&](std::size_t t) {
      SynthConfig sc;
      sc.n = config.records_per_trial;
      sc.k = config.k;
      sc.alpha_true = config.alpha_true;
      sc.prior = prior;
      sc.s = config.s;
      sc.log_noise_sigma = config.sigma;
      sc.seed = derive_seed(config.seed, kArmStream + a, t);
      const auto recs = synthesize_records(sc);
      two[t] = fit_two_param(recs);
      unified[t] = fit_alpha_pooled(recs).alpha;
    });
    IdentifiabilityArm arm;
    arm.name = name;
    arm.prior = prior;
    arm.trials = config.n_trials;
    std::vector<double> cond, aq, ab, dr, err;
    std::size_t reliable = 0;
    for (std::size_t t = 0; t < config.n_trials; ++t) {
      cond.push_back(two[t].condition_number);
      aq.push_back(two[t].alpha_q0);
      ab.push_back(two[t].alpha_b);
      dr.push_back(two[t].delta_r_squared_vs_unified);
      err.push_back(std::abs(unified[t] - config.alpha_true));
      reliable += two[t].reliable ? 1 : 0;
    }
    arm.median_condition_number = stats::quantile(cond, 0.5);
    arm.reliable_fraction = static_cast<double>(reliable) / static_cast<double>(config.n_trials);
    arm.alpha_q0_mean = stats::mean(aq);
    arm.alpha_q0_std = stats::sample_std(aq);
    arm.alpha_b_mean = stats::mean(ab);
    arm.alpha_b_std = stats::sample_std(ab);
    arm.unified_alpha_mean = stats::mean(unified);
    arm.unified_alpha_max_error = *std::max_element(err.begin(), err.end());
    arm.delta_r_squared_median = stats::quantile(dr, 0.5);
    arm.delta_r_squared_max = *std::max_element(dr.begin(), dr.end());
    rep.arms.push_back(arm);
  }
  return rep;
}

CalibrationTable calibration_compare(const std::vector<RevisionRecord>& records,
                                     std::size_t bins) {
  CalibrationTable table;
  std::vector<const RevisionRecord*> labeled;
  for (const auto& r : records) {
    if (r.correct_index) labeled.push_back(&r);
  }
  if (labeled.empty()) throw InsufficientData("calibration needs records with correct_index");

  std::vector<bool> labels;
  std::vector<double> maxp, margin, neg_entropy, entropy_conf;
  for (const auto* r : labeled) {
    const bool ok = *r->is_correct();
    labels.push_back(ok);
    (ok ? table.n_correct : table.n_incorrect)++;
    std::vector<double> p(r->q1.probs().begin(), r->q1.probs().end());
    std::sort(p.begin(), p.end(), std::greater<>());
    maxp.push_back(p[0]);
    margin.push_back(p[0] - p[1]);
    const double h = entropy(r->q1).value;
    neg_entropy.push_back(-h);
    entropy_conf.push_back(std::clamp(1.0 - h / std::log(static_cast<double>(r->k)), 0.0, 1.0));
  }

  std::vector<double> alpha_raw, alpha_conf;
  std::vector<bool> alpha_labels;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    try {
      const double a = fit_alpha_per_problem(*labeled[i]).alpha;
      alpha_raw.push_back(a);
      alpha_conf.push_back(std::clamp(a, 0.0, 1.0));
      alpha_labels.push_back(labels[i]);
    } catch (const TooFewPoints&) {
    } catch (const DegenerateDesign&) {
    }
  }

  auto add = [&](std::string name, const std::vector<double>& score,
                 const std::vector<double>& conf, const std::vector<bool>& lab) {
    CalibrationRow row;
    row.signal = std::move(name);
    row.n = score.size();
    if (row.n == 0) {
      row.ece = kNaN;
      row.brier = kNaN;
      table.warnings.push_back(row.signal + ": no usable records");
    } else {
      row.auroc = stats::auroc(score, lab);
      row.ece = stats::expected_calibration_error(conf, lab, bins);
      row.brier = stats::brier_score(conf, lab);
      if (!row.auroc) {
        table.warnings.push_back(row.signal + ": all labels identical, AUROC undefined");
      }
    }
    table.rows.push_back(std::move(row));
  };
  add("max_prob", maxp, maxp, labels);
  add("margin", margin, margin, labels);
  add("entropy", neg_entropy, entropy_conf, labels);
  add("alpha", alpha_raw, alpha_conf, alpha_labels);
  return table;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

void write_ablation_csv(std::ostream& out, const AblationResult& r) {
  out << r.factor << ",alpha,alpha_std,ci_low,ci_high,r_squared,n_points,n_records,skipped";
  if (!r.metric_name.empty()) out << ',' << r.metric_name;
  out << ",test_statistic,p_value,test_method\n";
  for (const auto& l : r.levels) {
    out << csv::num(l.level) << ',' << csv::num(l.fit.alpha) << ',' << csv::num(l.alpha_std) << ','
        << csv::num(l.fit.ci_low) << ',' << csv::num(l.fit.ci_high) << ','
        << csv::num(l.fit.r_squared) << ',' << l.fit.n_points << ',' << l.fit.n_records << ','
        << l.skipped;
    if (!r.metric_name.empty()) out << ',' << csv::num(l.metric);
    out << ',' << csv::num(r.test_statistic) << ',' << csv::num(r.p_value) << ','
        << csv::field(r.test_method) << '\n';
  }
}

void write_multistep_csv(std::ostream& out, const MultiStepSummary& s) {
  out << "step,n,alpha_mean,alpha_std,ci_low,ci_high,slope,slope_p_value,trend_r_squared,"
         "geo_mean,verdict\n";
  for (const auto& st : s.per_step) {
    out << st.step << ',' << st.n << ',' << csv::num(st.alpha_mean) << ','
        << csv::num(st.alpha_std) << ',' << csv::num(st.ci_low) << ',' << csv::num(st.ci_high)
        << ',' << csv::num(s.slope) << ',' << csv::num(s.slope_p) << ','
        << csv::num(s.trend_r_squared) << ',' << csv::num(s.geo_mean) << ','
        << to_string(s.verdict) << '\n';
  }
}

void write_calibration_csv(std::ostream& out, const CalibrationTable& t) {
  out << "signal,n,auroc,ece,brier,n_correct,n_incorrect\n";
  for (const auto& r : t.rows) {
    out << r.signal << ',' << r.n << ',' << csv::num(r.auroc) << ',' << csv::num(r.ece) << ','
        << csv::num(r.brier) << ',' << t.n_correct << ',' << t.n_incorrect << '\n';
  }
}

void write_identifiability_csv(std::ostream& out, const IdentifiabilityReport& rep) {
  out << "arm,prior,trials,median_condition_number,reliable_fraction,alpha_q0_mean,alpha_q0_std,"
         "alpha_b_mean,alpha_b_std,unified_alpha_mean,unified_alpha_max_error,"
         "delta_r_squared_median,delta_r_squared_max\n";
  for (const auto& a : rep.arms) {
    out << a.name << ',' << a.prior.describe() << ',' << a.trials << ','
        << csv::num(a.median_condition_number) << ',' << csv::num(a.reliable_fraction) << ','
        << csv::num(a.alpha_q0_mean) << ',' << csv::num(a.alpha_q0_std) << ','
        << csv::num(a.alpha_b_mean) << ',' << csv::num(a.alpha_b_std) << ','
        << csv::num(a.unified_alpha_mean) << ',' << csv::num(a.unified_alpha_max_error) << ','
        << csv::num(a.delta_r_squared_median) << ',' << csv::num(a.delta_r_squared_max) << '\n';
  }
}

namespace {

void write_summary_csv(std::ostream& out, const std::optional<SummaryReport>& s,
                       const std::optional<QualityReport>& q) {
  out << "section,key,value\n";
  if (s) {
    out << "records,total," << s->n_records << '\n';
    out << "records,fallback," << s->n_fallback << '\n';
    for (const auto& [k, n] : s->k_histogram) out << "k," << k << ',' << n << '\n';
    for (const auto& [g, n] : s->group_sizes) {
      out << "group," << csv::field(g.first + "/" + g.second) << ',' << n << '\n';
    }
    for (const auto& [st, n] : s->step_histogram) out << "step," << st << ',' << n << '\n';
  }
  if (q) {
    out << "quality,total," << q->total << '\n';
    out << "quality,kept," << q->kept << '\n';
    out << "quality,fallback_rate," << csv::num(q->fallback_rate) << '\n';
    out << "quality,invalid_rate," << csv::num(q->invalid_rate) << '\n';
    for (const auto& [m, rate] : q->per_model_contamination) {
      out << "contamination," << csv::field(m) << ',' << csv::num(rate) << '\n';
    }
    for (const auto& m : q->excluded_models) out << "excluded," << csv::field(m) << ",1\n";
  }
}

std::size_t count_rows(const std::string& text) {
  const auto lines = static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
  return lines == 0 ? 0 : lines - 1;
}

}  // namespace

Manifest emit_report(const ReportBundle& b, const std::string& out_dir, std::uint64_t seed,
                     const nlohmann::ordered_json& config) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError(fmt::format("cannot create output directory '{}': {}", out_dir, ec.message()));

  // Sorted by file name so the manifest order is fixed.
  std::map<std::string, std::string> files;
  auto render = [&](const std::string& name, auto&& writer) {
    std::ostringstream os;
    writer(os);
    files[name] = os.str();
  };

  if (!b.pooled_fits.empty()) {
    render("pooled_fit.csv", [&](std::ostream& os) {
      os << fit_csv_header() << '\n';
      for (const auto& [label, f] : b.pooled_fits) os << fit_csv_row(label, f) << '\n';
    });
  }
  if (!b.two_param_fits.empty()) {
    render("two_param.csv", [&](std::ostream& os) {
      os << two_param_csv_header() << '\n';
      for (const auto& [label, f] : b.two_param_fits) os << two_param_csv_row(label, f) << '\n';
    });
  }
  if (!b.per_problem.empty()) {
    render("per_problem.csv", [&](std::ostream& os) {
      os << "problem_id,model,dataset,step,k,alpha,intercept,r_squared,n_points,correct\n";
      for (const auto& [rec, f] : b.per_problem) {
        const auto ok = rec->is_correct();
        os << csv::field(rec->problem_id) << ',' << csv::field(rec->model) << ','
           << csv::field(rec->dataset) << ',' << rec->step << ',' << rec->k << ','
           << csv::num(f.alpha) << ',' << csv::num(f.intercept) << ',' << csv::num(f.r_squared)
           << ',' << f.n_points << ',' << (ok ? (*ok ? "true" : "false") : "") << '\n';
      }
    });
  }
  if (b.evidence_sensitivity) {
    render("evidence_sensitivity.csv", [&](std::ostream& os) { write_ablation_csv(os, *b.evidence_sensitivity); });
  }
  if (b.noise_ablation) {
    render("noise_ablation.csv", [&](std::ostream& os) { write_ablation_csv(os, *b.noise_ablation); });
  }
  if (b.k_ablation) {
    render("k_ablation.csv", [&](std::ostream& os) { write_ablation_csv(os, *b.k_ablation); });
  }
  if (b.multistep) {
    render("multistep.csv", [&](std::ostream& os) { write_multistep_csv(os, *b.multistep); });
  }
  if (b.calibration) {
    render("calibration.csv", [&](std::ostream& os) { write_calibration_csv(os, *b.calibration); });
  }
  if (b.identifiability) {
    render("identifiability.csv", [&](std::ostream& os) { write_identifiability_csv(os, *b.identifiability); });
  }
  if (b.trajectory) {
    render("trajectory.csv", [&](std::ostream& os) { write_trajectory_csv(os, *b.trajectory); });
  }
  if (b.summary || b.quality) {
    render("summary.csv", [&](std::ostream& os) { write_summary_csv(os, b.summary, b.quality); });
  }

  Manifest manifest;
  manifest.seed = seed;
  manifest.config_hash = sha256_hex(config.dump());
  for (const auto& [name, text] : files) {
    const fs::path path = fs::path(out_dir) / name;
    std::ofstream out(path, std::ios::binary);
    out << text;
    out.close();
    if (!out) throw IoError(fmt::format("failed to write '{}'", path.string()));
    manifest.files.push_back({name, count_rows(text), sha256_hex(text)});
  }

  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["config_hash"] = manifest.config_hash;
  j["config"] = config;
  j["files"] = nlohmann::ordered_json::array();
  for (const auto& f : manifest.files) {
    j["files"].push_back({{"name", f.name}, {"rows", f.rows}, {"sha256", f.sha256}});
  }
  const fs::path mpath = fs::path(out_dir) / "manifest.json";
  std::ofstream mout(mpath, std::ios::binary);
  mout << j.dump(2) << '\n';
  mout.close();
  if (!mout) throw IoError(fmt::format("failed to write '{}'", mpath.string()));
  return manifest;
}

}  // namespace alphalaw
