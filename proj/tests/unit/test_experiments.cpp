#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "alphalaw/errors.hpp"
#include "alphalaw/experiments.hpp"
#include "alphalaw/parallel.hpp"
#include "alphalaw/random.hpp"

using namespace alphalaw;

namespace {

SynthConfig base(double alpha, std::size_t n, double sigma, const char* prior, std::uint64_t seed,
                 std::size_t k = 4) {
  SynthConfig c;
  c.n = n;
  c.k = k;
  c.alpha_true = alpha;
  c.log_noise_sigma = sigma;
  c.prior = PriorSpec::parse(prior);
  c.seed = seed;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<RevisionRecord> k_mix(double a4, double a8, double a16, std::uint64_t seed) {
  std::vector<RevisionRecord> out;
  const std::vector<std::pair<std::size_t, double>> arms{{4, a4}, {8, a8}, {16, a16}};
  for (const auto& [k, a] : arms) {
    for (auto& r : synthesize_records(base(a, 60, 0.05, "dirichlet:0.5", derive_seed(seed, k, 0), k))) {
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace

TEST_SUITE("parallel") {
  TEST_CASE("parallel_for fills every slot and rethrows the lowest failing index") {
    std::vector<int> out(100, 0);
    parallel_for(100, [&](std::size_t i) { out[i] = static_cast<int>(i * i); }, 4);
    for (std::size_t i = 0; i < 100; ++i) CHECK(out[i] == static_cast<int>(i * i));
    try {
      parallel_for(
          50,
          [](std::size_t i) {
            if (i == 7 || i == 31) throw InvalidInput("bad " + std::to_string(i));
          },
          4);
      FAIL("expected an exception");
    } catch (const InvalidInput& e) {
      CHECK(std::string(e.what()) == "bad 7");
    }
  }

  TEST_CASE("derived seeds differ by stream and index") {
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 3));
    CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
    Rng rng(1);
    CHECK_THROWS_AS(uniform_index(rng, 0), InvalidParameter);
  }
}

TEST_SUITE("experiments") {
  TEST_CASE("evidence sweep decreases with strength and recovers the truth at 0.9") {
    const auto recs = synthesize_records(base(1.0, 500, 0.1, "uniform", 42));
    const ExperimentOptions opts{7, 300, 999};
    const auto res = run_evidence_sensitivity(recs, default_strength_grid(), opts);
    REQUIRE(res.levels.size() == 6);
    for (std::size_t i = 1; i < res.levels.size(); ++i) {
      CHECK(res.levels[i].fit.alpha < res.levels[i - 1].fit.alpha);
    }
    const auto& at09 = res.levels[4];
    CHECK(at09.level == 0.9);
    REQUIRE(at09.fit.ci_low.has_value());
    CHECK(*at09.fit.ci_low <= 1.0);
    CHECK(*at09.fit.ci_high >= 1.0);
    CHECK(res.test_method.find("exact") != std::string::npos);
  }

  TEST_CASE("evidence sweep skips levels that cannot encode K options") {
    const auto recs = synthesize_records(base(1.0, 30, 0.1, "uniform", 1, 3));
    const std::vector<double> grid{0.3, 0.9};
    CHECK_THROWS_AS(run_evidence_sensitivity(recs, grid, {1, 0, 99}), InsufficientData);
  }

  TEST_CASE("noise ablation attenuates the slope and keeps the clean level bit identical") {
    const auto recs = synthesize_records(base(1.163, 1000, 0.1, "dirichlet:0.5", 5));
    const auto res = run_noise_ablation(recs, {0.0, 0.2, 0.4}, {3, 0, 999});
    REQUIRE(res.levels.size() == 3);
    const auto clean = fit_alpha_pooled(recs);
    CHECK(res.levels[0].fit.alpha == clean.alpha);
    CHECK(res.levels[0].fit.r_squared == clean.r_squared);
    CHECK(*res.levels[0].metric == 0.0);
    CHECK(res.levels[1].fit.alpha < res.levels[0].fit.alpha);
    CHECK(res.levels[2].fit.alpha < res.levels[1].fit.alpha);
    CHECK(res.levels[2].fit.r_squared < res.levels[0].fit.r_squared);
    CHECK(*res.levels[2].metric > *res.levels[1].metric);
    const auto again = run_noise_ablation(recs, {0.0, 0.2, 0.4}, {3, 0, 999});
    CHECK(again.levels[2].fit.alpha == res.levels[2].fit.alpha);
  }

  TEST_CASE("noise ablation needs encoded evidence") {
    auto recs = synthesize_records(base(1.0, 20, 0.1, "dirichlet:0.5", 5));
    for (auto& r : recs) r.evidence = EvidenceDist::from_probs(r.evidence.probs());
    CHECK_THROWS_AS(run_noise_ablation(recs, {0.0, 0.2}, {}), InsufficientData);
  }

  TEST_CASE("K ablation detects a K-dependent exponent") {
    const auto res = run_k_ablation(k_mix(0.6, 1.0, 1.4, 11), kDefaultR2Threshold, {11, 0, 999});
    REQUIRE(res.levels.size() == 3);
    CHECK(res.p_value < 0.01);
    CHECK(res.levels[0].fit.alpha == doctest::Approx(0.6).epsilon(0.05));
    CHECK(res.levels[2].fit.alpha == doctest::Approx(1.4).epsilon(0.05));
    CHECK(res.levels[0].alpha_std.has_value());
  }

  TEST_CASE("K ablation with a single level reports no test") {
    const auto recs = synthesize_records(base(1.0, 30, 0.05, "dirichlet:0.5", 2));
    const auto res = run_k_ablation(recs, kDefaultR2Threshold, {});
    CHECK(res.levels.size() == 1);
    CHECK(res.p_value == 1.0);
  }

  TEST_CASE("multi-step analysis recovers the decay trend") {
    auto c = base(1.0, 200, 0.05, "dirichlet:0.5", 9);
    const std::vector<double> sched{0.838, 0.815, 0.813, 0.784, 0.742, 0.737, 0.543};
    const auto res = run_multistep_analysis(synthesize_multistep(c, sched), {9, 0, 999});
    REQUIRE(res.per_step.size() == 7);
    CHECK(std::abs(res.slope + 0.040) <= 0.01);
    CHECK(std::abs(res.geo_mean - 0.747) <= 0.02);
    CHECK(res.slope_p < 0.05);
    CHECK(res.verdict == StabilityVerdict::Stable);
    for (std::size_t t = 0; t < 7; ++t) {
      CHECK(res.per_step[t].step == t + 1);
      CHECK(res.per_step[t].ci_low <= res.per_step[t].alpha_mean);
      CHECK(res.per_step[t].ci_high >= res.per_step[t].alpha_mean);
    }
  }

  TEST_CASE("multi-step analysis needs three steps") {
    const auto recs = synthesize_multistep(base(1.0, 10, 0.05, "dirichlet:0.5", 1), {0.9, 0.8});
    CHECK_THROWS_AS(run_multistep_analysis(recs, {}), InsufficientSteps);
  }

  TEST_CASE("identifiability arms") {
    IdentifiabilityConfig c;
    c.n_trials = 20;
    c.seed = 4;
    const auto rep = run_identifiability(c);
    REQUIRE(rep.arms.size() == 3);
    CHECK(rep.arms[0].name == "uniform");
    CHECK(rep.arms[0].median_condition_number > 1e6);
    CHECK(rep.arms[2].name == "dirichlet");
    CHECK(std::isfinite(rep.arms[2].median_condition_number));
    CHECK(rep.arms[2].median_condition_number < 100.0);
    CHECK(rep.arms[2].unified_alpha_max_error < 1e-9);
    for (const auto& a : rep.arms) CHECK(a.delta_r_squared_max < 1e-3);
    c.n_trials = 5;
    CHECK_THROWS_AS(run_identifiability(c), InvalidParameter);
  }

  TEST_CASE("calibration table ranks an informative signal above chance") {
    const auto recs = synthesize_records(base(1.0, 400, 0.3, "dirichlet:0.5", 12));
    const auto t = calibration_compare(recs);
    REQUIRE(t.rows.size() == 4);
    CHECK(t.rows[0].signal == "max_prob");
    CHECK(t.n_correct + t.n_incorrect == 400);
    CHECK(*t.rows[0].auroc > 0.6);
    for (const auto& r : t.rows) {
      CHECK(r.ece >= 0.0);
      CHECK(r.ece <= 1.0);
      CHECK(r.brier >= 0.0);
      CHECK(r.brier <= 1.0);
    }
  }

  TEST_CASE("report bundle output does not depend on worker count") {
    const auto recs = synthesize_records(base(1.1, 120, 0.1, "dirichlet:0.5", 3));
    auto run = [&](unsigned jobs, const std::string& dir) {
      set_default_jobs(jobs);
      ReportBundle b;
      b.pooled_fits.emplace_back("all", fit_alpha_pooled(recs));
      b.evidence_sensitivity = run_evidence_sensitivity(recs, default_strength_grid(), {5, 200, 999});
      b.noise_ablation = run_noise_ablation(recs, {0.0, 0.2, 0.4}, {5, 200, 999});
      b.calibration = calibration_compare(recs);
      b.summary = dataset_summary(recs);
      return emit_report(b, dir, 5, nlohmann::ordered_json{{"jobs", "n/a"}});
    };
    const auto tmp = std::filesystem::temp_directory_path() / "alphalaw_unit_report";
    std::filesystem::remove_all(tmp);
    const auto a = run(1, (tmp / "a").string());
    const auto b = run(4, (tmp / "b").string());
    set_default_jobs(1);
    REQUIRE(a.files.size() == b.files.size());
    for (std::size_t i = 0; i < a.files.size(); ++i) {
      CHECK(a.files[i].name == b.files[i].name);
      CHECK(a.files[i].sha256 == b.files[i].sha256);
      CHECK(sha256_hex(slurp(tmp / "a" / a.files[i].name)) == a.files[i].sha256);
    }
    CHECK(slurp(tmp / "a" / "manifest.json") == slurp(tmp / "b" / "manifest.json"));
    std::filesystem::remove_all(tmp);
  }

  TEST_CASE("sha256 of known inputs") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  }
}
