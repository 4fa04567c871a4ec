#include "alphalaw/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "alphalaw/csv.hpp"
#include "alphalaw/errors.hpp"
#include "alphalaw/parallel.hpp"
#include "alphalaw/random.hpp"
#include "alphalaw/stats.hpp"

namespace alphalaw {

namespace {

constexpr std::uint64_t kBootstrapStream = 0x626f6f74ULL;
constexpr double kRankTol = 1e-12;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

// Within-record predictor variance below this (per point, relative to the
// predictor scale) is rounding noise from centering identical values.
bool degenerate(double sxx, std::size_t n, double mean_abs_x) {
  const double scale = 1e-12 * std::max(1.0, mean_abs_x);
  return !(sxx > static_cast<double>(n) * scale * scale);
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

std::string_view to_string(FitMethod m) {
  return m == FitMethod::PooledOls ? "pooled_ols" : "per_problem";
}

std::string_view to_string(StabilityVerdict v) {
  switch (v) {
    case StabilityVerdict::Stable: return "stable";
    case StabilityVerdict::Marginal: return "marginal";
    case StabilityVerdict::Unstable: return "unstable";
  }
  return "unknown";
}

std::vector<RegressionPoint> build_regression_points(const RevisionRecord& record,
                                                     const EvidenceDist& evidence) {
  if (evidence.k() != record.k || record.q0.k() != record.k || record.q1.k() != record.k) {
    throw DimensionError("record " + record.problem_id + ": dimension mismatch");
  }
  std::vector<RegressionPoint> out;
  out.reserve(record.k);
  for (std::size_t i = 0; i < record.k; ++i) {
    RegressionPoint p;
    p.x = std::log(record.q0[i]) + std::log(evidence.probs()[i]);
    p.y = std::log(record.q1[i]);
    p.record_id = record.problem_id;
    p.candidate_index = i;
    p.censored = record.q0.at_floor(i) || evidence.dist.at_floor(i) || record.q1.at_floor(i);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<RegressionPoint> build_regression_points(const RevisionRecord& record) {
  return build_regression_points(record, record.evidence);
}

RecordMoments record_moments(std::span<const RegressionPoint> points) {
  RecordMoments m;
  for (const auto& p : points) {
    if (p.censored) continue;
    ++m.n;
    m.sum_x += p.x;
    m.sum_y += p.y;
  }
  if (m.n == 0) return m;
  const double mx = m.sum_x / static_cast<double>(m.n);
  const double my = m.sum_y / static_cast<double>(m.n);
  for (const auto& p : points) {
    if (p.censored) continue;
    const double dx = p.x - mx;
    const double dy = p.y - my;
    m.sxx += dx * dx;
    m.sxy += dx * dy;
    m.syy += dy * dy;
  }
  return m;
}

FitResult fit_from_moments(std::span<const RecordMoments> moments) {
  RecordMoments total;
  std::size_t records = 0;
  for (const auto& m : moments) {
    if (m.n == 0) continue;
    ++records;
    total.n += m.n;
    total.sum_x += m.sum_x;
    total.sum_y += m.sum_y;
    total.sxx += m.sxx;
    total.sxy += m.sxy;
    total.syy += m.syy;
  }
  if (records < 2) throw InsufficientData("pooled fit needs at least 2 records with usable points");
  const double n = static_cast<double>(total.n);
  if (degenerate(total.sxx, total.n, std::abs(total.sum_x / n))) {
    throw DegenerateDesign("predictor has no within-record variance");
  }
  FitResult f;
  f.alpha = total.sxy / total.sxx;
  f.intercept = total.sum_y / n - f.alpha * total.sum_x / n;
  f.r_squared = total.syy > 0.0 ? clamp01(total.sxy * total.sxy / (total.sxx * total.syy)) : 0.0;
  f.n_points = total.n;
  f.n_records = records;
  f.method = FitMethod::PooledOls;
  return f;
}

FitResult fit_alpha_pooled(const std::vector<RevisionRecord>& records) {
  std::vector<RecordMoments> moments;
  moments.reserve(records.size());
  for (const auto& r : records) moments.push_back(record_moments(build_regression_points(r)));
  return fit_from_moments(moments);
}

FitResult fit_alpha_per_problem(const RevisionRecord& record) {
  if (record.k < 3) {
    throw TooFewPoints("record " + record.problem_id + ": per-problem fit needs k >= 3");
  }
  const auto points = build_regression_points(record);
  const auto m = record_moments(points);
  if (m.n < 3) {
    throw TooFewPoints("record " + record.problem_id + ": fewer than 3 uncensored points");
  }
  const double n = static_cast<double>(m.n);
  if (degenerate(m.sxx, m.n, std::abs(m.sum_x / n))) {
    throw DegenerateDesign("record " + record.problem_id + ": predictor has zero variance");
  }
  FitResult f;
  f.alpha = m.sxy / m.sxx;
  f.intercept = m.sum_y / n - f.alpha * m.sum_x / n;
  f.r_squared = m.syy > 0.0 ? clamp01(m.sxy * m.sxy / (m.sxx * m.syy)) : 0.0;
  f.n_points = m.n;
  f.n_records = 1;
  f.method = FitMethod::PerProblem;
  return f;
}

ConfidenceInterval bootstrap_ci(
    std::size_t n_units,
    const std::function<double(std::span<const std::size_t>)>& statistic,
    std::size_t resamples, std::uint64_t seed) {
  if (resamples < kMinBootstrapResamples) {
    throw InvalidParameter(fmt::format("bootstrap needs at least {} resamples", kMinBootstrapResamples));
  }
  if (n_units < kMinBootstrapRecords) {
    throw InsufficientData(fmt::format("bootstrap needs at least {} records, got {}",
                                       kMinBootstrapRecords, n_units));
  }
  std::vector<double> values(resamples, kNaN);
  parallel_for(resamples, [&](std::size_t r) {
    Rng rng(derive_seed(seed, kBootstrapStream, r));
    std::vector<std::size_t> idx(n_units);
    for (auto& i : idx) i = uniform_index(rng, n_units);
    values[r] = statistic(idx);
  });
  std::vector<double> finite;
  finite.reserve(values.size());
  for (double v : values) {
    if (std::isfinite(v)) finite.push_back(v);
  }
  if (finite.empty()) throw InsufficientData("no bootstrap resample produced a finite estimate");
  return {stats::quantile(finite, 0.025), stats::quantile(finite, 0.975), finite.size()};
}

ConfidenceInterval bootstrap_ci(
    const std::vector<RevisionRecord>& records,
    const std::function<double(const std::vector<RevisionRecord>&)>& fit,
    std::size_t resamples, std::uint64_t seed) {
  return bootstrap_ci(
      records.size(),
      [&](std::span<const std::size_t> idx) {
        std::vector<RevisionRecord> sample;
        sample.reserve(idx.size());
        for (auto i : idx) sample.push_back(records[i]);
        try {
          return fit(sample);
        } catch (const Error&) {
          return kNaN;
        }
      },
      resamples, seed);
}

ConfidenceInterval bootstrap_pooled_ci(std::span<const RecordMoments> moments,
                                       std::size_t resamples, std::uint64_t seed) {
  return bootstrap_ci(
      moments.size(),
      [&](std::span<const std::size_t> idx) {
        double sxx = 0.0, sxy = 0.0;
        for (auto i : idx) {
          sxx += moments[i].sxx;
          sxy += moments[i].sxy;
        }
        return sxx > 0.0 ? sxy / sxx : kNaN;
      },
      resamples, seed);
}

double design_condition_number(std::span<const double> log_q0,
                               std::span<const double> log_b,
                               std::span<const std::size_t> group) {
  if (log_q0.size() != log_b.size() || log_q0.size() != group.size()) {
    throw DimensionError("design columns differ in length");
  }
  if (group.empty()) throw InsufficientData("empty design");

  std::map<std::size_t, std::size_t> remap;
  for (auto g : group) remap.emplace(g, remap.size());
  const std::size_t R = remap.size();

  const std::span<const double> cols[2] = {log_q0, log_b};
  double norm[2] = {0.0, 0.0};
  for (int j = 0; j < 2; ++j) {
    for (double v : cols[j]) norm[j] += v * v;
    norm[j] = std::sqrt(norm[j]);
    if (!(norm[j] > 0.0)) return kInf;
  }

  // Row r of B: per-record column sums, scaled like the unit-length columns.
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(R), 2);
  std::vector<double> count(R, 0.0);
  Eigen::Matrix2d C = Eigen::Matrix2d::Zero();
  for (std::size_t i = 0; i < group.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(remap[group[i]]);
    count[static_cast<std::size_t>(r)] += 1.0;
    for (int j = 0; j < 2; ++j) {
      B(r, j) += cols[j][i] / norm[j];
      for (int l = 0; l < 2; ++l) C(j, l) += cols[j][i] * cols[l][i] / (norm[j] * norm[l]);
    }
  }
  for (std::size_t r = 0; r < R; ++r) B.row(static_cast<Eigen::Index>(r)) /= std::sqrt(count[r]);

  Eigen::VectorXd eig;
  if (R <= 2) {
    const auto dim = static_cast<Eigen::Index>(R + 2);
    Eigen::MatrixXd gram = Eigen::MatrixXd::Identity(dim, dim);
    const auto Ri = static_cast<Eigen::Index>(R);
    gram.block(0, Ri, Ri, 2) = B;
    gram.block(Ri, 0, 2, Ri) = B.transpose();
    gram.block(Ri, Ri, 2, 2) = C;
    eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram, Eigen::EigenvaluesOnly).eigenvalues();
  } else {
    // The R unit-norm indicator columns are orthonormal, so the Gram matrix
    // has eigenvalue 1 on the complement of range(B) and the rest comes from
    // a 4×4 block built from G = BᵀB.
    const Eigen::Matrix2d G = B.transpose() * B;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> gs(G);
    const Eigen::Vector2d root = gs.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Eigen::Matrix2d Ghalf = gs.eigenvectors() * root.asDiagonal() * gs.eigenvectors().transpose();
    Eigen::Matrix4d M = Eigen::Matrix4d::Identity();
    M.block<2, 2>(0, 2) = Ghalf;
    M.block<2, 2>(2, 0) = Ghalf;
    M.block<2, 2>(2, 2) = C;
    const Eigen::Vector4d small =
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d>(M, Eigen::EigenvaluesOnly).eigenvalues();
    eig.resize(5);
    eig << small, 1.0;
  }
  const double hi = eig.maxCoeff();
  const double lo = eig.minCoeff();
  if (!(hi > 0.0) || lo <= kRankTol * hi) return kInf;
  return std::sqrt(hi / lo);
}

TwoParamFit fit_two_param(const std::vector<RevisionRecord>& records) {
  // Within-record centered cross products of (log q0, log b, log q1).
  double s11 = 0, s12 = 0, s22 = 0, s1y = 0, s2y = 0, syy = 0;
  double sum1 = 0, sum2 = 0, sumy = 0;
  std::vector<double> col_q0, col_b;
  std::vector<std::size_t> group;
  std::size_t used_records = 0;

  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    rec.validate();
    std::vector<double> a, b, y;
    for (std::size_t i = 0; i < rec.k; ++i) {
      if (rec.q0.at_floor(i) || rec.evidence.dist.at_floor(i) || rec.q1.at_floor(i)) continue;
      a.push_back(std::log(rec.q0[i]));
      b.push_back(std::log(rec.evidence.probs()[i]));
      y.push_back(std::log(rec.q1[i]));
    }
    if (a.empty()) continue;
    ++used_records;
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0, my = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ma += a[i];
      mb += b[i];
      my += y[i];
    }
    sum1 += ma;
    sum2 += mb;
    sumy += my;
    ma /= n;
    mb /= n;
    my /= n;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double da = a[i] - ma, db = b[i] - mb, dy = y[i] - my;
      s11 += da * da;
      s12 += da * db;
      s22 += db * db;
      s1y += da * dy;
      s2y += db * dy;
      syy += dy * dy;
      col_q0.push_back(a[i]);
      col_b.push_back(b[i]);
      group.push_back(r);
    }
  }
  if (used_records < 2) throw InsufficientData("two-parameter fit needs at least 2 records");

  TwoParamFit f;
  f.n_points = col_q0.size();
  f.n_records = used_records;
  f.condition_number = design_condition_number(col_q0, col_b, group);

  // Pseudo-inverse solve of the scaled 2×2 normal equations.
  const double n = static_cast<double>(f.n_points);
  const bool flat1 = degenerate(s11, f.n_points, std::abs(sum1 / n));
  const bool flat2 = degenerate(s22, f.n_points, std::abs(sum2 / n));
  const double scale[2] = {flat1 ? 0.0 : 1.0 / std::sqrt(s11), flat2 ? 0.0 : 1.0 / std::sqrt(s22)};
  Eigen::Matrix2d S;
  S << s11 * scale[0] * scale[0], s12 * scale[0] * scale[1],
       s12 * scale[0] * scale[1], s22 * scale[1] * scale[1];
  const Eigen::Vector2d g(s1y * scale[0], s2y * scale[1]);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(S);
  const double lmax = es.eigenvalues().maxCoeff();
  Eigen::Vector2d beta = Eigen::Vector2d::Zero();
  std::size_t rank = 0;
  for (int j = 0; j < 2; ++j) {
    const double lam = es.eigenvalues()(j);
    if (lmax > 0.0 && lam > kRankTol * lmax) {
      const Eigen::Vector2d v = es.eigenvectors().col(j);
      beta += v * (v.dot(g) / lam);
      ++rank;
    }
  }
  f.alpha_q0 = beta(0) * scale[0];
  f.alpha_b = beta(1) * scale[1];
  f.reliable = rank == 2 && std::isfinite(f.condition_number);
  f.trust_ratio = f.alpha_q0 != 0.0 ? f.alpha_b / f.alpha_q0 : kNaN;

  f.intercept = sumy / n - f.alpha_q0 * sum1 / n - f.alpha_b * sum2 / n;
  const double explained = f.alpha_q0 * s1y + f.alpha_b * s2y;
  f.r_squared = syy > 0.0 ? clamp01(explained / syy) : 0.0;

  const double sxx_u = s11 + 2.0 * s12 + s22;
  const double sxy_u = s1y + s2y;
  const double r2_unified = (syy > 0.0 && sxx_u > 0.0) ? clamp01(sxy_u * sxy_u / (sxx_u * syy)) : 0.0;
  f.delta_r_squared_vs_unified = f.r_squared - r2_unified;
  return f;
}

GeometricMeanResult geometric_mean_alpha(std::span<const double> step_alphas) {
  if (step_alphas.empty()) throw InvalidParameter("geometric mean needs at least one exponent");
  double log_sum = 0.0;
  for (double a : step_alphas) {
    if (!(a > 0.0) || !std::isfinite(a)) throw InvalidParameter("exponents must be positive and finite");
    log_sum += std::log(a);
  }
  GeometricMeanResult res;
  res.geometric_mean = std::exp(log_sum / static_cast<double>(step_alphas.size()));
  res.product_sq = std::exp(2.0 * log_sum);
  if (std::abs(res.product_sq - 1.0) <= 1e-9) {
    res.verdict = StabilityVerdict::Marginal;
  } else {
    res.verdict = res.product_sq < 1.0 ? StabilityVerdict::Stable : StabilityVerdict::Unstable;
  }
  return res;
}

std::string fit_csv_header() {
  return "label,method,alpha,intercept,r_squared,n_points,n_records,ci_low,ci_high";
}

std::string fit_csv_row(std::string_view label, const FitResult& fit) {
  return fmt::format("{},{},{},{},{},{},{},{},{}", csv::field(label), to_string(fit.method),
                     csv::num(fit.alpha), csv::num(fit.intercept), csv::num(fit.r_squared),
                     fit.n_points, fit.n_records, csv::num(fit.ci_low), csv::num(fit.ci_high));
}

std::string two_param_csv_header() {
  return "label,alpha_q0,alpha_b,intercept,trust_ratio,condition_number,r_squared,"
         "delta_r_squared_vs_unified,reliable,n_points,n_records";
}

std::string two_param_csv_row(std::string_view label, const TwoParamFit& fit) {
  return fmt::format("{},{},{},{},{},{},{},{},{},{},{}", csv::field(label),
                     csv::num(fit.alpha_q0), csv::num(fit.alpha_b), csv::num(fit.intercept),
                     csv::num(fit.trust_ratio), csv::num(fit.condition_number),
                     csv::num(fit.r_squared), csv::num(fit.delta_r_squared_vs_unified),
                     fit.reliable ? "true" : "false", fit.n_points, fit.n_records);
}

}  // namespace alphalaw
