#pragma once

// Analysis of completed datasets: ANCOVA on change from baseline, Rubin's
// rules across imputations, and bootstrap SE/CI with the expanded-percentile
// t adjustment.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rtb/datagen.hpp"
#include "rtb/errors.hpp"
#include "rtb/methods.hpp"
#include "rtb/mi.hpp"
#include "rtb/rng.hpp"

namespace rtb {

namespace detail {

inline double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

inline double normal_cdf(double x) {
  return boost::math::cdf(boost::math::normal_distribution<double>(), x);
}

/// Student-t quantile; falls back to the normal quantile for huge df, where
/// the distributions are numerically identical.
inline double t_quantile(double p, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("t_quantile: df must be > 0");
  if (df > 1e7) return normal_quantile(p);
  return boost::math::quantile(boost::math::students_t_distribution<double>(df), p);
}

}  // namespace detail

/// ANCOVA of change from baseline on treatment group and centered baseline.
/// LS-means are the model-adjusted per-arm means at the pooled baseline mean.
struct AncovaResult {
  std::vector<double> lsmeans;     // per arm, in dataset order
  std::vector<double> lsmean_ses;
  double diff = 0.0;               // arm[1] - arm[0]
  double diff_se = 0.0;
  int resid_df = 0;
  bool degenerate = false;         // zero residual variance
};

inline AncovaResult ancova(const CompletedDataset& completed) {
  const int n_arms = static_cast<int>(completed.arms.size());
  if (n_arms < 2) {
    throw std::invalid_argument("ancova: need at least two arms");
  }
  const int final_visit = completed.K;
  long total = 0;
  for (const CompletedArm& arm : completed.arms) {
    if (arm.values.rows() == 0) throw std::invalid_argument("ancova: empty arm");
    total += arm.values.rows();
  }
  const int p = n_arms + 1;  // intercept, arm indicators, baseline
  if (total <= p) throw std::invalid_argument("ancova: too few subjects");

  double xbar = 0.0;
  for (const CompletedArm& arm : completed.arms) xbar += arm.values.col(0).sum();
  xbar /= static_cast<double>(total);

  Eigen::MatrixXd design(total, p);
  Eigen::VectorXd delta(total);
  long row = 0;
  for (int a = 0; a < n_arms; ++a) {
    const CompletedArm& arm = completed.arms[a];
    for (Eigen::Index i = 0; i < arm.values.rows(); ++i, ++row) {
      const double y_final = arm.values(i, final_visit);
      const double y_base = arm.values(i, 0);
      if (!std::isfinite(y_final) || !std::isfinite(y_base)) {
        throw std::invalid_argument("ancova: non-finite baseline or final value");
      }
      design(row, 0) = 1.0;
      for (int g = 1; g < n_arms; ++g) design(row, g) = (a == g) ? 1.0 : 0.0;
      design(row, n_arms) = y_base - xbar;
      delta(row) = y_final - y_base;
    }
  }

  const Eigen::MatrixXd xtx = design.transpose() * design;
  Eigen::MatrixXd l;
  try {
    l = cholesky_lower(xtx);
  } catch (const numeric_error& e) {
    throw numeric_error(std::string("ancova: rank-deficient design (") + e.what() + ")");
  }
  const Eigen::VectorXd beta = l.transpose().triangularView<Eigen::Upper>().solve(
      l.triangularView<Eigen::Lower>().solve(design.transpose() * delta));
  const Eigen::MatrixXd linv =
      l.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::MatrixXd xtx_inv = linv.transpose() * linv;

  const double rss = (delta - design * beta).squaredNorm();
  const int resid_df = static_cast<int>(total) - p;
  const double sigma2 = rss / static_cast<double>(resid_df);
  const double delta_scale =
      (delta.array() - delta.mean()).square().sum() / static_cast<double>(total - 1);

  AncovaResult result;
  result.resid_df = resid_df;
  result.degenerate = sigma2 <= 1e-12 * (delta_scale + 1e-100);
  result.lsmeans.resize(n_arms);
  result.lsmean_ses.resize(n_arms);
  for (int a = 0; a < n_arms; ++a) {
    Eigen::VectorXd probe = Eigen::VectorXd::Zero(p);
    probe(0) = 1.0;
    if (a > 0) probe(a) = 1.0;
    result.lsmeans[a] = probe.dot(beta);
    result.lsmean_ses[a] = std::sqrt(sigma2 * probe.dot(xtx_inv * probe));
  }
  result.diff = beta(1);
  result.diff_se = std::sqrt(sigma2 * xtx_inv(1, 1));
  return result;
}

/// Rubin's-rules combination of M point estimates and their within-imputation
/// variances.
struct PooledEstimate {
  double point = 0.0;
  double within_var = 0.0;
  double between_var = 0.0;
  double total_var = 0.0;
  double df = std::numeric_limits<double>::infinity();
  std::pair<double, double> ci{0.0, 0.0};

  double se() const { return std::sqrt(total_var); }
};

inline PooledEstimate rubin_pool(const std::vector<double>& estimates,
                                 const std::vector<double>& variances,
                                 double alpha) {
  const std::size_t m = estimates.size();
  if (m < 2) throw std::invalid_argument("rubin_pool: need M >= 2 estimates");
  if (variances.size() != m) {
    throw std::invalid_argument("rubin_pool: estimate/variance count mismatch");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("rubin_pool: alpha must be in (0,1)");
  }
  PooledEstimate pooled;
  const double md = static_cast<double>(m);
  for (double e : estimates) pooled.point += e;
  pooled.point /= md;
  for (double v : variances) pooled.within_var += v;
  pooled.within_var /= md;
  for (double e : estimates) {
    const double d = e - pooled.point;
    pooled.between_var += d * d;
  }
  pooled.between_var /= (md - 1.0);
  const double b_scaled = (1.0 + 1.0 / md) * pooled.between_var;
  pooled.total_var = pooled.within_var + b_scaled;

  double quantile;
  if (pooled.between_var > 0.0) {
    pooled.df = (md - 1.0) * std::pow(1.0 + pooled.within_var / b_scaled, 2.0);
    quantile = detail::t_quantile(1.0 - alpha / 2.0, pooled.df);
  } else {
    pooled.df = std::numeric_limits<double>::infinity();
    quantile = detail::normal_quantile(1.0 - alpha / 2.0);
  }
  const double halfwidth = quantile * pooled.se();
  pooled.ci = {pooled.point - halfwidth, pooled.point + halfwidth};
  return pooled;
}

/// Expanded nominal level for the bootstrap-t interval:
///   alpha' = 2 Phi( (n/(n-2)) t_{alpha/2, n-2} ).
/// Always below alpha for finite n (a wider interval) and converging to it.
inline double expanded_alpha(double alpha, long n_tilde) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("expanded_alpha: alpha must be in (0,1)");
  }
  if (n_tilde <= 2) {
    throw std::invalid_argument("expanded_alpha: n_tilde must exceed 2");
  }
  const double n = static_cast<double>(n_tilde);
  const double t_low = detail::t_quantile(alpha / 2.0, n - 2.0);
  return 2.0 * detail::normal_cdf(n / (n - 2.0) * t_low);
}

/// Per-method single-dataset analysis: estimates of the mean change from
/// baseline for each arm and the treatment difference, plus SEs/CIs where
/// the method defines them and the final-visit completed-data moments.
struct MethodAnalysis {
  std::array<double, 3> point{};  // arm0, arm1, arm1 - arm0
  std::array<double, 3> se{};
  std::array<std::pair<double, double>, 3> ci{};
  bool has_se = false;
  std::array<double, 2> completed_mean{};
  std::array<double, 2> completed_sd{};
  bool has_completed = false;
};

/// Run one method end to end on one dataset: impute (M copies where the
/// method is MI-based), analyze each copy, pool.
inline MethodAnalysis analyze_method(const TrialDataset& dataset, Method method,
                                     int imputations, double alpha, Rng& rng) {
  if (dataset.arms.size() != 2) {
    throw std::invalid_argument("analyze_method: expected exactly two arms");
  }
  MethodAnalysis out;
  const int final_visit = dataset.K;

  if (method == Method::kDirectMl) {
    const DirectMlEstimate est = direct_ml_estimate(dataset);
    out.point = {est.arms[0].estimate, est.arms[1].estimate, est.difference};
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.se = {nan, nan, nan};
    return out;
  }

  if (method == Method::kBocf) {
    const CompletedDataset cd = bocf(dataset);
    const AncovaResult a = ancova(cd);
    out.point = {a.lsmeans[0], a.lsmeans[1], a.diff};
    out.se = {a.lsmean_ses[0], a.lsmean_ses[1], a.diff_se};
    const double q = detail::t_quantile(1.0 - alpha / 2.0,
                                        static_cast<double>(a.resid_df));
    for (int i = 0; i < 3; ++i) {
      out.ci[i] = {out.point[i] - q * out.se[i], out.point[i] + q * out.se[i]};
    }
    out.has_se = true;
    for (int arm = 0; arm < 2; ++arm) {
      out.completed_mean[arm] = cd.arms[arm].values.col(final_visit).mean();
      out.completed_sd[arm] = detail::sample_sd(cd.arms[arm].values.col(final_visit));
    }
    out.has_completed = true;
    return out;
  }

  // MI-based methods
  std::vector<CompletedDataset> completed;
  switch (method) {
    case Method::kNimMean: {
      const double xbar = pooled_baseline_mean(dataset);
      completed = impute_m(dataset, imputations, rng);
      for (CompletedDataset& cd : completed) cd = rtb_mean_shift(std::move(cd), xbar);
      break;
    }
    case Method::kNimMeanVar: {
      const double xbar = pooled_baseline_mean(dataset);
      const double sx = pooled_baseline_sd(dataset);
      completed = impute_m(dataset, imputations, rng);
      for (CompletedDataset& cd : completed) {
        cd = rtb_mean_var_shift(std::move(cd), xbar, sx);
      }
      break;
    }
    case Method::kTim:
      completed = tim_impute(dataset, imputations, rng);
      break;
    case Method::kQuan:
      completed = quan_impute(dataset, imputations, rng);
      break;
    default:
      throw std::invalid_argument("analyze_method: unhandled method");
  }

  std::array<std::vector<double>, 3> estimates;
  std::array<std::vector<double>, 3> variances;
  double cmean[2] = {0.0, 0.0};
  double csd[2] = {0.0, 0.0};
  for (const CompletedDataset& cd : completed) {
    const AncovaResult a = ancova(cd);
    const double pts[3] = {a.lsmeans[0], a.lsmeans[1], a.diff};
    const double ses[3] = {a.lsmean_ses[0], a.lsmean_ses[1], a.diff_se};
    for (int i = 0; i < 3; ++i) {
      estimates[i].push_back(pts[i]);
      variances[i].push_back(ses[i] * ses[i]);
    }
    for (int arm = 0; arm < 2; ++arm) {
      cmean[arm] += cd.arms[arm].values.col(final_visit).mean();
      csd[arm] += detail::sample_sd(cd.arms[arm].values.col(final_visit));
    }
  }
  const double m = static_cast<double>(completed.size());
  for (int i = 0; i < 3; ++i) {
    const PooledEstimate pooled = rubin_pool(estimates[i], variances[i], alpha);
    out.point[i] = pooled.point;
    out.se[i] = pooled.se();
    out.ci[i] = pooled.ci;
  }
  out.has_se = true;
  for (int arm = 0; arm < 2; ++arm) {
    out.completed_mean[arm] = cmean[arm] / m;
    out.completed_sd[arm] = csd[arm] / m;
  }
  out.has_completed = true;
  return out;
}

/// Bootstrap SE and expanded-percentile t confidence interval for one
/// quantity.
struct BootstrapResult {
  double se_b = 0.0;
  std::pair<double, double> ci_b{0.0, 0.0};
  long n_tilde = 0;       // completer count backing the t adjustment
  double alpha_prime = 0.0;
  int failures = 0;       // bootstrap replicates that failed to fit
};

namespace detail {

inline ArmData resample_arm(const ArmData& arm, Rng& rng) {
  ArmData out;
  out.label = arm.label;
  out.values.resize(arm.values.rows(), arm.values.cols());
  out.mask.resize(arm.mask.rows(), arm.mask.cols());
  const auto n = static_cast<std::uint64_t>(arm.values.rows());
  for (Eigen::Index i = 0; i < arm.values.rows(); ++i) {
    const auto pick = static_cast<Eigen::Index>(rng.uniform_below(n));
    out.values.row(i) = arm.values.row(pick);
    out.mask.row(i) = arm.mask.row(pick);
  }
  return out;
}

/// Subject-level resample, stratified by arm so the design is preserved.
inline TrialDataset resample_dataset(const TrialDataset& dataset, Rng& rng) {
  TrialDataset out;
  out.K = dataset.K;
  out.arms.reserve(dataset.arms.size());
  for (const ArmData& arm : dataset.arms) out.arms.push_back(resample_arm(arm, rng));
  return out;
}

}  // namespace detail

/// Bootstrap the full pipeline (resample -> impute -> analyze -> pool).
/// theta_hat carries the full-data estimates the intervals are centered on;
/// boot_imputations is the per-replicate M (smaller than the full-data M to
/// bound cost). Aborts when more than 5% of replicates fail.
inline std::array<BootstrapResult, 3> bootstrap_ci_around(
    const TrialDataset& dataset, Method method, int boot_imputations, int B,
    double alpha, const std::array<double, 3>& theta_hat, Rng& rng) {
  if (B < 50) throw std::invalid_argument("bootstrap_ci: B must be >= 50");
  if (dataset.arms.size() != 2) {
    throw std::invalid_argument("bootstrap_ci: expected exactly two arms");
  }
  std::array<std::vector<double>, 3> replicate_estimates;
  for (auto& v : replicate_estimates) v.reserve(B);
  int failures = 0;
  for (int b = 0; b < B; ++b) {
    Rng rb = rng.spawn();
    try {
      const TrialDataset resampled = detail::resample_dataset(dataset, rb);
      const MethodAnalysis analysis =
          analyze_method(resampled, method, boot_imputations, alpha, rb);
      for (int i = 0; i < 3; ++i) replicate_estimates[i].push_back(analysis.point[i]);
    } catch (const std::exception&) {
      ++failures;
    }
  }
  if (failures * 20 > B) {
    throw numeric_error("bootstrap_ci: " + std::to_string(failures) + " of " +
                        std::to_string(B) + " bootstrap replicates failed");
  }

  long completers[2] = {0, 0};
  for (int arm = 0; arm < 2; ++arm) {
    completers[arm] = dataset.arms[arm].mask.col(dataset.K).cast<long>().sum();
  }
  const long n_tilde_by_quantity[3] = {completers[0], completers[1],
                                       completers[0] + completers[1]};

  std::array<BootstrapResult, 3> out;
  for (int i = 0; i < 3; ++i) {
    const auto& est = replicate_estimates[i];
    double mean = 0.0;
    for (double e : est) mean += e;
    mean /= static_cast<double>(est.size());
    double ss = 0.0;
    for (double e : est) ss += (e - mean) * (e - mean);
    const double se_b = std::sqrt(ss / static_cast<double>(est.size() - 1));

    BootstrapResult r;
    r.se_b = se_b;
    r.n_tilde = n_tilde_by_quantity[i];
    r.failures = failures;
    r.alpha_prime = expanded_alpha(alpha, r.n_tilde);
    const double q = detail::t_quantile(1.0 - r.alpha_prime / 2.0,
                                        static_cast<double>(r.n_tilde - 2));
    r.ci_b = {theta_hat[i] - q * se_b, theta_hat[i] + q * se_b};
    out[i] = r;
  }
  return out;
}

/// Spec-facing variant: computes the full-data estimate itself, then
/// bootstraps around it.
inline std::array<BootstrapResult, 3> bootstrap_ci(const TrialDataset& dataset,
                                                   Method method, int imputations,
                                                   int B, double alpha, Rng& rng,
                                                   int boot_imputations = 10) {
  const MethodAnalysis full =
      analyze_method(dataset, method, imputations, alpha, rng);
  return bootstrap_ci_around(dataset, method, boot_imputations, B, alpha,
                             full.point, rng);
}

}  // namespace rtb
