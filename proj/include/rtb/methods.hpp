#pragma once

// Return-to-baseline estimators and competitors.
//
// The mean-shift method recenters proper-MI draws of the final visit so each
// arm's completed-data mean lands on the pooled baseline mean; the mean+var
// variant additionally rescales the imputed values to the pooled baseline SD.
// Competitors: the traditional baseline-plus-noise imputation (TIM), the
// bivariate-approximation imputation (Quan), baseline observation carried
// forward (BOCF), and the direct-ML estimator pi_hat * mu_delta_hat.

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "rtb/datagen.hpp"
#include "rtb/errors.hpp"
#include "rtb/mi.hpp"
#include "rtb/rng.hpp"

namespace rtb {

enum class Method { kNimMean, kNimMeanVar, kTim, kQuan, kBocf, kDirectMl };

inline const char* method_token(Method m) {
  switch (m) {
    case Method::kNimMean: return "nim-mean";
    case Method::kNimMeanVar: return "nim-meanvar";
    case Method::kTim: return "tim";
    case Method::kQuan: return "quan";
    case Method::kBocf: return "bocf";
    case Method::kDirectMl: return "direct-ml";
  }
  throw std::invalid_argument("method_token: unknown method");
}

inline Method method_from_token(const std::string& token) {
  for (Method m : {Method::kNimMean, Method::kNimMeanVar, Method::kTim,
                   Method::kQuan, Method::kBocf, Method::kDirectMl}) {
    if (token == method_token(m)) return m;
  }
  throw std::invalid_argument("unknown method token '" + token +
                              "' (expected nim-mean, nim-meanvar, tim, quan, "
                              "bocf, or direct-ml)");
}

namespace detail {

inline double sample_sd(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  if (n < 2) throw std::invalid_argument("sample_sd: need at least 2 values");
  const double mean = v.mean();
  return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(n - 1));
}

}  // namespace detail

/// Baseline mean pooled across treatment groups (baseline is never missing).
inline double pooled_baseline_mean(const TrialDataset& dataset) {
  double sum = 0.0;
  long count = 0;
  for (const ArmData& arm : dataset.arms) {
    sum += arm.values.col(0).sum();
    count += arm.n();
  }
  if (count == 0) throw std::invalid_argument("pooled_baseline_mean: empty dataset");
  return sum / static_cast<double>(count);
}

/// Baseline SD pooled across treatment groups (single-sample SD of all
/// baselines, matching the pooled mean convention).
inline double pooled_baseline_sd(const TrialDataset& dataset) {
  const double mean = pooled_baseline_mean(dataset);
  double ss = 0.0;
  long count = 0;
  for (const ArmData& arm : dataset.arms) {
    ss += (arm.values.col(0).array() - mean).square().sum();
    count += arm.n();
  }
  if (count < 2) throw std::invalid_argument("pooled_baseline_sd: need >= 2 subjects");
  return std::sqrt(ss / static_cast<double>(count - 1));
}

/// Mean-shift return-to-baseline: every imputed final-visit value becomes
/// v - mu_hat_y + xbar_pooled, where mu_hat_y is that arm's completed-data
/// final-visit mean. Observed cells stay put.
inline CompletedDataset rtb_mean_shift(CompletedDataset completed,
                                       double baseline_pooled_mean) {
  const int final_visit = completed.K;
  for (CompletedArm& arm : completed.arms) {
    const Eigen::Index n = arm.values.rows();
    if (n == 0) throw std::invalid_argument("rtb_mean_shift: empty arm");
    const double mu_hat_y = arm.values.col(final_visit).mean();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!arm.source_mask(i, final_visit)) {
        arm.values(i, final_visit) += baseline_pooled_mean - mu_hat_y;
      }
    }
  }
  completed.method = "nim-mean";
  return completed;
}

/// Mean+variance return-to-baseline: imputed final-visit values are also
/// rescaled about the arm mean by s_x / s_y, with s_y the arm's
/// completed-data final-visit SD.
inline CompletedDataset rtb_mean_var_shift(CompletedDataset completed,
                                           double baseline_pooled_mean,
                                           double baseline_pooled_sd) {
  const int final_visit = completed.K;
  for (CompletedArm& arm : completed.arms) {
    const Eigen::Index n = arm.values.rows();
    if (n == 0) throw std::invalid_argument("rtb_mean_var_shift: empty arm");
    const double mu_hat_y = arm.values.col(final_visit).mean();
    const double s_y = detail::sample_sd(arm.values.col(final_visit));
    if (!(s_y > 0.0)) {
      throw degenerate_data_error(
          "rtb_mean_var_shift: zero completed-data SD in arm '" + arm.label + "'");
    }
    const double scale = baseline_pooled_sd / s_y;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!arm.source_mask(i, final_visit)) {
        arm.values(i, final_visit) =
            scale * (arm.values(i, final_visit) - mu_hat_y) + baseline_pooled_mean;
      }
    }
  }
  completed.method = "nim-meanvar";
  return completed;
}

namespace detail {

/// Shared skeleton for the final-visit-only imputers (TIM, Quan, BOCF):
/// copies the arm and overwrites missing final cells with baseline + noise_sd
/// * z. Intermediate missing cells are left as-is; the final-visit analysis
/// never reads them.
inline CompletedArm impute_final_from_baseline(const ArmData& arm, int final_visit,
                                               double noise_sd, Rng* rng) {
  CompletedArm out{arm.label, arm.values, arm.mask};
  for (int i = 0; i < arm.n(); ++i) {
    if (!arm.mask(i, final_visit)) {
      const double noise = (rng != nullptr) ? noise_sd * rng->normal() : 0.0;
      out.values(i, final_visit) = arm.values(i, 0) + noise;
    }
  }
  return out;
}

}  // namespace detail

/// Traditional imputation (baseline plus independent noise): tau_hat is the
/// per-arm SD of the observed change from baseline among completers, held
/// fixed across imputations; the noise is redrawn for each m.
inline std::vector<CompletedDataset> tim_impute(const TrialDataset& dataset, int M,
                                                Rng& rng) {
  if (M < 1) throw std::invalid_argument("tim_impute: M must be >= 1");
  const int final_visit = dataset.K;
  std::vector<double> tau(dataset.arms.size());
  for (std::size_t a = 0; a < dataset.arms.size(); ++a) {
    const ArmData& arm = dataset.arms[a];
    std::vector<double> change;
    for (int i = 0; i < arm.n(); ++i) {
      if (arm.mask(i, final_visit)) {
        change.push_back(arm.values(i, final_visit) - arm.values(i, 0));
      }
    }
    if (change.size() < 2) {
      throw degenerate_data_error("tim_impute: fewer than 2 completers in arm '" +
                                  arm.label + "'");
    }
    tau[a] = detail::sample_sd(
        Eigen::Map<const Eigen::VectorXd>(change.data(), change.size()));
  }
  std::vector<CompletedDataset> out;
  out.reserve(M);
  for (int m = 1; m <= M; ++m) {
    CompletedDataset cd;
    cd.method = "tim";
    cd.m = m;
    cd.K = dataset.K;
    for (std::size_t a = 0; a < dataset.arms.size(); ++a) {
      cd.arms.push_back(detail::impute_final_from_baseline(
          dataset.arms[a], final_visit, tau[a], &rng));
    }
    out.push_back(std::move(cd));
  }
  return out;
}

/// Quan et al.'s approximation: missing final values drawn from
/// N(baseline, 2 tau^2) with tau^2 the per-arm mean squared difference
/// between baseline and the first postbaseline measurement.
inline std::vector<CompletedDataset> quan_impute(const TrialDataset& dataset, int M,
                                                 Rng& rng) {
  if (M < 1) throw std::invalid_argument("quan_impute: M must be >= 1");
  const int final_visit = dataset.K;
  std::vector<double> noise_sd(dataset.arms.size());
  for (std::size_t a = 0; a < dataset.arms.size(); ++a) {
    const ArmData& arm = dataset.arms[a];
    double ss = 0.0;
    long count = 0;
    for (int i = 0; i < arm.n(); ++i) {
      if (arm.mask(i, 1)) {
        const double d = arm.values(i, 1) - arm.values(i, 0);
        ss += d * d;
        ++count;
      }
    }
    if (count < 2) {
      throw degenerate_data_error(
          "quan_impute: fewer than 2 observed first-postbaseline pairs in arm '" +
          arm.label + "'");
    }
    const double tau2 = ss / static_cast<double>(count);
    noise_sd[a] = std::sqrt(2.0 * tau2);
  }
  std::vector<CompletedDataset> out;
  out.reserve(M);
  for (int m = 1; m <= M; ++m) {
    CompletedDataset cd;
    cd.method = "quan";
    cd.m = m;
    cd.K = dataset.K;
    for (std::size_t a = 0; a < dataset.arms.size(); ++a) {
      cd.arms.push_back(detail::impute_final_from_baseline(
          dataset.arms[a], final_visit, noise_sd[a], &rng));
    }
    out.push_back(std::move(cd));
  }
  return out;
}

/// Baseline observation carried forward; deterministic, single copy.
inline CompletedDataset bocf(const TrialDataset& dataset) {
  CompletedDataset cd;
  cd.method = "bocf";
  cd.m = 1;
  cd.K = dataset.K;
  for (const ArmData& arm : dataset.arms) {
    cd.arms.push_back(
        detail::impute_final_from_baseline(arm, dataset.K, 0.0, nullptr));
  }
  return cd;
}

struct DirectMlArmEstimate {
  std::string label;
  double pi_hat = 1.0;
  double mu_delta_hat = 0.0;
  double estimate = 0.0;  // pi_hat * mu_delta_hat
};

struct DirectMlEstimate {
  std::vector<DirectMlArmEstimate> arms;
  double difference = std::numeric_limits<double>::quiet_NaN();
};

/// Likelihood-based implicit return-to-baseline estimator. The marginal mean
/// at each visit comes from composing the monotone visit regressions
/// (the factored-likelihood ML under ignorable monotone missingness); the
/// retention probability is the observed completer fraction.
inline DirectMlEstimate direct_ml_estimate(const TrialDataset& dataset) {
  DirectMlEstimate result;
  const int final_visit = dataset.K;
  for (const ArmData& arm : dataset.arms) {
    if (!is_monotone(arm.mask)) {
      throw std::invalid_argument("direct_ml_estimate: non-monotone missingness in arm '" +
                                  arm.label + "'");
    }
    Eigen::VectorXd marginal_mean(arm.visits());
    marginal_mean(0) = arm.values.col(0).mean();
    for (int k = 1; k < arm.visits(); ++k) {
      bool any_missing = false;
      for (int i = 0; i < arm.n() && !any_missing; ++i) {
        any_missing = !arm.mask(i, k);
      }
      if (!any_missing) {
        // OLS with an intercept passes through the sample means, so the fit
        // is only needed when something is actually missing.
        marginal_mean(k) = arm.values.col(k).mean();
        continue;
      }
      const VisitRegression fit = fit_visit_regression(arm, k);
      double mu = fit.coeffs(0);
      for (int j = 0; j < k; ++j) mu += fit.coeffs(j + 1) * marginal_mean(j);
      marginal_mean(k) = mu;
    }
    DirectMlArmEstimate est;
    est.label = arm.label;
    est.pi_hat = arm.mask.col(final_visit).cast<double>().mean();
    est.mu_delta_hat = marginal_mean(final_visit) - marginal_mean(0);
    est.estimate = est.pi_hat * est.mu_delta_hat;
    result.arms.push_back(std::move(est));
  }
  if (result.arms.size() == 2) {
    result.difference = result.arms[1].estimate - result.arms[0].estimate;
  }
  return result;
}

}  // namespace rtb
