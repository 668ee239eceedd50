#pragma once

// Proper multiple imputation for monotone missingness, one arm at a time.
//
// The joint normal likelihood of a monotone longitudinal arm factors into a
// sequence of regressions of each visit on all earlier visits. Imputation
// walks the visits in order: fit the visit-k regression on completers, draw
// regression parameters from their noninformative-prior posterior, then fill
// each missing visit-k cell from the conditional normal given the subject's
// (by now complete) history. This is the monotone-regression scheme behind
// the standard procedures the method builds on.

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rtb/datagen.hpp"
#include "rtb/errors.hpp"
#include "rtb/mvn.hpp"
#include "rtb/rng.hpp"

namespace rtb {

/// OLS fit of visit k on (1, y_0, ..., y_{k-1}) among subjects observed
/// through visit k.
struct VisitRegression {
  int visit = 0;
  Eigen::VectorXd coeffs;          // intercept first
  double resid_var = 0.0;          // RSS / (n_used - p)
  int n_used = 0;
  Eigen::MatrixXd xtx_inv;         // (X'X)^-1
  Eigen::MatrixXd xtx_inv_factor;  // A with A A' = (X'X)^-1, for posterior noise
};

namespace detail {
// Minimum completers for a p-coefficient fit; below this the run aborts
// rather than degrading silently.
inline int min_complete_cases(int p) { return p + 3; }
}  // namespace detail

inline VisitRegression fit_visit_regression(const ArmData& arm, int k) {
  const int visits = arm.visits();
  if (k < 1 || k >= visits) {
    throw std::invalid_argument("fit_visit_regression: visit out of range");
  }
  const int p = k + 1;  // intercept + visits 0..k-1
  std::vector<int> rows;
  rows.reserve(arm.n());
  for (int i = 0; i < arm.n(); ++i) {
    if (arm.mask(i, k)) rows.push_back(i);
  }
  const int n_used = static_cast<int>(rows.size());
  if (n_used < detail::min_complete_cases(p)) {
    throw degenerate_data_error(
        "fit_visit_regression: " + std::to_string(n_used) +
        " complete cases at visit " + std::to_string(k) + ", need at least " +
        std::to_string(detail::min_complete_cases(p)));
  }

  Eigen::MatrixXd design(n_used, p);
  Eigen::VectorXd response(n_used);
  for (int r = 0; r < n_used; ++r) {
    design(r, 0) = 1.0;
    for (int j = 0; j < k; ++j) design(r, j + 1) = arm.values(rows[r], j);
    response(r) = arm.values(rows[r], k);
  }

  const Eigen::MatrixXd xtx = design.transpose() * design;
  Eigen::MatrixXd l;
  try {
    l = cholesky_lower(xtx);
  } catch (const numeric_error& e) {
    throw numeric_error("fit_visit_regression: singular design at visit " +
                        std::to_string(k) + " (" + e.what() + ")");
  }
  const Eigen::VectorXd xty = design.transpose() * response;
  const Eigen::VectorXd coeffs =
      l.transpose().triangularView<Eigen::Upper>().solve(
          l.triangularView<Eigen::Lower>().solve(xty));

  const double rss = (response - design * coeffs).squaredNorm();
  const double resid_var = rss / static_cast<double>(n_used - p);
  const double response_scale =
      (response.array() - response.mean()).square().sum() /
          static_cast<double>(n_used - 1) +
      1e-100;
  if (resid_var <= 1e-12 * response_scale) {
    throw degenerate_data_error(
        "fit_visit_regression: zero residual variance at visit " +
        std::to_string(k) + " (response is an exact function of its history)");
  }

  VisitRegression fit;
  fit.visit = k;
  fit.coeffs = coeffs;
  fit.resid_var = resid_var;
  fit.n_used = n_used;
  // (X'X)^-1 = L^-T L^-1; the factor L^-T already satisfies A A' = (X'X)^-1.
  const Eigen::MatrixXd linv =
      l.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(p, p));
  fit.xtx_inv_factor = linv.transpose();
  fit.xtx_inv = fit.xtx_inv_factor * linv;
  return fit;
}

struct PosteriorDraw {
  Eigen::VectorXd coeffs;
  double resid_var = 0.0;
};

/// Noninformative-prior posterior draw:
///   resid_var* = resid_var * (n-p) / chi2_{n-p},
///   coeffs*    ~ N(coeffs, resid_var* (X'X)^-1).
inline PosteriorDraw draw_posterior(const VisitRegression& fit, Rng& rng) {
  const int p = static_cast<int>(fit.coeffs.size());
  const double nu = static_cast<double>(fit.n_used - p);
  PosteriorDraw draw;
  draw.resid_var = fit.resid_var * nu / rng.chi_square(nu);
  Eigen::VectorXd z(p);
  for (int i = 0; i < p; ++i) z(i) = rng.normal();
  draw.coeffs = fit.coeffs + std::sqrt(draw.resid_var) * (fit.xtx_inv_factor * z);
  return draw;
}

/// One completed copy of an arm (or trial); cells observed in the source are
/// bit-identical to it.
struct CompletedArm {
  std::string label;
  Eigen::MatrixXd values;
  Mask source_mask;
};

struct CompletedDataset {
  std::vector<CompletedArm> arms;
  std::string method;
  int m = 0;  // imputation index
  int K = 0;
};

/// Sequentially impute one arm. Visits with nothing missing are skipped, so a
/// fully observed arm comes back untouched.
inline CompletedArm impute_arm_once(const ArmData& arm, Rng& rng) {
  if (!is_monotone(arm.mask)) {
    throw std::invalid_argument("impute_arm_once: missingness pattern is not monotone");
  }
  CompletedArm out{arm.label, arm.values, arm.mask};
  const int visits = arm.visits();
  for (int k = 1; k < visits; ++k) {
    std::vector<int> missing;
    for (int i = 0; i < arm.n(); ++i) {
      if (!arm.mask(i, k)) missing.push_back(i);
    }
    if (missing.empty()) continue;
    const VisitRegression fit = fit_visit_regression(arm, k);
    const PosteriorDraw draw = draw_posterior(fit, rng);
    const double resid_sd = std::sqrt(draw.resid_var);
    for (int i : missing) {
      double mu = draw.coeffs(0);
      for (int j = 0; j < k; ++j) mu += draw.coeffs(j + 1) * out.values(i, j);
      out.values(i, k) = mu + resid_sd * rng.normal();
    }
  }
  return out;
}

/// One completed dataset; arms are imputed separately.
inline CompletedDataset impute_once(const TrialDataset& dataset, Rng& rng) {
  CompletedDataset completed;
  completed.method = "mi";
  completed.K = dataset.K;
  completed.arms.reserve(dataset.arms.size());
  for (const ArmData& arm : dataset.arms) {
    completed.arms.push_back(impute_arm_once(arm, rng));
  }
  return completed;
}

/// M independent completed datasets from disjoint child streams.
inline std::vector<CompletedDataset> impute_m(const TrialDataset& dataset, int M,
                                              Rng& rng) {
  if (M < 2) {
    throw std::invalid_argument("impute_m: M must be >= 2");
  }
  std::vector<Rng> streams;
  streams.reserve(M);
  for (int m = 0; m < M; ++m) streams.push_back(rng.spawn());
  std::vector<CompletedDataset> out;
  out.reserve(M);
  for (int m = 0; m < M; ++m) {
    CompletedDataset cd = impute_once(dataset, streams[m]);
    cd.m = m + 1;
    out.push_back(std::move(cd));
  }
  return out;
}

}  // namespace rtb
