#pragma once

// Dense multivariate-normal primitives: compound-symmetry covariance
// construction, Cholesky factorization, sampling, and conditional
// (Schur-complement) distributions.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "rtb/errors.hpp"
#include "rtb/rng.hpp"

namespace rtb {

/// Compound-symmetry covariance: sigma^2 on the diagonal, rho*sigma^2 off it.
/// Positive definite iff rho is in (-1/(dim-1), 1).
inline Eigen::MatrixXd build_cs_covariance(double sigma, double rho, int dim) {
  if (dim < 1) {
    throw std::invalid_argument("build_cs_covariance: dim must be >= 1");
  }
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("build_cs_covariance: sigma must be > 0");
  }
  if (dim > 1) {
    const double lower = -1.0 / static_cast<double>(dim - 1);
    if (!(rho > lower && rho < 1.0)) {
      throw std::invalid_argument(
          "build_cs_covariance: rho=" + std::to_string(rho) +
          " outside (" + std::to_string(lower) + ", 1)");
    }
  }
  Eigen::MatrixXd cov = Eigen::MatrixXd::Constant(dim, dim, rho * sigma * sigma);
  cov.diagonal().setConstant(sigma * sigma);
  return cov;
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
/// Symmetry beyond 1e-12 (relative to the largest diagonal entry) is an
/// error rather than being silently symmetrized; a non-positive pivot is
/// reported with its index.
inline Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& cov) {
  const Eigen::Index n = cov.rows();
  if (n == 0 || cov.cols() != n) {
    throw std::invalid_argument("cholesky_lower: matrix must be square and nonempty");
  }
  const double max_diag = cov.diagonal().cwiseAbs().maxCoeff();
  const double sym_tol = 1e-12 * std::max(1.0, max_diag);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (std::abs(cov(i, j) - cov(j, i)) > sym_tol) {
        throw std::invalid_argument(
            "cholesky_lower: input asymmetric at (" + std::to_string(i) +
            "," + std::to_string(j) + ")");
      }
    }
  }
  const double pivot_floor = 1e-12 * max_diag;
  Eigen::MatrixXd chol = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double pivot = cov(j, j) - chol.row(j).head(j).squaredNorm();
    if (!(pivot > pivot_floor)) {
      throw numeric_error("cholesky_lower: non-positive-definite input, pivot " +
                          std::to_string(j) + " = " + std::to_string(pivot));
    }
    chol(j, j) = std::sqrt(pivot);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double s = cov(i, j) - chol.row(i).head(j).dot(chol.row(j).head(j));
      chol(i, j) = s / chol(j, j);
    }
  }
  return chol;
}

/// Immutable multivariate normal with a cached lower Cholesky factor.
class MvnDistribution {
 public:
  MvnDistribution(Eigen::VectorXd mean, Eigen::MatrixXd cov)
      : mean_(std::move(mean)), cov_(std::move(cov)) {
    if (mean_.size() != cov_.rows()) {
      throw std::invalid_argument("MvnDistribution: mean/cov dimension mismatch");
    }
    chol_ = cholesky_lower(cov_);
  }

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& cov() const { return cov_; }
  const Eigen::MatrixXd& chol() const { return chol_; }
  int dim() const { return static_cast<int>(mean_.size()); }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd chol_;
};

/// One draw: mean + L z with z iid standard normal.
inline Eigen::VectorXd mvn_sample(const MvnDistribution& dist, Rng& rng) {
  Eigen::VectorXd z(dist.dim());
  for (int i = 0; i < dist.dim(); ++i) z(i) = rng.normal();
  return dist.mean() + dist.chol() * z;
}

/// Conditional distribution of the unobserved coordinates given exact values
/// for the observed ones:
///   mean = mu_2 + S21 S11^-1 (v - mu_1),  cov = S22 - S21 S11^-1 S12.
inline MvnDistribution conditional_mvn(const MvnDistribution& dist,
                                       const std::vector<int>& observed_idx,
                                       const Eigen::VectorXd& observed_vals) {
  const int d = dist.dim();
  if (observed_idx.empty()) {
    throw std::invalid_argument("conditional_mvn: observed index set is empty");
  }
  if (static_cast<int>(observed_idx.size()) >= d) {
    throw std::invalid_argument(
        "conditional_mvn: all coordinates observed, nothing to condition");
  }
  if (observed_vals.size() != static_cast<Eigen::Index>(observed_idx.size())) {
    throw std::invalid_argument("conditional_mvn: observed value count mismatch");
  }
  std::vector<char> seen(d, 0);
  for (int idx : observed_idx) {
    if (idx < 0 || idx >= d) {
      throw std::invalid_argument("conditional_mvn: index out of range");
    }
    if (seen[idx]++) {
      throw std::invalid_argument("conditional_mvn: duplicate observed index");
    }
  }
  std::vector<int> rest;
  rest.reserve(d - observed_idx.size());
  for (int i = 0; i < d; ++i) {
    if (!seen[i]) rest.push_back(i);
  }

  const Eigen::VectorXi obs =
      Eigen::Map<const Eigen::VectorXi>(observed_idx.data(), observed_idx.size());
  const Eigen::VectorXi rem =
      Eigen::Map<const Eigen::VectorXi>(rest.data(), rest.size());

  const Eigen::MatrixXd s11 = dist.cov()(obs, obs);
  const Eigen::MatrixXd s12 = dist.cov()(obs, rem);
  const Eigen::MatrixXd s22 = dist.cov()(rem, rem);

  Eigen::MatrixXd l11;
  try {
    l11 = cholesky_lower(s11);
  } catch (const numeric_error& e) {
    throw numeric_error(std::string("conditional_mvn: singular conditioning block (") +
                        e.what() + ")");
  }
  // w = S11^-1 S12, via two triangular solves against the factor
  const Eigen::MatrixXd w = l11.transpose()
                                .triangularView<Eigen::Upper>()
                                .solve(l11.triangularView<Eigen::Lower>().solve(s12));

  const Eigen::VectorXd shift = observed_vals - dist.mean()(obs);
  const Eigen::VectorXd cond_mean = dist.mean()(rem) + w.transpose() * shift;
  Eigen::MatrixXd cond_cov = s22 - s12.transpose() * w;
  cond_cov = ((cond_cov + cond_cov.transpose()) * 0.5).eval();
  return MvnDistribution(cond_mean, std::move(cond_cov));
}

}  // namespace rtb
