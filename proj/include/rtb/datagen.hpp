#pragma once

// Synthetic longitudinal-trial generation: multivariate-normal outcome
// trajectories over K+1 visits, monotone logistic dropout, and the
// Monte-Carlo oracle for the return-to-baseline target pi_i * mu_delta_y,i.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rtb/errors.hpp"
#include "rtb/mvn.hpp"
#include "rtb/rng.hpp"

namespace rtb {

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr double kMissingValue = std::numeric_limits<double>::quiet_NaN();

/// Covariance specification for one arm's trajectory.
struct CovarianceSpec {
  enum class Kind { kCompoundSymmetry, kExplicit };

  Kind kind = Kind::kCompoundSymmetry;
  double sigma = 1.0;  // SD, compound-symmetry only
  double rho = 0.0;    // correlation, compound-symmetry only
  Eigen::MatrixXd matrix;  // explicit kind only

  static CovarianceSpec compound_symmetry(double sigma, double rho) {
    if (!(sigma > 0.0)) {
      throw std::invalid_argument("CovarianceSpec: sigma must be > 0");
    }
    CovarianceSpec spec;
    spec.kind = Kind::kCompoundSymmetry;
    spec.sigma = sigma;
    spec.rho = rho;
    return spec;
  }

  /// Explicit matrix; validated for symmetry, positive diagonal, and
  /// positive definiteness (Cholesky must succeed).
  static CovarianceSpec explicit_matrix(Eigen::MatrixXd m) {
    if (m.rows() == 0 || m.rows() != m.cols()) {
      throw std::invalid_argument("CovarianceSpec: matrix must be square");
    }
    if (!(m.diagonal().minCoeff() > 0.0)) {
      throw std::invalid_argument("CovarianceSpec: diagonal must be strictly positive");
    }
    cholesky_lower(m);  // throws on asymmetry or non-PD
    CovarianceSpec spec;
    spec.kind = Kind::kExplicit;
    spec.matrix = std::move(m);
    return spec;
  }

  Eigen::MatrixXd materialize(int dim) const {
    if (kind == Kind::kCompoundSymmetry) {
      return build_cs_covariance(sigma, rho, dim);
    }
    if (matrix.rows() != dim) {
      throw std::invalid_argument("CovarianceSpec: explicit matrix is " +
                                  std::to_string(matrix.rows()) + "x" +
                                  std::to_string(matrix.cols()) +
                                  ", expected dim " + std::to_string(dim));
    }
    return matrix;
  }
};

/// One treatment arm: label, size, per-visit means, covariance.
struct ArmSpec {
  std::string label;
  int n = 0;
  Eigen::VectorXd means;  // visits 0..K
  CovarianceSpec cov;
};

inline void validate_arm_spec(const ArmSpec& spec) {
  if (spec.n < 2) {
    throw std::invalid_argument("ArmSpec '" + spec.label + "': n must be >= 2");
  }
  if (spec.means.size() < 2) {
    throw std::invalid_argument("ArmSpec '" + spec.label +
                                "': need a baseline and at least one postbaseline visit");
  }
  spec.cov.materialize(static_cast<int>(spec.means.size()));  // dimension check
}

enum class Mechanism { kMcar, kMdo };

/// Monotone logistic dropout: a visit stays observed with probability
/// 1 / (1 + exp(alpha0 + alpha1 * y_prev)) given retention so far.
struct MissingnessSpec {
  Mechanism mechanism = Mechanism::kMcar;
  double alpha0 = 0.0;
  double alpha1 = 0.0;

  static MissingnessSpec from_params(double alpha0, double alpha1) {
    MissingnessSpec spec;
    spec.alpha0 = alpha0;
    spec.alpha1 = alpha1;
    spec.mechanism = (alpha1 == 0.0) ? Mechanism::kMcar : Mechanism::kMdo;
    return spec;
  }
};

/// One arm of a trial: values matrix n x (K+1) with NaN at unobserved cells,
/// and the parallel observation mask (true = observed).
struct ArmData {
  std::string label;
  Eigen::MatrixXd values;
  Mask mask;

  int n() const { return static_cast<int>(values.rows()); }
  int visits() const { return static_cast<int>(values.cols()); }
};

struct TrialDataset {
  std::vector<ArmData> arms;
  int K = 0;  // postbaseline visit count; values have K+1 columns
};

/// Mask sanity: baseline observed, and once a visit is missing every later
/// visit is missing too.
inline bool is_monotone(const Mask& mask) {
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    if (!mask(i, 0)) return false;
    for (Eigen::Index k = 1; k + 1 < mask.cols(); ++k) {
      if (!mask(i, k) && mask(i, k + 1)) return false;
    }
  }
  return true;
}

/// i.i.d. rows from N(means, cov); n x (K+1).
inline Eigen::MatrixXd generate_complete(const ArmSpec& spec, Rng& rng) {
  validate_arm_spec(spec);
  const int dim = static_cast<int>(spec.means.size());
  const Eigen::MatrixXd chol = cholesky_lower(spec.cov.materialize(dim));
  Eigen::MatrixXd out(spec.n, dim);
  Eigen::VectorXd z(dim);
  for (int i = 0; i < spec.n; ++i) {
    for (int j = 0; j < dim; ++j) z(j) = rng.normal();
    out.row(i) = (spec.means + chol * z).transpose();
  }
  return out;
}

/// Retention probability 1 / (1 + exp(alpha0 + alpha1 * y_prev)).
inline double retention_prob(double alpha0, double alpha1, double y_prev) {
  return 1.0 / (1.0 + std::exp(alpha0 + alpha1 * y_prev));
}

/// Apply monotone dropout to complete data. Baseline is always observed;
/// visit k survives with retention_prob against the visit k-1 value, and a
/// drop at k blanks every later visit.
inline ArmData apply_missingness(const Eigen::MatrixXd& complete,
                                 const MissingnessSpec& spec, Rng& rng,
                                 std::string label = {}) {
  if (complete.cols() < 2) {
    throw std::invalid_argument("apply_missingness: need baseline plus postbaseline visits");
  }
  ArmData arm;
  arm.label = std::move(label);
  arm.values = complete;
  arm.mask = Mask::Constant(complete.rows(), complete.cols(), true);
  for (Eigen::Index i = 0; i < complete.rows(); ++i) {
    for (Eigen::Index k = 1; k < complete.cols(); ++k) {
      const double p_keep =
          retention_prob(spec.alpha0, spec.alpha1, complete(i, k - 1));
      if (!rng.bernoulli(p_keep)) {
        for (Eigen::Index kk = k; kk < complete.cols(); ++kk) {
          arm.mask(i, kk) = false;
          arm.values(i, kk) = kMissingValue;
        }
        break;
      }
    }
  }
  return arm;
}

struct ArmTruth {
  std::string label;
  double pi = 1.0;            // P(final visit observed)
  double mu_delta_y = 0.0;    // mu_K - mu_0, analytic
  double mu_delta_rtb = 0.0;  // pi * mu_delta_y
};

struct ScenarioTruth {
  std::vector<ArmTruth> arms;
  double difference = std::numeric_limits<double>::quiet_NaN();  // arm[1] - arm[0]
};

/// Monte-Carlo oracle for the return-to-baseline estimand: pi_i estimated as
/// the fraction of mc_subjects retained at the final visit, mu_delta_y taken
/// analytically from the arm means. 10^6 subjects keep the pi error near 5e-4.
inline ScenarioTruth true_rtb_mean(const std::vector<ArmSpec>& arms,
                                   const MissingnessSpec& missing,
                                   long mc_subjects, Rng& rng) {
  if (mc_subjects < 1) {
    throw std::invalid_argument("true_rtb_mean: mc_subjects must be >= 1");
  }
  ScenarioTruth truth;
  for (const ArmSpec& spec : arms) {
    validate_arm_spec(spec);
    const int dim = static_cast<int>(spec.means.size());
    const Eigen::MatrixXd chol = cholesky_lower(spec.cov.materialize(dim));
    Eigen::VectorXd path(dim);
    Eigen::VectorXd z(dim);
    long retained = 0;
    for (long s = 0; s < mc_subjects; ++s) {
      for (int j = 0; j < dim; ++j) z(j) = rng.normal();
      path = spec.means + chol * z;
      bool alive = true;
      for (int k = 1; k < dim && alive; ++k) {
        alive = rng.bernoulli(
            retention_prob(missing.alpha0, missing.alpha1, path(k - 1)));
      }
      retained += alive ? 1 : 0;
    }
    ArmTruth at;
    at.label = spec.label;
    at.pi = static_cast<double>(retained) / static_cast<double>(mc_subjects);
    at.mu_delta_y = spec.means(dim - 1) - spec.means(0);
    at.mu_delta_rtb = at.pi * at.mu_delta_y;
    truth.arms.push_back(std::move(at));
  }
  if (truth.arms.size() == 2) {
    truth.difference = truth.arms[1].mu_delta_rtb - truth.arms[0].mu_delta_rtb;
  }
  return truth;
}

}  // namespace rtb
