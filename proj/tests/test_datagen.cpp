#include "rtb/datagen.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "rtb/rng.hpp"

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

rtb::ArmSpec make_arm(const std::string& label, int n, std::vector<double> means,
                      double sigma, double rho) {
  rtb::ArmSpec spec;
  spec.label = label;
  spec.n = n;
  spec.means = Eigen::Map<const VectorXd>(means.data(), means.size());
  spec.cov = rtb::CovarianceSpec::compound_symmetry(sigma, rho);
  return spec;
}

TEST(GenerateComplete, PlaceboMomentsMatchSpec) {
  rtb::Rng rng = rtb::Rng::stream(101, {1});
  const rtb::ArmSpec spec = make_arm("P", 100000, {0.0, 0.0}, 1.0, 0.5);
  const MatrixXd data = rtb::generate_complete(spec, rng);
  ASSERT_EQ(data.rows(), 100000);
  ASSERT_EQ(data.cols(), 2);
  for (int k = 0; k < 2; ++k) {
    const double mean = data.col(k).mean();
    const double sd = std::sqrt((data.col(k).array() - mean).square().sum() /
                                (data.rows() - 1));
    EXPECT_NEAR(mean, 0.0, 0.013);
    EXPECT_NEAR(sd, 1.0, 0.01);
  }
}

TEST(GenerateComplete, TinyArmHasRightShapeAndFiniteEntries) {
  rtb::Rng rng(7);
  const rtb::ArmSpec spec = make_arm("E", 2, {0.0, -0.5, -1.0}, 2.0, 0.3);
  const MatrixXd data = rtb::generate_complete(spec, rng);
  ASSERT_EQ(data.rows(), 2);
  ASSERT_EQ(data.cols(), 3);
  EXPECT_TRUE(data.allFinite());
}

TEST(GenerateComplete, ExperimentalTrendFinalVisitMean) {
  rtb::Rng rng = rtb::Rng::stream(101, {2});
  const rtb::ArmSpec spec =
      make_arm("E", 100000, {0.0, -0.2, -0.4, -0.6, -0.8, -1.0}, 1.0, 0.5);
  const MatrixXd data = rtb::generate_complete(spec, rng);
  EXPECT_NEAR(data.col(5).mean(), -1.0, 0.013);
}

TEST(GenerateComplete, RejectsInvalidSpecs) {
  rtb::Rng rng(1);
  rtb::ArmSpec tiny = make_arm("X", 1, {0.0, 0.0}, 1.0, 0.0);
  EXPECT_THROW(rtb::generate_complete(tiny, rng), std::invalid_argument);
  rtb::ArmSpec bad_rho = make_arm("X", 10, {0.0, 0.0, 0.0}, 1.0, -0.9);
  EXPECT_THROW(rtb::generate_complete(bad_rho, rng), std::invalid_argument);
}

TEST(RetentionProb, PaperTable1Values) {
  // alpha0 = -0.85, alpha1 = 0: retention 0.7006, i.e. P(missing) 0.2994
  EXPECT_NEAR(rtb::retention_prob(-0.85, 0.0, 123.0), 0.700567, 5e-7);
  EXPECT_NEAR(1.0 - rtb::retention_prob(-0.85, 0.0, 0.0), 0.300, 1e-3);
  EXPECT_DOUBLE_EQ(rtb::retention_prob(0.0, 0.0, 7.0), 0.5);
  EXPECT_NEAR(rtb::retention_prob(-1.0, 1.0, 0.0), 0.7310585786300049, 1e-15);
}

TEST(RetentionProb, SaturatesSmoothlyAtExtremes) {
  EXPECT_GT(rtb::retention_prob(-1000.0, 0.0, 0.0), 1.0 - 1e-12);
  EXPECT_LT(rtb::retention_prob(1000.0, 0.0, 0.0), 1e-12);
  EXPECT_GE(rtb::retention_prob(700.0, 1.0, 700.0), 0.0);
}

TEST(ApplyMissingness, ExtremeAlpha0KeepsEverythingObserved) {
  rtb::Rng rng(3);
  const rtb::ArmSpec spec = make_arm("P", 500, {0.0, 0.0, 0.0}, 1.0, 0.2);
  const MatrixXd complete = rtb::generate_complete(spec, rng);
  const auto missing = rtb::MissingnessSpec::from_params(-50.0, 0.0);
  const rtb::ArmData arm = rtb::apply_missingness(complete, missing, rng, "P");
  EXPECT_TRUE(arm.mask.all());
  EXPECT_TRUE(arm.values.isApprox(complete));
}

TEST(ApplyMissingness, McarK5ClosedFormMissingRate) {
  // P(missing at visit 5) = 1 - (1/(1+e^-2.60))^5 = 0.3011 (paper: 0.301)
  rtb::Rng rng = rtb::Rng::stream(42, {1});
  const rtb::ArmSpec spec = make_arm("P", 1000000, std::vector<double>(6, 0.0),
                                     1.0, 0.0);
  const MatrixXd complete = rtb::generate_complete(spec, rng);
  const auto missing = rtb::MissingnessSpec::from_params(-2.60, 0.0);
  const rtb::ArmData arm = rtb::apply_missingness(complete, missing, rng, "P");
  const double p_missing = 1.0 - arm.mask.col(5).cast<double>().mean();
  const double closed_form = 1.0 - std::pow(rtb::retention_prob(-2.60, 0.0, 0.0), 5);
  EXPECT_NEAR(p_missing, closed_form, 0.002);
  EXPECT_NEAR(p_missing, 0.301, 0.004);
}

TEST(ApplyMissingness, MdoK1MatchesPaperTable1) {
  // (alpha0, alpha1) = (-1, 1), baseline ~ N(0,1): P(missing) = 0.304/0.303
  rtb::Rng rng = rtb::Rng::stream(42, {2});
  const rtb::ArmSpec spec = make_arm("P", 1000000, {0.0, 0.0}, 1.0, 0.0);
  const MatrixXd complete = rtb::generate_complete(spec, rng);
  const auto missing = rtb::MissingnessSpec::from_params(-1.0, 1.0);
  EXPECT_EQ(missing.mechanism, rtb::Mechanism::kMdo);
  const rtb::ArmData arm = rtb::apply_missingness(complete, missing, rng, "P");
  const double p_missing = 1.0 - arm.mask.col(1).cast<double>().mean();
  EXPECT_NEAR(p_missing, 0.3033, 0.002);  // quadrature value 0.30326
}

TEST(ApplyMissingness, MasksAreMonotoneAndMaskedCellsAreBlanked) {
  rtb::Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const int K = 1 + static_cast<int>(rng.uniform_below(5));
    const rtb::ArmSpec spec =
        make_arm("A", 200, std::vector<double>(K + 1, 0.0), 1.0, 0.4);
    const MatrixXd complete = rtb::generate_complete(spec, rng);
    const auto missing = rtb::MissingnessSpec::from_params(0.0, 0.5);
    const rtb::ArmData arm = rtb::apply_missingness(complete, missing, rng, "A");
    ASSERT_TRUE(rtb::is_monotone(arm.mask));
    for (int i = 0; i < arm.n(); ++i) {
      ASSERT_TRUE(arm.mask(i, 0));
      for (int k = 0; k <= K; ++k) {
        if (arm.mask(i, k)) {
          ASSERT_EQ(arm.values(i, k), complete(i, k));
        } else {
          ASSERT_TRUE(std::isnan(arm.values(i, k)));
        }
      }
    }
  }
}

TEST(ApplyMissingness, McarDropoutIsIndependentOfBaseline) {
  rtb::Rng rng = rtb::Rng::stream(42, {3});
  const rtb::ArmSpec spec = make_arm("P", 100000, {0.0, 0.0}, 1.0, 0.5);
  const MatrixXd complete = rtb::generate_complete(spec, rng);
  const auto missing = rtb::MissingnessSpec::from_params(-0.85, 0.0);
  const rtb::ArmData arm = rtb::apply_missingness(complete, missing, rng, "P");
  const Eigen::ArrayXd r = arm.mask.col(1).cast<double>();
  const Eigen::ArrayXd x = complete.col(0).array();
  const double corr = ((r - r.mean()) * (x - x.mean())).mean() /
                      std::sqrt((r - r.mean()).square().mean() *
                                (x - x.mean()).square().mean());
  EXPECT_NEAR(corr, 0.0, 0.01);
}

TEST(TrueRtbMean, PlaceboTargetIsZeroForAnyMechanism) {
  rtb::Rng rng(11);
  const std::vector<rtb::ArmSpec> arms = {make_arm("P", 100, {0.0, 0.0}, 1.0, 0.5)};
  const auto truth = rtb::true_rtb_mean(
      arms, rtb::MissingnessSpec::from_params(-1.0, 1.0), 20000, rng);
  EXPECT_DOUBLE_EQ(truth.arms[0].mu_delta_y, 0.0);
  EXPECT_DOUBLE_EQ(truth.arms[0].mu_delta_rtb, 0.0);
}

TEST(TrueRtbMean, McarK1MatchesPaperTable2) {
  rtb::Rng rng = rtb::Rng::stream(42, {4});
  const std::vector<rtb::ArmSpec> arms = {
      make_arm("P", 100, {0.0, 0.0}, 1.0, 0.0),
      make_arm("E", 100, {0.0, -1.0}, 1.0, 0.0)};
  const auto truth = rtb::true_rtb_mean(
      arms, rtb::MissingnessSpec::from_params(-0.85, 0.0), 1000000, rng);
  EXPECT_NEAR(truth.arms[1].mu_delta_rtb, -0.700567, 0.002);  // analytic -0.70057
  EXPECT_NEAR(truth.difference, truth.arms[1].mu_delta_rtb, 1e-15);
}

TEST(TrueRtbMean, MdoK1MatchesPaperTable2) {
  rtb::Rng rng = rtb::Rng::stream(42, {5});
  const std::vector<rtb::ArmSpec> arms = {
      make_arm("E", 100, {0.0, -1.0}, 1.0, 0.5)};
  const auto truth = rtb::true_rtb_mean(
      arms, rtb::MissingnessSpec::from_params(-1.0, 1.0), 1000000, rng);
  EXPECT_NEAR(truth.arms[0].mu_delta_rtb, -0.69674, 0.002);  // quadrature value
}

TEST(TrueRtbMean, ProductIdentityHoldsExactly) {
  rtb::Rng rng(13);
  const std::vector<rtb::ArmSpec> arms = {
      make_arm("E", 100, {0.0, -0.3, -0.6}, 1.2, 0.4)};
  const auto truth = rtb::true_rtb_mean(
      arms, rtb::MissingnessSpec::from_params(-1.5, 0.5), 50000, rng);
  EXPECT_EQ(truth.arms[0].mu_delta_rtb, truth.arms[0].pi * truth.arms[0].mu_delta_y);
}

TEST(CovarianceSpec, ExplicitMatrixValidation) {
  MatrixXd good(2, 2);
  good << 1.0, 0.2, 0.2, 0.5;
  EXPECT_NO_THROW(rtb::CovarianceSpec::explicit_matrix(good));

  MatrixXd not_pd(2, 2);
  not_pd << 1.0, 2.0, 2.0, 1.0;
  EXPECT_THROW(rtb::CovarianceSpec::explicit_matrix(not_pd), rtb::numeric_error);

  MatrixXd asym(2, 2);
  asym << 1.0, 0.3, 0.2, 1.0;
  EXPECT_THROW(rtb::CovarianceSpec::explicit_matrix(asym), std::invalid_argument);

  MatrixXd bad_diag(2, 2);
  bad_diag << -1.0, 0.0, 0.0, 1.0;
  EXPECT_THROW(rtb::CovarianceSpec::explicit_matrix(bad_diag), std::invalid_argument);

  const auto spec = rtb::CovarianceSpec::explicit_matrix(good);
  EXPECT_THROW(spec.materialize(3), std::invalid_argument);
}

}  // namespace
