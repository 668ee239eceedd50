#include "rtb/methods.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "rtb/datagen.hpp"
#include "rtb/mi.hpp"
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

rtb::TrialDataset make_trial(std::uint64_t seed, int n, double rho, double alpha0,
                             double alpha1, double mu_e = -1.0) {
  rtb::Rng gen = rtb::Rng::stream(seed, {1});
  rtb::Rng mis = rtb::Rng::stream(seed, {2});
  const auto missing = rtb::MissingnessSpec::from_params(alpha0, alpha1);
  rtb::TrialDataset ds;
  ds.K = 1;
  ds.arms.push_back(rtb::apply_missingness(
      rtb::generate_complete(make_arm("P", n, {0.0, 0.0}, 1.0, rho), gen), missing,
      mis, "P"));
  ds.arms.push_back(rtb::apply_missingness(
      rtb::generate_complete(make_arm("E", n, {0.0, mu_e}, 1.0, rho), gen), missing,
      mis, "E"));
  return ds;
}

double sample_sd(const Eigen::VectorXd& v) {
  const double mean = v.mean();
  return std::sqrt((v.array() - mean).square().sum() / (v.size() - 1));
}

rtb::CompletedDataset all_final_missing_completed(std::uint64_t seed, int n) {
  // Completed dataset whose final-visit cells were all imputed.
  rtb::Rng rng(seed);
  rtb::CompletedDataset cd;
  cd.K = 1;
  cd.method = "mi";
  for (const char* label : {"P", "E"}) {
    rtb::CompletedArm arm;
    arm.label = label;
    arm.values.resize(n, 2);
    for (int i = 0; i < n; ++i) {
      arm.values(i, 0) = rng.normal();
      arm.values(i, 1) = 0.4 * rng.normal() - 0.5;
    }
    arm.source_mask = rtb::Mask::Constant(n, 2, true);
    arm.source_mask.col(1).setConstant(false);
    cd.arms.push_back(std::move(arm));
  }
  return cd;
}

TEST(RtbMeanShift, EveryoneImputedLandsExactlyOnPooledBaselineMean) {
  const rtb::CompletedDataset cd = all_final_missing_completed(21, 60);
  const double xbar = 0.7351;
  const rtb::CompletedDataset shifted = rtb::rtb_mean_shift(cd, xbar);
  for (const auto& arm : shifted.arms) {
    EXPECT_NEAR(arm.values.col(1).mean(), xbar, 1e-12);
  }
}

TEST(RtbMeanShift, NothingImputedIsIdentity) {
  rtb::Rng rng(22);
  rtb::CompletedDataset cd;
  cd.K = 1;
  rtb::CompletedArm arm;
  arm.label = "P";
  arm.values.resize(20, 2);
  for (int i = 0; i < 20; ++i) {
    arm.values(i, 0) = rng.normal();
    arm.values(i, 1) = rng.normal();
  }
  arm.source_mask = rtb::Mask::Constant(20, 2, true);
  cd.arms.push_back(arm);
  const rtb::CompletedDataset shifted = rtb::rtb_mean_shift(cd, 3.0);
  EXPECT_TRUE((shifted.arms[0].values.array() == arm.values.array()).all());
}

TEST(RtbMeanShift, ObservedCellsAreNeverTouched) {
  const rtb::TrialDataset ds = make_trial(23, 100, 0.5, -0.85, 0.0);
  rtb::Rng rng = rtb::Rng::stream(23, {3});
  const auto completed = rtb::impute_m(ds, 3, rng);
  const double xbar = rtb::pooled_baseline_mean(ds);
  for (const auto& cd : completed) {
    const rtb::CompletedDataset shifted = rtb::rtb_mean_shift(cd, xbar);
    for (std::size_t a = 0; a < cd.arms.size(); ++a) {
      for (int i = 0; i < ds.arms[a].n(); ++i) {
        if (ds.arms[a].mask(i, 1)) {
          ASSERT_EQ(shifted.arms[a].values(i, 1), ds.arms[a].values(i, 1));
        }
      }
    }
  }
}

TEST(RtbMeanVarShift, EveryoneImputedMatchesBaselineMeanAndSdExactly) {
  const rtb::CompletedDataset cd = all_final_missing_completed(24, 60);
  const double xbar = -0.25, sx = 1.4142;
  const rtb::CompletedDataset shifted = rtb::rtb_mean_var_shift(cd, xbar, sx);
  for (const auto& arm : shifted.arms) {
    EXPECT_NEAR(arm.values.col(1).mean(), xbar, 1e-12);
    EXPECT_NEAR(sample_sd(arm.values.col(1)), sx, 1e-12);
  }
}

TEST(RtbMeanVarShift, ReducesToMeanShiftWhenScalesAgree) {
  const rtb::CompletedDataset cd = all_final_missing_completed(25, 40);
  // use each arm's own completed-data SD as s_x so the scale factor is 1
  for (std::size_t a = 0; a < cd.arms.size(); ++a) {
    rtb::CompletedDataset one;
    one.K = 1;
    one.arms.push_back(cd.arms[a]);
    const double s_y = sample_sd(one.arms[0].values.col(1));
    const auto mean_only = rtb::rtb_mean_shift(one, 0.3);
    const auto mean_var = rtb::rtb_mean_var_shift(one, 0.3, s_y);
    EXPECT_TRUE(mean_var.arms[0].values.isApprox(mean_only.arms[0].values, 1e-12));
  }
}

TEST(Tim, ZeroTauDegeneratesToBocf) {
  rtb::Rng rng(26);
  rtb::TrialDataset ds;
  ds.K = 1;
  for (const char* label : {"P", "E"}) {
    rtb::ArmData arm;
    arm.label = label;
    arm.values.resize(30, 2);
    arm.mask = rtb::Mask::Constant(30, 2, true);
    for (int i = 0; i < 30; ++i) {
      arm.values(i, 0) = rng.normal();
      arm.values(i, 1) = arm.values(i, 0);  // completers: change == 0, tau == 0
    }
    for (int i = 20; i < 30; ++i) {
      arm.values(i, 1) = rtb::kMissingValue;
      arm.mask(i, 1) = false;
    }
    ds.arms.push_back(arm);
  }
  rtb::Rng trng = rtb::Rng::stream(26, {1});
  const auto tim = rtb::tim_impute(ds, 2, trng);
  const auto carried = rtb::bocf(ds);
  for (int m = 0; m < 2; ++m) {
    for (int a = 0; a < 2; ++a) {
      EXPECT_TRUE((tim[m].arms[a].values.col(1).array() ==
                   carried.arms[a].values.col(1).array()).all());
    }
  }
}

TEST(Tim, RequiresTwoCompleters) {
  rtb::TrialDataset ds = make_trial(27, 20, 0.0, -0.85, 0.0);
  for (int i = 0; i < 20; ++i) {
    ds.arms[0].mask(i, 1) = false;
    ds.arms[0].values(i, 1) = rtb::kMissingValue;
  }
  rtb::Rng rng(27);
  EXPECT_THROW(rtb::tim_impute(ds, 2, rng), rtb::degenerate_data_error);
}

TEST(Tim, ReproducesPaperCompletedDataMoments) {
  // Table 2 placebo cells, desk-scale replication: MDO rho=0 gives the
  // documented biased mean 0.177 with SD 1.252; MCAR rho=0.5 is unbiased
  // with SD 1.133.
  struct Case {
    double rho, alpha0, alpha1, want_mean, want_sd;
  };
  for (const Case& c : {Case{0.0, -1.0, 1.0, 0.177, 1.252},
                        Case{0.5, -0.85, 0.0, -0.001, 1.133}}) {
    double mean_acc = 0.0, sd_acc = 0.0;
    const int reps = 400, M = 10;
    for (int r = 0; r < reps; ++r) {
      const rtb::TrialDataset ds =
          make_trial(2800 + r, 100, c.rho, c.alpha0, c.alpha1);
      rtb::Rng rng = rtb::Rng::stream(29, {static_cast<std::uint64_t>(r)});
      const auto tims = rtb::tim_impute(ds, M, rng);
      double m_mean = 0.0, m_sd = 0.0;
      for (const auto& cd : tims) {
        m_mean += cd.arms[0].values.col(1).mean();
        m_sd += sample_sd(cd.arms[0].values.col(1));
      }
      mean_acc += m_mean / M;
      sd_acc += m_sd / M;
    }
    EXPECT_NEAR(mean_acc / reps, c.want_mean, 0.02);
    EXPECT_NEAR(sd_acc / reps, c.want_sd, 0.03);
  }
}

TEST(Quan, ZeroTauDegeneratesToBocf) {
  rtb::Rng rng(30);
  rtb::TrialDataset ds;
  ds.K = 1;
  rtb::ArmData arm;
  arm.label = "P";
  arm.values.resize(30, 2);
  arm.mask = rtb::Mask::Constant(30, 2, true);
  for (int i = 0; i < 30; ++i) {
    arm.values(i, 0) = rng.normal();
    arm.values(i, 1) = arm.values(i, 0);
  }
  for (int i = 25; i < 30; ++i) {
    arm.values(i, 1) = rtb::kMissingValue;
    arm.mask(i, 1) = false;
  }
  ds.arms.push_back(arm);
  ds.arms.push_back(arm);
  rtb::Rng qrng = rtb::Rng::stream(30, {1});
  const auto quan = rtb::quan_impute(ds, 2, qrng);
  const auto carried = rtb::bocf(ds);
  EXPECT_TRUE((quan[0].arms[0].values.col(1).array() ==
               carried.arms[0].values.col(1).array()).all());
}

TEST(Quan, InflatesVarianceBeyondBaseline) {
  // Var(Y^q) = Var(X) + 2 tau^2 > Var(X); check the replicate average.
  double completed_var = 0.0, baseline_var = 0.0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    const rtb::TrialDataset ds = make_trial(3100 + r, 100, 0.5, -0.85, 0.0);
    rtb::Rng rng = rtb::Rng::stream(31, {static_cast<std::uint64_t>(r)});
    const auto quan = rtb::quan_impute(ds, 2, rng);
    const auto& arm = quan[0].arms[0];
    completed_var += std::pow(sample_sd(arm.values.col(1)), 2);
    baseline_var += std::pow(sample_sd(arm.values.col(0)), 2);
  }
  EXPECT_GT(completed_var / reps, baseline_var / reps);
}

TEST(Quan, MatchesAnalyticMixtureSd) {
  // K=1, CS(1, 0.5), MCAR 30%: E[tau^2] = 1, completed var = 0.7 + 0.3*3 = 1.6
  double sd_acc = 0.0;
  const int reps = 300;
  for (int r = 0; r < reps; ++r) {
    const rtb::TrialDataset ds = make_trial(3200 + r, 1000, 0.5, -0.85, 0.0, 0.0);
    rtb::Rng rng = rtb::Rng::stream(32, {static_cast<std::uint64_t>(r)});
    const auto quan = rtb::quan_impute(ds, 2, rng);
    sd_acc += sample_sd(quan[0].arms[0].values.col(1));
  }
  EXPECT_NEAR(sd_acc / reps, 1.2649, 0.03);
}

TEST(Bocf, TrivialContracts) {
  rtb::TrialDataset ds = make_trial(33, 50, 0.3, -0.85, 0.0);
  const auto carried = rtb::bocf(ds);
  for (int a = 0; a < 2; ++a) {
    for (int i = 0; i < 50; ++i) {
      if (ds.arms[a].mask(i, 1)) {
        ASSERT_EQ(carried.arms[a].values(i, 1), ds.arms[a].values(i, 1));
      } else {
        // defining property: imputed change from baseline is exactly zero
        ASSERT_EQ(carried.arms[a].values(i, 1), ds.arms[a].values(i, 0));
      }
    }
  }

  // fully observed: identity
  rtb::TrialDataset full = make_trial(34, 30, 0.3, -50.0, 0.0);
  const auto same = rtb::bocf(full);
  EXPECT_TRUE((same.arms[0].values.array() == full.arms[0].values.array()).all());

  // everyone missing: final column equals baseline column
  rtb::TrialDataset gone = make_trial(35, 30, 0.3, 50.0, 0.0);
  const auto base = rtb::bocf(gone);
  EXPECT_TRUE((base.arms[0].values.col(1).array() ==
               base.arms[0].values.col(0).array()).all());
}

TEST(DirectMl, NoMissingnessReducesToSampleMeanChange) {
  const rtb::TrialDataset ds = make_trial(36, 200, 0.5, -50.0, 0.0);
  const rtb::DirectMlEstimate est = rtb::direct_ml_estimate(ds);
  for (int a = 0; a < 2; ++a) {
    EXPECT_DOUBLE_EQ(est.arms[a].pi_hat, 1.0);
    const double mean_change =
        (ds.arms[a].values.col(1) - ds.arms[a].values.col(0)).mean();
    EXPECT_NEAR(est.arms[a].estimate, mean_change, 1e-12);
  }
  EXPECT_NEAR(est.difference, est.arms[1].estimate - est.arms[0].estimate, 1e-15);
}

TEST(DirectMl, TargetsTheRtbEstimandUnderMcar) {
  // Table 2 MCAR K=1: E-arm target is -pi * 1 = -0.7006
  double sum = 0.0;
  const int reps = 500;
  for (int r = 0; r < reps; ++r) {
    const rtb::TrialDataset ds = make_trial(3700 + r, 100, 0.0, -0.85, 0.0);
    sum += rtb::direct_ml_estimate(ds).arms[1].estimate;
  }
  EXPECT_NEAR(sum / reps, -0.700567, 0.02);
}

TEST(DirectMl, HandlesIntermediateVisitCompositionAtK5) {
  // with K = 5 the marginal mean composes five regressions; under MDO the
  // estimate still targets pi * mu_delta
  double sum = 0.0;
  const int reps = 300;
  for (int r = 0; r < reps; ++r) {
    rtb::Rng gen = rtb::Rng::stream(3800 + r, {1});
    rtb::Rng mis = rtb::Rng::stream(3800 + r, {2});
    const auto missing = rtb::MissingnessSpec::from_params(-2.64, 1.0);
    rtb::TrialDataset ds;
    ds.K = 5;
    ds.arms.push_back(rtb::apply_missingness(
        rtb::generate_complete(
            make_arm("P", 100, std::vector<double>(6, 0.0), 1.0, 0.0), gen),
        missing, mis, "P"));
    ds.arms.push_back(rtb::apply_missingness(
        rtb::generate_complete(
            make_arm("E", 100, {0.0, -0.2, -0.4, -0.6, -0.8, -1.0}, 1.0, 0.0), gen),
        missing, mis, "E"));
    sum += rtb::direct_ml_estimate(ds).arms[1].estimate;
  }
  EXPECT_NEAR(sum / reps, -0.6997, 0.025);  // big-n oracle value
}

TEST(MethodTokens, RoundTripAndRejectUnknown) {
  for (rtb::Method m : {rtb::Method::kNimMean, rtb::Method::kNimMeanVar,
                        rtb::Method::kTim, rtb::Method::kQuan, rtb::Method::kBocf,
                        rtb::Method::kDirectMl}) {
    EXPECT_EQ(rtb::method_from_token(rtb::method_token(m)), m);
  }
  EXPECT_THROW(rtb::method_from_token("mmrm"), std::invalid_argument);
}

TEST(PooledBaseline, MeanAndSdPoolAcrossArms) {
  rtb::TrialDataset ds;
  ds.K = 1;
  for (int a = 0; a < 2; ++a) {
    rtb::ArmData arm;
    arm.label = a == 0 ? "P" : "E";
    arm.values.resize(2, 2);
    arm.values << (a == 0 ? 1.0 : 3.0), 0.0, (a == 0 ? 2.0 : 4.0), 0.0;
    arm.mask = rtb::Mask::Constant(2, 2, true);
    ds.arms.push_back(arm);
  }
  EXPECT_DOUBLE_EQ(rtb::pooled_baseline_mean(ds), 2.5);
  // sample SD of {1,2,3,4}
  EXPECT_NEAR(rtb::pooled_baseline_sd(ds), std::sqrt(5.0 / 3.0), 1e-15);
}

}  // namespace
