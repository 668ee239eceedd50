#pragma once

// Scenario-driven Monte-Carlo driver: generate R replicate trials, run each
// configured method, pool, and aggregate bias / SD / SE / CP (and bootstrap
// SE/CP when enabled) against the scenario's simulated truth.
//
// Replicates fan out over a worker pool. Every random stream is keyed by
// (seed, purpose, replicate, ...), never by thread, so output is identical
// for any thread count.

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "rtb/config.hpp"
#include "rtb/csv.hpp"
#include "rtb/datagen.hpp"
#include "rtb/errors.hpp"
#include "rtb/inference.hpp"
#include "rtb/methods.hpp"
#include "rtb/rng.hpp"

namespace rtb {

struct MetricsRow {
  std::string scenario;
  std::string method;
  std::string group;
  double completed_mean = std::numeric_limits<double>::quiet_NaN();
  double completed_sd = std::numeric_limits<double>::quiet_NaN();
  double true_value = std::numeric_limits<double>::quiet_NaN();
  double bias = std::numeric_limits<double>::quiet_NaN();
  double sd_of_estimates = std::numeric_limits<double>::quiet_NaN();
  double mean_se = std::numeric_limits<double>::quiet_NaN();
  double cp = std::numeric_limits<double>::quiet_NaN();
  double se_boot = std::numeric_limits<double>::quiet_NaN();
  double cp_boot = std::numeric_limits<double>::quiet_NaN();
};

/// Raw per-replicate point estimates, kept for consistency checks.
struct MethodEstimates {
  Method method;
  std::array<std::vector<double>, 3> estimates;  // arm0, arm1, diff
};

struct ScenarioResult {
  std::vector<MetricsRow> rows;
  ScenarioTruth truth;
  std::vector<MethodEstimates> raw;
  int failed_replicates = 0;
};

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("RTB_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

namespace harness_detail {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

struct MethodOutcome {
  std::array<double, 3> point{kNan, kNan, kNan};
  std::array<double, 3> se{kNan, kNan, kNan};
  std::array<double, 3> covered{kNan, kNan, kNan};
  std::array<double, 2> completed_mean{kNan, kNan};
  std::array<double, 2> completed_sd{kNan, kNan};
  std::array<double, 3> se_boot{kNan, kNan, kNan};
  std::array<double, 3> covered_boot{kNan, kNan, kNan};
};

struct ReplicateOutcome {
  bool ok = false;
  std::string error;
  std::vector<MethodOutcome> methods;
};

inline TrialDataset generate_trial(const ScenarioConfig& config, std::uint64_t r) {
  TrialDataset ds;
  ds.K = config.K;
  for (std::size_t a = 0; a < config.arms.size(); ++a) {
    Rng gen = Rng::stream(config.seed, {stream_tag::kGenerate, r, a});
    const Eigen::MatrixXd complete = generate_complete(config.arms[a], gen);
    Rng miss = Rng::stream(config.seed, {stream_tag::kMissingness, r, a});
    ds.arms.push_back(
        apply_missingness(complete, config.missing, miss, config.arms[a].label));
  }
  return ds;
}

inline ReplicateOutcome run_replicate(const ScenarioConfig& config,
                                      const std::array<double, 3>& truth,
                                      std::uint64_t r) {
  ReplicateOutcome outcome;
  outcome.methods.resize(config.methods.size());
  try {
    const TrialDataset ds = generate_trial(config, r);
    for (std::size_t j = 0; j < config.methods.size(); ++j) {
      const Method method = config.methods[j];
      Rng mrng = Rng::stream(config.seed, {stream_tag::kMethod, r, j});
      const MethodAnalysis analysis =
          analyze_method(ds, method, config.imputations, config.alpha, mrng);
      MethodOutcome& mo = outcome.methods[j];
      mo.point = analysis.point;
      if (analysis.has_se) {
        mo.se = analysis.se;
        for (int i = 0; i < 3; ++i) {
          mo.covered[i] = (analysis.ci[i].first <= truth[i] &&
                           truth[i] <= analysis.ci[i].second)
                              ? 1.0
                              : 0.0;
        }
      }
      if (analysis.has_completed) {
        mo.completed_mean = analysis.completed_mean;
        mo.completed_sd = analysis.completed_sd;
      }
      if (config.bootstrap_b > 0) {
        Rng brng = Rng::stream(config.seed, {stream_tag::kBootstrap, r, j});
        const auto boot = bootstrap_ci_around(ds, method, config.boot_imputations,
                                              config.bootstrap_b, config.alpha,
                                              analysis.point, brng);
        for (int i = 0; i < 3; ++i) {
          mo.se_boot[i] = boot[i].se_b;
          mo.covered_boot[i] = (boot[i].ci_b.first <= truth[i] &&
                                truth[i] <= boot[i].ci_b.second)
                                   ? 1.0
                                   : 0.0;
        }
      }
    }
    outcome.ok = true;
  } catch (const std::exception& e) {
    outcome.ok = false;
    outcome.error = e.what();
  }
  return outcome;
}

inline double nan_mean(const std::vector<double>& v) {
  double sum = 0.0;
  long n = 0;
  for (double x : v) {
    if (std::isfinite(x)) {
      sum += x;
      ++n;
    }
  }
  return n > 0 ? sum / static_cast<double>(n) : kNan;
}

inline double nan_sd(const std::vector<double>& v) {
  const double mean = nan_mean(v);
  if (!std::isfinite(mean)) return kNan;
  double ss = 0.0;
  long n = 0;
  for (double x : v) {
    if (std::isfinite(x)) {
      ss += (x - mean) * (x - mean);
      ++n;
    }
  }
  return n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : kNan;
}

}  // namespace harness_detail

inline ScenarioResult run_scenario(const ScenarioConfig& config, int threads = 0) {
  using namespace harness_detail;
  if (config.arms.size() != 2) {
    throw std::invalid_argument("run_scenario: expected exactly two arms");
  }
  if (config.replicates < 1) {
    throw std::invalid_argument("run_scenario: replicates must be >= 1");
  }
  if (!config.seed_set) {
    throw std::invalid_argument("run_scenario: no seed configured");
  }
  for (Method m : config.methods) {
    if ((m == Method::kNimMean || m == Method::kNimMeanVar || m == Method::kTim ||
         m == Method::kQuan) &&
        config.imputations < 2) {
      throw std::invalid_argument("run_scenario: MI methods need imputations >= 2");
    }
  }

  ScenarioResult result;
  {
    Rng trng = Rng::stream(config.seed, {stream_tag::kTruth});
    result.truth = true_rtb_mean(config.arms, config.missing,
                                 config.truth_subjects, trng);
  }
  const std::array<double, 3> truth = {result.truth.arms[0].mu_delta_rtb,
                                       result.truth.arms[1].mu_delta_rtb,
                                       result.truth.difference};

  const int R = config.replicates;
  std::vector<ReplicateOutcome> outcomes(R);
  const int n_threads = std::min(resolve_threads(threads), R);
  if (n_threads <= 1) {
    for (int r = 0; r < R; ++r) {
      outcomes[r] = run_replicate(config, truth, static_cast<std::uint64_t>(r));
    }
  } else {
    std::atomic<int> next{0};
    auto worker = [&] {
      for (;;) {
        const int r = next.fetch_add(1);
        if (r >= R) return;
        outcomes[r] = run_replicate(config, truth, static_cast<std::uint64_t>(r));
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::string first_error;
  for (const auto& o : outcomes) {
    if (!o.ok) {
      ++result.failed_replicates;
      if (first_error.empty()) first_error = o.error;
    }
  }
  if (result.failed_replicates * 100 > R) {
    throw numeric_error("run_scenario: " + std::to_string(result.failed_replicates) +
                        " of " + std::to_string(R) + " replicates failed (first: " +
                        first_error + ")");
  }

  const std::string diff_label =
      config.arms[1].label + "-" + config.arms[0].label;
  const std::string group_labels[3] = {config.arms[0].label, config.arms[1].label,
                                       diff_label};

  for (std::size_t j = 0; j < config.methods.size(); ++j) {
    MethodEstimates raw;
    raw.method = config.methods[j];
    std::array<std::vector<double>, 3> ses, covered, se_boot, covered_boot;
    std::array<std::vector<double>, 2> cmean, csd;
    for (const auto& o : outcomes) {
      if (!o.ok) continue;
      const MethodOutcome& mo = o.methods[j];
      for (int i = 0; i < 3; ++i) {
        raw.estimates[i].push_back(mo.point[i]);
        ses[i].push_back(mo.se[i]);
        covered[i].push_back(mo.covered[i]);
        se_boot[i].push_back(mo.se_boot[i]);
        covered_boot[i].push_back(mo.covered_boot[i]);
      }
      for (int arm = 0; arm < 2; ++arm) {
        cmean[arm].push_back(mo.completed_mean[arm]);
        csd[arm].push_back(mo.completed_sd[arm]);
      }
    }
    for (int i = 0; i < 3; ++i) {
      MetricsRow row;
      row.scenario = config.id;
      row.method = method_token(config.methods[j]);
      row.group = group_labels[i];
      if (i < 2) {
        row.completed_mean = nan_mean(cmean[i]);
        row.completed_sd = nan_mean(csd[i]);
      }
      row.true_value = truth[i];
      row.bias = nan_mean(raw.estimates[i]) - truth[i];
      row.sd_of_estimates = nan_sd(raw.estimates[i]);
      row.mean_se = nan_mean(ses[i]);
      row.cp = nan_mean(covered[i]);
      if (config.bootstrap_b > 0) {
        row.se_boot = nan_mean(se_boot[i]);
        row.cp_boot = nan_mean(covered_boot[i]);
      }
      result.rows.push_back(std::move(row));
    }
    result.raw.push_back(std::move(raw));
  }
  return result;
}

/// Per-arm missing-data fraction for a scenario (1 - pi), by Monte Carlo.
inline std::vector<std::pair<std::string, double>> missing_fractions(
    const ScenarioConfig& config, long mc_subjects) {
  Rng rng = Rng::stream(config.seed, {stream_tag::kTruth});
  const ScenarioTruth truth =
      true_rtb_mean(config.arms, config.missing, mc_subjects, rng);
  std::vector<std::pair<std::string, double>> out;
  for (const ArmTruth& arm : truth.arms) {
    out.emplace_back(arm.label, 1.0 - arm.pi);
  }
  return out;
}

namespace harness_detail {

inline void put_csv_value(std::ostream& out, double v) {
  if (std::isfinite(v)) out << csv_detail::format_double(v);
}

inline void put_text_value(std::ostream& out, double v, int width) {
  if (std::isfinite(v)) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(3) << v;
    out << std::setw(width) << ss.str();
  } else {
    out << std::setw(width) << "-";
  }
}

}  // namespace harness_detail

inline void emit_table_csv(const std::vector<MetricsRow>& rows, std::ostream& out) {
  if (rows.empty()) throw std::invalid_argument("emit_table_csv: no rows");
  out << "scenario,method,group,completed_mean,completed_sd,true,bias,sd,se,cp,"
         "se_boot,cp_boot\n";
  for (const MetricsRow& row : rows) {
    out << row.scenario << ',' << row.method << ',' << row.group;
    for (double v : {row.completed_mean, row.completed_sd, row.true_value, row.bias,
                     row.sd_of_estimates, row.mean_se, row.cp, row.se_boot,
                     row.cp_boot}) {
      out << ',';
      harness_detail::put_csv_value(out, v);
    }
    out << "\n";
  }
}

/// Fixed-width rendering in the layout of the paper's summary tables.
inline void emit_table_text(const std::vector<MetricsRow>& rows, std::ostream& out) {
  if (rows.empty()) throw std::invalid_argument("emit_table_text: no rows");
  out << std::left << std::setw(24) << "scenario" << std::setw(13) << "method"
      << std::setw(6) << "group" << std::right << std::setw(8) << "mean"
      << std::setw(8) << "sd" << std::setw(9) << "true" << std::setw(8) << "bias"
      << std::setw(8) << "sd" << std::setw(8) << "se" << std::setw(8) << "cp"
      << std::setw(8) << "se_b" << std::setw(8) << "cp_b" << "\n";
  for (const MetricsRow& row : rows) {
    out << std::left << std::setw(24) << row.scenario << std::setw(13) << row.method
        << std::setw(6) << row.group << std::right;
    harness_detail::put_text_value(out, row.completed_mean, 8);
    harness_detail::put_text_value(out, row.completed_sd, 8);
    harness_detail::put_text_value(out, row.true_value, 9);
    harness_detail::put_text_value(out, row.bias, 8);
    harness_detail::put_text_value(out, row.sd_of_estimates, 8);
    harness_detail::put_text_value(out, row.mean_se, 8);
    harness_detail::put_text_value(out, row.cp, 8);
    harness_detail::put_text_value(out, row.se_boot, 8);
    harness_detail::put_text_value(out, row.cp_boot, 8);
    out << "\n";
  }
}

}  // namespace rtb
