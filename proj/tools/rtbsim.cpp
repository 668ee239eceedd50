// rtbsim: simulation harness and imputation CLI.
//
//   rtbsim simulate <config> --seed S [--out DIR] [--threads N] ...
//   rtbsim impute <dataset.csv> --method TOK -m M --seed S [--out FILE]
//   rtbsim analyze <completed.csv>... [--alpha A] [--out FILE]
//   rtbsim truth <config> [--mc-subjects N] [--seed S]
//   rtbsim tables --paper [--configs DIR] [--out DIR] [--scale desk|paper]

#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "rtb/rtb.hpp"

namespace fs = std::filesystem;

namespace {

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw rtb::io_error("cannot open output file '" + path.string() + "'");
  return out;
}

rtb::TrialDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw rtb::io_error("cannot open dataset '" + path + "'");
  return rtb::read_dataset(in);
}

void write_text_and_csv(const std::vector<rtb::MetricsRow>& rows,
                        const fs::path& out_dir, const std::string& stem,
                        bool echo) {
  fs::create_directories(out_dir);
  {
    auto csv = open_output(out_dir / (stem + ".csv"));
    rtb::emit_table_csv(rows, csv);
  }
  {
    auto txt = open_output(out_dir / (stem + ".txt"));
    rtb::emit_table_text(rows, txt);
  }
  if (echo) rtb::emit_table_text(rows, std::cout);
}

int run_simulate(const std::string& config_path, std::uint64_t seed,
                 const std::string& out_dir, int threads, int replicates,
                 int imputations, int bootstrap) {
  rtb::ScenarioConfig config = rtb::load_scenario_config(config_path);
  config.seed = seed;
  config.seed_set = true;
  if (replicates > 0) config.replicates = replicates;
  if (imputations > 0) config.imputations = imputations;
  if (bootstrap >= 0) config.bootstrap_b = bootstrap;

  const rtb::ScenarioResult result = rtb::run_scenario(config, threads);
  write_text_and_csv(result.rows, out_dir, config.id + "-metrics", /*echo=*/true);
  if (result.failed_replicates > 0) {
    std::cerr << "note: " << result.failed_replicates
              << " replicates failed and were skipped\n";
  }
  return 0;
}

int run_impute(const std::string& data_path, const std::string& method_token,
               int m, std::uint64_t seed, const std::string& out_path) {
  const rtb::Method method = rtb::method_from_token(method_token);
  const rtb::TrialDataset dataset = load_dataset(data_path);
  rtb::Rng rng = rtb::Rng::stream(seed, {rtb::stream_tag::kMethod});

  std::vector<rtb::CompletedDataset> completed;
  switch (method) {
    case rtb::Method::kNimMean:
    case rtb::Method::kNimMeanVar: {
      const double xbar = rtb::pooled_baseline_mean(dataset);
      const double sx = rtb::pooled_baseline_sd(dataset);
      if (m >= 2) {
        completed = rtb::impute_m(dataset, m, rng);
      } else {
        completed.push_back(rtb::impute_once(dataset, rng));
        completed.back().m = 1;
      }
      for (auto& cd : completed) {
        cd = (method == rtb::Method::kNimMean)
                 ? rtb::rtb_mean_shift(std::move(cd), xbar)
                 : rtb::rtb_mean_var_shift(std::move(cd), xbar, sx);
      }
      break;
    }
    case rtb::Method::kTim:
      completed = rtb::tim_impute(dataset, m, rng);
      break;
    case rtb::Method::kQuan:
      completed = rtb::quan_impute(dataset, m, rng);
      break;
    case rtb::Method::kBocf:
      completed.push_back(rtb::bocf(dataset));
      break;
    case rtb::Method::kDirectMl:
      throw std::invalid_argument(
          "direct-ml is an estimator, not an imputation method; use 'simulate' "
          "or 'analyze'");
  }

  if (out_path == "-") {
    rtb::write_completed(std::cout, completed);
  } else {
    auto out = open_output(out_path);
    rtb::write_completed(out, completed);
  }
  return 0;
}

int run_analyze(const std::vector<std::string>& paths, double alpha,
                const std::string& scenario, const std::string& method_label,
                const std::string& out_path) {
  std::vector<rtb::CompletedDataset> completed;
  for (const std::string& path : paths) {
    std::ifstream in(path);
    if (!in) throw rtb::io_error("cannot open completed dataset '" + path + "'");
    auto part = rtb::read_completed(in);
    completed.insert(completed.end(), std::make_move_iterator(part.begin()),
                     std::make_move_iterator(part.end()));
  }
  if (completed.empty()) throw rtb::io_error("analyze: no completed datasets");

  std::vector<std::string> quantities;
  for (const auto& arm : completed.front().arms) quantities.push_back(arm.label);
  if (completed.front().arms.size() == 2) {
    quantities.push_back(completed.front().arms[1].label + "-" +
                         completed.front().arms[0].label);
  }

  struct Record {
    double point, se, lo, hi;
  };
  std::vector<Record> records;
  if (completed.size() == 1) {
    const rtb::AncovaResult a = rtb::ancova(completed.front());
    const double q = a.resid_df > 0 ? 1.959963984540054 : 0.0;  // normal approx
    for (std::size_t i = 0; i < a.lsmeans.size(); ++i) {
      records.push_back({a.lsmeans[i], a.lsmean_ses[i],
                         a.lsmeans[i] - q * a.lsmean_ses[i],
                         a.lsmeans[i] + q * a.lsmean_ses[i]});
    }
    if (a.lsmeans.size() == 2) {
      records.push_back({a.diff, a.diff_se, a.diff - q * a.diff_se,
                         a.diff + q * a.diff_se});
    }
  } else {
    const std::size_t n_arms = completed.front().arms.size();
    const std::size_t n_quant = quantities.size();
    std::vector<std::vector<double>> estimates(n_quant), variances(n_quant);
    for (const auto& cd : completed) {
      const rtb::AncovaResult a = rtb::ancova(cd);
      for (std::size_t i = 0; i < n_arms; ++i) {
        estimates[i].push_back(a.lsmeans[i]);
        variances[i].push_back(a.lsmean_ses[i] * a.lsmean_ses[i]);
      }
      if (n_quant > n_arms) {
        estimates[n_arms].push_back(a.diff);
        variances[n_arms].push_back(a.diff_se * a.diff_se);
      }
    }
    for (std::size_t i = 0; i < n_quant; ++i) {
      const rtb::PooledEstimate pooled =
          rtb::rubin_pool(estimates[i], variances[i], alpha);
      records.push_back({pooled.point, pooled.se(), pooled.ci.first,
                         pooled.ci.second});
    }
  }

  std::ostringstream out;
  out << "scenario,method,quantity,point,se_rubin,ci_lo,ci_hi,se_boot,"
         "ci_boot_lo,ci_boot_hi\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    out << scenario << ',' << method_label << ',' << quantities[i] << ','
        << rtb::csv_detail::format_double(records[i].point) << ','
        << rtb::csv_detail::format_double(records[i].se) << ','
        << rtb::csv_detail::format_double(records[i].lo) << ','
        << rtb::csv_detail::format_double(records[i].hi) << ",,,\n";
  }
  if (out_path == "-") {
    std::cout << out.str();
  } else {
    auto f = open_output(out_path);
    f << out.str();
  }
  return 0;
}

int run_truth(const std::string& config_path, long mc_subjects,
              std::uint64_t seed, bool seed_given) {
  const rtb::ScenarioConfig config = rtb::load_scenario_config(config_path);
  const std::uint64_t use_seed =
      seed_given ? seed : (config.seed_set ? config.seed : 1);
  const long n = mc_subjects > 0 ? mc_subjects : config.truth_subjects;
  rtb::Rng rng = rtb::Rng::stream(use_seed, {rtb::stream_tag::kTruth});
  const rtb::ScenarioTruth truth =
      rtb::true_rtb_mean(config.arms, config.missing, n, rng);

  std::cout << std::left << std::setw(12) << "arm" << std::right << std::setw(10)
            << "pi" << std::setw(14) << "mu_delta_y" << std::setw(14)
            << "mu_delta_rtb" << "\n"
            << std::fixed << std::setprecision(4);
  for (const auto& arm : truth.arms) {
    std::cout << std::left << std::setw(12) << arm.label << std::right
              << std::setw(10) << arm.pi << std::setw(14) << arm.mu_delta_y
              << std::setw(14) << arm.mu_delta_rtb << "\n";
  }
  if (truth.arms.size() == 2) {
    std::cout << "difference (" << truth.arms[1].label << "-"
              << truth.arms[0].label << "): " << truth.difference << "\n";
  }
  return 0;
}

struct PaperTables {
  std::vector<std::string> table2{"table2-k1-mcar-rho0", "table2-k1-mcar-rho05",
                                  "table2-k1-mdo-rho0", "table2-k1-mdo-rho05"};
  std::vector<std::string> table3{"table3-k5-mcar-rho0", "table3-k5-mcar-rho05",
                                  "table3-k5-mdo-rho0", "table3-k5-mdo-rho05"};
  std::vector<std::string> table4{"table4-k1-mcar", "table4-k1-mdo",
                                  "table4-k5-mcar", "table4-k5-mdo"};
};

int run_tables(const std::string& configs_dir, const std::string& out_dir,
               const std::string& scale, int threads, long mc_subjects,
               std::uint64_t seed, bool seed_given) {
  const PaperTables tables;
  fs::create_directories(out_dir);

  auto load = [&](const std::string& name) {
    rtb::ScenarioConfig config =
        rtb::load_scenario_config(configs_dir + "/" + name + ".conf");
    if (seed_given) {
      config.seed = seed;
      config.seed_set = true;
    }
    if (scale == "paper") {
      config.replicates = 5000;
      config.imputations = 200;
      if (config.bootstrap_b > 0) config.bootstrap_b = 100;
    }
    return config;
  };

  // Table 1: the proportion of missing values at the final visit.
  {
    std::ostringstream csv;
    csv << "scenario,arm,p_missing\n";
    std::cout << "table 1: proportion of missing values\n";
    for (const auto& group : {tables.table2, tables.table3}) {
      for (const std::string& name : group) {
        const rtb::ScenarioConfig config = load(name);
        for (const auto& [arm, p_missing] :
             rtb::missing_fractions(config, mc_subjects)) {
          csv << config.id << ',' << arm << ','
              << rtb::csv_detail::format_double(p_missing) << "\n";
          std::cout << "  " << std::left << std::setw(24) << config.id
                    << std::setw(4) << arm << std::fixed << std::setprecision(3)
                    << p_missing << "\n";
        }
      }
    }
    auto out = open_output(fs::path(out_dir) / "table1.csv");
    out << csv.str();
  }

  // Tables 2-4: run each scenario and gather the rows per table.
  int table_no = 2;
  for (const auto& group : {tables.table2, tables.table3, tables.table4}) {
    std::vector<rtb::MetricsRow> rows;
    for (const std::string& name : group) {
      const rtb::ScenarioConfig config = load(name);
      std::cout << "running " << config.id << " (R=" << config.replicates
                << ", M=" << config.imputations << ", B=" << config.bootstrap_b
                << ")\n";
      const rtb::ScenarioResult result = rtb::run_scenario(config, threads);
      rows.insert(rows.end(), result.rows.begin(), result.rows.end());
    }
    const std::string stem = "table" + std::to_string(table_no++);
    write_text_and_csv(rows, out_dir, stem, /*echo=*/false);
    std::cout << "wrote " << out_dir << "/" << stem << ".csv\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Return-to-baseline multiple imputation simulator"};
  app.require_subcommand(1);

  // simulate
  auto* simulate = app.add_subcommand("simulate", "run a scenario config");
  std::string sim_config;
  std::uint64_t sim_seed = 0;
  std::string sim_out = ".";
  int sim_threads = 0, sim_replicates = 0, sim_imputations = 0, sim_bootstrap = -1;
  simulate->add_option("config", sim_config, "scenario config file")->required();
  simulate->add_option("--seed", sim_seed, "master seed")->required();
  simulate->add_option("--out", sim_out, "output directory");
  simulate->add_option("--threads", sim_threads, "worker thread cap");
  simulate->add_option("--replicates", sim_replicates, "override replicate count");
  simulate->add_option("--imputations", sim_imputations, "override imputation count");
  simulate->add_option("--bootstrap", sim_bootstrap, "override bootstrap sample count");

  // impute
  auto* impute = app.add_subcommand("impute", "emit completed datasets");
  std::string imp_data, imp_method, imp_out = "-";
  int imp_m = 1;
  std::uint64_t imp_seed = 0;
  impute->add_option("dataset", imp_data, "wide-format dataset csv")->required();
  impute->add_option("--method", imp_method, "imputation method token")->required();
  impute->add_option("-m,--imputations", imp_m, "number of imputations")
      ->check(CLI::PositiveNumber);
  impute->add_option("--seed", imp_seed, "master seed")->required();
  impute->add_option("--out", imp_out, "output file ('-' = stdout)");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "pool completed datasets");
  std::vector<std::string> ana_paths;
  double ana_alpha = 0.05;
  std::string ana_scenario = "adhoc", ana_method = "mi", ana_out = "-";
  analyze->add_option("completed", ana_paths, "completed dataset csv files")
      ->required();
  analyze->add_option("--alpha", ana_alpha, "two-sided significance level");
  analyze->add_option("--scenario", ana_scenario, "scenario label for output");
  analyze->add_option("--method", ana_method, "method label for output");
  analyze->add_option("--out", ana_out, "output file ('-' = stdout)");

  // truth
  auto* truth = app.add_subcommand("truth", "print the scenario's true values");
  std::string tru_config;
  long tru_mc = 0;
  std::uint64_t tru_seed = 0;
  truth->add_option("config", tru_config, "scenario config file")->required();
  truth->add_option("--mc-subjects", tru_mc, "Monte-Carlo subjects for pi");
  auto* tru_seed_opt = truth->add_option("--seed", tru_seed, "master seed");

  // tables
  auto* tbl = app.add_subcommand("tables", "regenerate the shipped result tables");
  bool tbl_paper = false;
  std::string tbl_configs = "configs", tbl_out = "paper-tables", tbl_scale = "desk";
  int tbl_threads = 0;
  long tbl_mc = 1000000;
  std::uint64_t tbl_seed = 0;
  tbl->add_flag("--paper", tbl_paper, "run the shipped paper-table configs");
  tbl->add_option("--configs", tbl_configs, "config directory");
  tbl->add_option("--out", tbl_out, "output directory");
  tbl->add_option("--scale", tbl_scale, "desk (config R/M) or paper (R=5000, M=200)")
      ->check(CLI::IsMember({"desk", "paper"}));
  tbl->add_option("--threads", tbl_threads, "worker thread cap");
  tbl->add_option("--mc-subjects", tbl_mc, "Monte-Carlo subjects for table 1");
  auto* tbl_seed_opt = tbl->add_option("--seed", tbl_seed, "override config seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (simulate->parsed()) {
      return run_simulate(sim_config, sim_seed, sim_out, sim_threads,
                          sim_replicates, sim_imputations, sim_bootstrap);
    }
    if (impute->parsed()) {
      return run_impute(imp_data, imp_method, imp_m, imp_seed, imp_out);
    }
    if (analyze->parsed()) {
      return run_analyze(ana_paths, ana_alpha, ana_scenario, ana_method, ana_out);
    }
    if (truth->parsed()) {
      return run_truth(tru_config, tru_mc, tru_seed, tru_seed_opt->count() > 0);
    }
    if (tbl->parsed()) {
      if (!tbl_paper) {
        std::cerr << "tables: pass --paper to run the shipped configs\n";
        return 2;
      }
      return run_tables(tbl_configs, tbl_out, tbl_scale, tbl_threads, tbl_mc,
                        tbl_seed, tbl_seed_opt->count() > 0);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
