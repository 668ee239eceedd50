#pragma once

// Scenario configuration files: a small key-value format with [arm <label>]
// and [missing] sections.
//
//   id = table2-k1-mdo-rho05
//   k = 1
//   n = 100
//   replicates = 1000
//   imputations = 50
//   bootstrap = 0
//   boot_imputations = 10
//   alpha = 0.05
//   seed = 20260401
//   methods = tim nim-mean direct-ml
//   truth_subjects = 1000000
//
//   [arm P]
//   means = 0 0
//   cs = 1.0 0.5            # sigma rho
//
//   [arm E]
//   means = 0 -1
//   sds = 1 0.8             # per-visit SDs (explicit covariance) ...
//   rho = 0.2               # ... with a common correlation
//
//   [missing]
//   mechanism = mdo         # optional; checked against alpha1
//   alpha0 = -1
//   alpha1 = 1

#include <Eigen/Dense>
#include <cstdint>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "rtb/datagen.hpp"
#include "rtb/errors.hpp"
#include "rtb/methods.hpp"

namespace rtb {

struct ScenarioConfig {
  std::string id;
  int K = 1;
  std::vector<ArmSpec> arms;
  MissingnessSpec missing;
  int replicates = 1000;
  int imputations = 50;
  int bootstrap_b = 0;        // 0 disables the bootstrap
  int boot_imputations = 10;  // per-bootstrap-replicate M
  std::vector<Method> methods;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  bool seed_set = false;
  long truth_subjects = 1'000'000;
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

inline std::vector<double> parse_doubles(const std::string& value, int line_no) {
  std::istringstream ss(value);
  std::vector<double> out;
  double v;
  while (ss >> v) out.push_back(v);
  std::string rest;
  if (ss.fail() && !ss.eof()) {
    throw io_error("config line " + std::to_string(line_no) +
                   ": expected numbers, got '" + value + "'");
  }
  return out;
}

inline double parse_one_double(const std::string& value, int line_no) {
  const auto vals = parse_doubles(value, line_no);
  if (vals.size() != 1) {
    throw io_error("config line " + std::to_string(line_no) +
                   ": expected a single number, got '" + value + "'");
  }
  return vals[0];
}

struct ArmDraft {
  std::string label;
  std::vector<double> means;
  bool has_cs = false;
  double cs_sigma = 1.0, cs_rho = 0.0;
  std::vector<double> sds;
  bool has_rho = false;
  double rho = 0.0;
  int n = -1;
  int line = 0;
};

inline CovarianceSpec build_cov(const ArmDraft& draft, int dim) {
  if (draft.has_cs) {
    if (!draft.sds.empty() || draft.has_rho) {
      throw io_error("config: arm '" + draft.label +
                     "' mixes cs= with sds=/rho=");
    }
    return CovarianceSpec::compound_symmetry(draft.cs_sigma, draft.cs_rho);
  }
  if (!draft.sds.empty()) {
    if (!draft.has_rho) {
      throw io_error("config: arm '" + draft.label + "' has sds= but no rho=");
    }
    if (static_cast<int>(draft.sds.size()) != dim) {
      throw io_error("config: arm '" + draft.label + "' has " +
                     std::to_string(draft.sds.size()) + " sds for " +
                     std::to_string(dim) + " visits");
    }
    Eigen::MatrixXd cov(dim, dim);
    for (int i = 0; i < dim; ++i) {
      for (int j = 0; j < dim; ++j) {
        cov(i, j) = (i == j ? 1.0 : draft.rho) * draft.sds[i] * draft.sds[j];
      }
    }
    return CovarianceSpec::explicit_matrix(std::move(cov));
  }
  throw io_error("config: arm '" + draft.label +
                 "' needs either cs= or sds=+rho=");
}

}  // namespace config_detail

inline ScenarioConfig parse_scenario_config(std::istream& in) {
  using namespace config_detail;
  ScenarioConfig config;
  bool have_k = false;
  int global_n = -1;
  std::vector<ArmDraft> drafts;
  bool missing_seen = false;
  bool mechanism_given = false;
  std::string mechanism_token;
  double alpha0 = 0.0, alpha1 = 0.0;
  bool alpha0_seen = false;

  enum class Section { kTop, kArm, kMissing };
  Section section = Section::kTop;

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') {
        throw io_error("config line " + std::to_string(line_no) +
                       ": unterminated section header");
      }
      const std::string name = trim(line.substr(1, line.size() - 2));
      if (name.rfind("arm ", 0) == 0) {
        ArmDraft draft;
        draft.label = trim(name.substr(4));
        draft.line = line_no;
        if (draft.label.empty()) {
          throw io_error("config line " + std::to_string(line_no) +
                         ": arm section needs a label");
        }
        drafts.push_back(draft);
        section = Section::kArm;
      } else if (name == "missing") {
        missing_seen = true;
        section = Section::kMissing;
      } else {
        throw io_error("config line " + std::to_string(line_no) +
                       ": unknown section '" + name + "'");
      }
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw io_error("config line " + std::to_string(line_no) +
                     ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    if (section == Section::kTop) {
      if (key == "id") {
        config.id = value;
      } else if (key == "k") {
        config.K = static_cast<int>(parse_one_double(value, line_no));
        have_k = true;
      } else if (key == "n") {
        global_n = static_cast<int>(parse_one_double(value, line_no));
      } else if (key == "replicates") {
        config.replicates = static_cast<int>(parse_one_double(value, line_no));
      } else if (key == "imputations") {
        config.imputations = static_cast<int>(parse_one_double(value, line_no));
      } else if (key == "bootstrap") {
        config.bootstrap_b = static_cast<int>(parse_one_double(value, line_no));
      } else if (key == "boot_imputations") {
        config.boot_imputations = static_cast<int>(parse_one_double(value, line_no));
      } else if (key == "alpha") {
        config.alpha = parse_one_double(value, line_no);
      } else if (key == "seed") {
        config.seed = static_cast<std::uint64_t>(
            std::stoull(value));
        config.seed_set = true;
      } else if (key == "truth_subjects") {
        config.truth_subjects = static_cast<long>(parse_one_double(value, line_no));
      } else if (key == "methods") {
        std::istringstream ss(value);
        std::string token;
        while (ss >> token) config.methods.push_back(method_from_token(token));
      } else {
        throw io_error("config line " + std::to_string(line_no) +
                       ": unknown key '" + key + "'");
      }
    } else if (section == Section::kArm) {
      ArmDraft& draft = drafts.back();
      if (key == "means") {
        draft.means = parse_doubles(value, line_no);
      } else if (key == "cs") {
        const auto vals = parse_doubles(value, line_no);
        if (vals.size() != 2) {
          throw io_error("config line " + std::to_string(line_no) +
                         ": cs wants 'sigma rho'");
        }
        draft.has_cs = true;
        draft.cs_sigma = vals[0];
        draft.cs_rho = vals[1];
      } else if (key == "sds") {
        draft.sds = parse_doubles(value, line_no);
      } else if (key == "rho") {
        draft.has_rho = true;
        draft.rho = parse_one_double(value, line_no);
      } else if (key == "n") {
        draft.n = static_cast<int>(parse_one_double(value, line_no));
      } else {
        throw io_error("config line " + std::to_string(line_no) +
                       ": unknown arm key '" + key + "'");
      }
    } else {
      if (key == "mechanism") {
        mechanism_given = true;
        mechanism_token = value;
      } else if (key == "alpha0") {
        alpha0 = parse_one_double(value, line_no);
        alpha0_seen = true;
      } else if (key == "alpha1") {
        alpha1 = parse_one_double(value, line_no);
      } else {
        throw io_error("config line " + std::to_string(line_no) +
                       ": unknown missing key '" + key + "'");
      }
    }
  }

  if (config.id.empty()) throw io_error("config: missing id");
  if (!have_k) throw io_error("config: missing k");
  if (config.K < 1) throw io_error("config: k must be >= 1");
  if (drafts.empty()) throw io_error("config: no [arm ...] sections");
  if (!missing_seen || !alpha0_seen) {
    throw io_error("config: missing [missing] section with alpha0");
  }
  if (config.methods.empty()) throw io_error("config: no methods listed");
  if (!(config.alpha > 0.0 && config.alpha < 1.0)) {
    throw io_error("config: alpha must be in (0,1)");
  }

  config.missing = MissingnessSpec::from_params(alpha0, alpha1);
  if (mechanism_given) {
    const Mechanism stated = [&] {
      if (mechanism_token == "mcar") return Mechanism::kMcar;
      if (mechanism_token == "mdo") return Mechanism::kMdo;
      throw io_error("config: unknown mechanism '" + mechanism_token + "'");
    }();
    if (stated != config.missing.mechanism) {
      throw io_error("config: mechanism '" + mechanism_token +
                     "' inconsistent with alpha1 = " + std::to_string(alpha1));
    }
  }

  for (const ArmDraft& draft : drafts) {
    ArmSpec spec;
    spec.label = draft.label;
    spec.n = draft.n > 0 ? draft.n : global_n;
    if (spec.n < 2) {
      throw io_error("config: arm '" + draft.label + "' has no usable n");
    }
    if (static_cast<int>(draft.means.size()) != config.K + 1) {
      throw io_error("config: arm '" + draft.label + "' has " +
                     std::to_string(draft.means.size()) + " means for k = " +
                     std::to_string(config.K) + " (need k+1)");
    }
    spec.means = Eigen::Map<const Eigen::VectorXd>(draft.means.data(),
                                                   draft.means.size());
    spec.cov = config_detail::build_cov(draft, config.K + 1);
    validate_arm_spec(spec);
    config.arms.push_back(std::move(spec));
  }
  return config;
}

inline ScenarioConfig load_scenario_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config file '" + path + "'");
  try {
    return parse_scenario_config(in);
  } catch (const io_error& e) {
    throw io_error(path + ": " + e.what());
  }
}

}  // namespace rtb
