#pragma once

// Wide-format CSV for trial datasets and completed datasets.
//
//   subject_id,arm,y0,y1,...,yK            (datasets; empty field = missing)
//   subject_id,arm,imputation_m,y0,...,yK  (completed datasets)
//
// Values are written with shortest-round-trip formatting, so export/import
// is lossless.

#include <charconv>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "rtb/datagen.hpp"
#include "rtb/errors.hpp"
#include "rtb/mi.hpp"

namespace rtb {
namespace csv_detail {

inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& field, int line_no) {
  double v = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc{} || res.ptr != end) {
    throw io_error("csv line " + std::to_string(line_no) + ": bad number '" +
                   field + "'");
  }
  return v;
}

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

struct RawRow {
  std::string arm;
  int imputation_m = 0;
  std::vector<double> values;  // NaN = missing
  std::vector<bool> observed;
};

inline std::vector<RawRow> read_rows(std::istream& in, bool completed, int* K_out) {
  std::string line;
  if (!std::getline(in, line)) throw io_error("csv: empty input");
  const std::vector<std::string> header = split_fields(line);
  const std::size_t fixed = completed ? 3 : 2;
  if (header.size() < fixed + 2 || header[0] != "subject_id" || header[1] != "arm" ||
      (completed && header[2] != "imputation_m")) {
    throw io_error("csv: bad header (expected subject_id,arm" +
                   std::string(completed ? ",imputation_m" : "") + ",y0,...)");
  }
  for (std::size_t j = fixed; j < header.size(); ++j) {
    if (header[j] != "y" + std::to_string(j - fixed)) {
      throw io_error("csv: bad header column '" + header[j] + "'");
    }
  }
  const int visits = static_cast<int>(header.size() - fixed);
  *K_out = visits - 1;

  std::vector<RawRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw io_error("csv line " + std::to_string(line_no) + ": expected " +
                     std::to_string(header.size()) + " fields, got " +
                     std::to_string(fields.size()));
    }
    RawRow row;
    row.arm = fields[1];
    if (completed) {
      row.imputation_m = static_cast<int>(parse_double(fields[2], line_no));
    }
    for (int j = 0; j < visits; ++j) {
      const std::string& f = fields[fixed + j];
      if (f.empty()) {
        row.values.push_back(kMissingValue);
        row.observed.push_back(false);
      } else {
        row.values.push_back(parse_double(f, line_no));
        row.observed.push_back(true);
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw io_error("csv: no data rows");
  return rows;
}

}  // namespace csv_detail

inline void write_dataset(std::ostream& out, const TrialDataset& dataset) {
  out << "subject_id,arm";
  for (int k = 0; k <= dataset.K; ++k) out << ",y" << k;
  out << "\n";
  long subject = 0;
  for (const ArmData& arm : dataset.arms) {
    for (int i = 0; i < arm.n(); ++i) {
      out << ++subject << ',' << arm.label;
      for (int k = 0; k <= dataset.K; ++k) {
        out << ',';
        if (arm.mask(i, k)) out << csv_detail::format_double(arm.values(i, k));
      }
      out << "\n";
    }
  }
}

inline TrialDataset read_dataset(std::istream& in) {
  int K = 0;
  const auto rows = csv_detail::read_rows(in, /*completed=*/false, &K);

  std::vector<std::string> arm_order;
  std::map<std::string, std::vector<const csv_detail::RawRow*>> by_arm;
  for (const auto& row : rows) {
    if (by_arm.find(row.arm) == by_arm.end()) arm_order.push_back(row.arm);
    by_arm[row.arm].push_back(&row);
  }

  TrialDataset dataset;
  dataset.K = K;
  for (const std::string& label : arm_order) {
    const auto& arm_rows = by_arm[label];
    ArmData arm;
    arm.label = label;
    arm.values.resize(arm_rows.size(), K + 1);
    arm.mask.resize(arm_rows.size(), K + 1);
    for (std::size_t i = 0; i < arm_rows.size(); ++i) {
      for (int k = 0; k <= K; ++k) {
        arm.values(i, k) = arm_rows[i]->values[k];
        arm.mask(i, k) = arm_rows[i]->observed[k];
      }
    }
    if (!is_monotone(arm.mask)) {
      throw io_error("csv: arm '" + label +
                     "' has a non-monotone missingness pattern (or missing baseline)");
    }
    dataset.arms.push_back(std::move(arm));
  }
  return dataset;
}

/// Completed datasets share one file, distinguished by the imputation_m
/// column. Cells an imputation method left unfilled (intermediate visits of
/// the final-visit-only methods) stay empty.
inline void write_completed(std::ostream& out,
                            const std::vector<CompletedDataset>& completed) {
  if (completed.empty()) throw std::invalid_argument("write_completed: no datasets");
  const int K = completed.front().K;
  out << "subject_id,arm,imputation_m";
  for (int k = 0; k <= K; ++k) out << ",y" << k;
  out << "\n";
  for (const CompletedDataset& cd : completed) {
    long subject = 0;
    for (const CompletedArm& arm : cd.arms) {
      for (Eigen::Index i = 0; i < arm.values.rows(); ++i) {
        out << ++subject << ',' << arm.label << ',' << cd.m;
        for (int k = 0; k <= K; ++k) {
          out << ',';
          if (std::isfinite(arm.values(i, k))) {
            out << csv_detail::format_double(arm.values(i, k));
          }
        }
        out << "\n";
      }
    }
  }
}

inline std::vector<CompletedDataset> read_completed(std::istream& in) {
  int K = 0;
  const auto rows = csv_detail::read_rows(in, /*completed=*/true, &K);

  std::vector<int> m_order;
  std::vector<std::string> arm_order;
  std::map<int, std::map<std::string, std::vector<const csv_detail::RawRow*>>> grouped;
  for (const auto& row : rows) {
    if (grouped.find(row.imputation_m) == grouped.end()) {
      m_order.push_back(row.imputation_m);
    }
    auto& arms = grouped[row.imputation_m];
    if (arms.find(row.arm) == arms.end() &&
        std::find(arm_order.begin(), arm_order.end(), row.arm) == arm_order.end()) {
      arm_order.push_back(row.arm);
    }
    arms[row.arm].push_back(&row);
  }

  std::vector<CompletedDataset> out;
  for (int m : m_order) {
    CompletedDataset cd;
    cd.K = K;
    cd.m = m;
    cd.method = "imported";
    for (const std::string& label : arm_order) {
      auto it = grouped[m].find(label);
      if (it == grouped[m].end()) {
        throw io_error("csv: imputation " + std::to_string(m) + " lacks arm '" +
                       label + "'");
      }
      const auto& arm_rows = it->second;
      CompletedArm arm;
      arm.label = label;
      arm.values.resize(arm_rows.size(), K + 1);
      arm.source_mask.resize(arm_rows.size(), K + 1);
      for (std::size_t i = 0; i < arm_rows.size(); ++i) {
        for (int k = 0; k <= K; ++k) {
          arm.values(i, k) = arm_rows[i]->values[k];
          arm.source_mask(i, k) = arm_rows[i]->observed[k];
        }
      }
      cd.arms.push_back(std::move(arm));
    }
    out.push_back(std::move(cd));
  }
  return out;
}

}  // namespace rtb
