#pragma once

#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "sole/errors.hpp"
#include "sole/features.hpp"
#include "sole/forest.hpp"
#include "sole/pointcloud.hpp"
#include "sole/scenario.hpp"

namespace sole {

/// One labelled row of a feature file.
struct FeatureRow {
  std::string pair_id;
  std::string q_shoe_id;
  std::string k_shoe_id;
  Scenario scenario = Scenario::PristineAN;
  int label = 0;
  FeatureVector features;
};

inline constexpr std::array<std::string_view, 5> kFeatureMetaColumns = {"label", "pair_id", "q_shoe_id", "k_shoe_id",
                                                                        "scenario"};

inline std::vector<std::string> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline void check_csv_field(const std::string& v) {
  if (v.find_first_of(",\n\r\"") != std::string::npos)
    throw FormatError("CSV field may not contain commas, quotes or newlines: " + v);
}

inline void write_feature_header(std::ostream& os) {
  for (auto name : kFeatureNames) os << name << ',';
  for (std::size_t i = 0; i < kFeatureMetaColumns.size(); ++i) os << (i ? "," : "") << kFeatureMetaColumns[i];
  os << '\n';
}

inline void write_feature_row(std::ostream& os, const FeatureRow& row) {
  for (const std::string* f : {&row.pair_id, &row.q_shoe_id, &row.k_shoe_id}) check_csv_field(*f);
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (!row.features.missing[i]) os << format_double(row.features.values[i]);
    os << ',';
  }
  os << row.label << ',' << row.pair_id << ',' << row.q_shoe_id << ',' << row.k_shoe_id << ','
     << to_string(row.scenario) << '\n';
}

inline void write_feature_csv(std::ostream& os, const std::vector<FeatureRow>& rows) {
  write_feature_header(os);
  for (const auto& r : rows) write_feature_row(os, r);
}

inline void write_feature_csv(const std::string& path, const std::vector<FeatureRow>& rows) {
  std::ofstream os(path);
  if (!os) throw IOError("cannot write " + path);
  write_feature_csv(os, rows);
}

/// Reads a feature file. Columns are located by header name, so extra columns
/// are ignored; every feature and metadata column must be present. Empty,
/// "NA" and "nan" cells are missing values.
inline std::vector<FeatureRow> read_feature_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("feature CSV is empty");
  const auto header = split_csv_line(line);
  auto locate = [&](std::string_view name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw SchemaError("feature CSV lacks column " + std::string(name));
  };
  std::array<std::size_t, kFeatureCount> fcol{};
  for (std::size_t i = 0; i < kFeatureCount; ++i) fcol[i] = locate(kFeatureNames[i]);
  const std::size_t c_label = locate("label"), c_pair = locate("pair_id"), c_q = locate("q_shoe_id"),
                    c_k = locate("k_shoe_id"), c_scen = locate("scenario");
  std::vector<FeatureRow> rows;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw FormatError("feature CSV line " + std::to_string(line_no) + " has the wrong number of cells");
    FeatureRow r;
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      const std::string& v = cells[fcol[i]];
      if (v.empty() || v == "NA" || v == "nan" || v == "NaN") {
        r.features.values[i] = 0.0;
        r.features.missing[i] = true;
      } else {
        r.features.values[i] = parse_double(v);
      }
    }
    const std::string& lab = cells[c_label];
    if (lab != "0" && lab != "1") throw FormatError("label must be 0 or 1 on line " + std::to_string(line_no));
    r.label = lab == "1";
    r.pair_id = cells[c_pair];
    r.q_shoe_id = cells[c_q];
    r.k_shoe_id = cells[c_k];
    r.scenario = parse_scenario(cells[c_scen]);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<FeatureRow> read_feature_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IOError("cannot read " + path);
  return read_feature_csv(is);
}

inline std::vector<std::string> model_columns(bool indicators) {
  std::vector<std::string> cols(kFeatureNames.begin(), kFeatureNames.end());
  if (indicators)
    for (auto c : kIndicatorColumns) cols.emplace_back(c);
  return cols;
}

/// Model input for one feature vector: missing entries become NaN, and the
/// three category indicators are appended when requested.
inline std::vector<double> model_input(const FeatureVector& fv, std::optional<Scenario> scenario, bool indicators) {
  std::vector<double> x(kFeatureCount);
  for (std::size_t i = 0; i < kFeatureCount; ++i)
    x[i] = fv.missing[i] ? std::numeric_limits<double>::quiet_NaN() : fv.values[i];
  if (indicators) {
    if (!scenario) throw SchemaError("indicator columns need the pair's scenario");
    const Category c = category_of(*scenario);
    for (Category k : kAllCategories) x.push_back(c == k ? 1.0 : 0.0);
  }
  return x;
}

/// Observed values of one feature, optionally filtered by scenario and label.
inline std::vector<double> feature_column(const std::vector<FeatureRow>& rows, std::size_t feature,
                                          std::optional<Scenario> scenario, std::optional<int> label) {
  std::vector<double> out;
  for (const auto& r : rows) {
    if (scenario && r.scenario != *scenario) continue;
    if (label && r.label != *label) continue;
    if (!r.features.missing[feature]) out.push_back(r.features.values[feature]);
  }
  return out;
}

/// Converts feature rows to a training matrix grouped by Q's shoe.
inline Dataset to_dataset(const std::vector<FeatureRow>& rows, bool indicators = false) {
  Dataset d;
  d.columns = model_columns(indicators);
  for (const auto& r : rows) {
    d.rows.push_back(model_input(r.features, r.scenario, indicators));
    d.labels.push_back(r.label);
    d.groups.push_back(r.q_shoe_id);
  }
  return d;
}

}  // namespace sole
