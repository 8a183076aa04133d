#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "sole/errors.hpp"
#include "sole/features.hpp"
#include "sole/forest.hpp"
#include "sole/icp.hpp"
#include "sole/pointcloud.hpp"

namespace sole {

using Json = nlohmann::ordered_json;

inline Json to_json(const RigidTransform& t) {
  return Json{{"theta", t.theta}, {"tx", t.tx}, {"ty", t.ty}};
}

inline RigidTransform transform_from_json(const Json& j) {
  try {
    return {j.at("theta").get<double>(), j.at("tx").get<double>(), j.at("ty").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad transform JSON: ") + e.what());
  }
}

inline Json to_json(const AlignmentResult& a, bool with_candidates = false) {
  Json j{{"transform", to_json(a.transform)},
         {"objective", a.objective},
         {"selection_score", a.selection_score},
         {"direction", to_string(a.direction)},
         {"start", a.start_used},
         {"rate", a.rate_used}};
  if (with_candidates) {
    Json cands = Json::array();
    for (const auto& c : a.candidates)
      cands.push_back({{"rate", c.rate},
                       {"start", c.start},
                       {"direction", to_string(c.direction)},
                       {"transform", to_json(c.transform)},
                       {"objective", c.objective},
                       {"selection_score", c.selection_score},
                       {"iterations", c.iterations},
                       {"converged", c.converged},
                       {"degenerate", c.degenerate}});
    j["candidates"] = std::move(cands);
  }
  return j;
}

/// Feature vector as an ordered object; missing metrics are null.
inline Json to_json(const FeatureVector& fv) {
  Json j = Json::object();
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    const std::string name(kFeatureNames[i]);
    if (fv.missing[i]) j[name] = nullptr;
    else j[name] = fv.values[i];
  }
  return j;
}

inline Json to_json(const PointCloud& cloud) {
  Json arr = Json::array();
  for (const Point& p : cloud) arr.push_back(Json::array({p.x, p.y}));
  return arr;
}

// ---------------------------------------------------------------------------
// Forest model files
// ---------------------------------------------------------------------------

inline Json to_json(const ForestParams& p) {
  Json j{{"n_trees", p.n_trees}};
  j["max_depth"] = p.max_depth ? Json(*p.max_depth) : Json(nullptr);
  j["min_samples_split"] = p.min_samples_split;
  j["min_samples_leaf"] = p.min_samples_leaf;
  j["max_features"] = p.max_features;
  j["bootstrap"] = p.bootstrap;
  return j;
}

inline ForestParams params_from_json(const Json& j) {
  ForestParams p;
  p.n_trees = j.at("n_trees").get<int>();
  p.max_depth = j.at("max_depth").is_null() ? std::nullopt : std::optional<int>(j.at("max_depth").get<int>());
  p.min_samples_split = j.at("min_samples_split").get<int>();
  p.min_samples_leaf = j.at("min_samples_leaf").get<int>();
  p.max_features = j.value("max_features", 0);
  p.bootstrap = j.value("bootstrap", true);
  return p;
}

inline Json to_json(const ForestModel& m) {
  Json trees = Json::array();
  for (const Tree& t : m.trees)
    trees.push_back({{"feature", t.feature},
                     {"threshold", t.threshold},
                     {"left", t.left},
                     {"right", t.right},
                     {"value", t.value}});
  Json j{{"schema_version", ForestModel::kSchemaVersion},
         {"columns", m.columns},
         {"hyperparams", to_json(m.params)},
         {"seed", m.seed},
         {"indicator_columns", m.indicator_columns},
         {"medians", m.medians},
         {"importances", m.importances}};
  j["oob_score"] = m.oob_score ? Json(*m.oob_score) : Json(nullptr);
  j["trees"] = std::move(trees);
  return j;
}

inline ForestModel model_from_json(const Json& j) {
  try {
    if (j.at("schema_version").get<int>() != ForestModel::kSchemaVersion)
      throw SchemaError("unsupported model schema_version");
    ForestModel m;
    m.columns = j.at("columns").get<std::vector<std::string>>();
    m.params = params_from_json(j.at("hyperparams"));
    m.seed = j.value("seed", std::uint64_t{0});
    m.indicator_columns = j.value("indicator_columns", false);
    m.medians = j.at("medians").get<std::vector<double>>();
    m.importances = j.at("importances").get<std::vector<double>>();
    if (j.contains("oob_score") && !j["oob_score"].is_null()) m.oob_score = j["oob_score"].get<double>();
    for (const auto& jt : j.at("trees")) {
      Tree t;
      t.feature = jt.at("feature").get<std::vector<int>>();
      t.threshold = jt.at("threshold").get<std::vector<double>>();
      t.left = jt.at("left").get<std::vector<int>>();
      t.right = jt.at("right").get<std::vector<int>>();
      t.value = jt.at("value").get<std::vector<double>>();
      const std::size_t n = t.feature.size();
      if (n == 0 || t.threshold.size() != n || t.left.size() != n || t.right.size() != n || t.value.size() != n)
        throw SchemaError("malformed tree arrays");
      for (std::size_t i = 0; i < n; ++i) {
        if (t.feature[i] < 0) continue;
        if (static_cast<std::size_t>(t.feature[i]) >= m.columns.size() || t.left[i] <= static_cast<int>(i) ||
            t.right[i] <= static_cast<int>(i) || static_cast<std::size_t>(t.left[i]) >= n ||
            static_cast<std::size_t>(t.right[i]) >= n)
          throw SchemaError("malformed tree node");
      }
      m.trees.push_back(std::move(t));
    }
    if (m.medians.size() != m.columns.size() || m.importances.size() != m.columns.size())
      throw SchemaError("model arrays do not match its columns");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad model JSON: ") + e.what());
  }
}

inline std::string dump_model(const ForestModel& m) { return to_json(m).dump(); }

inline void save_model(const std::string& path, const ForestModel& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IOError("cannot write " + path);
  os << dump_model(m) << '\n';
}

inline Json read_json_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IOError("cannot read " + path);
  try {
    return Json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline ForestModel load_model(const std::string& path) { return model_from_json(read_json_file(path)); }

}  // namespace sole
