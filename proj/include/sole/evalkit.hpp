#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sole/errors.hpp"
#include "sole/evalstats.hpp"
#include "sole/features.hpp"
#include "sole/featuretable.hpp"
#include "sole/forest.hpp"
#include "sole/image_io.hpp"
#include "sole/scenario.hpp"
#include "sole/serialize.hpp"
#include "sole/util.hpp"

namespace sole {

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

/// One captured impression. shoe_id names a physical pair of shoes; `foot`
/// picks the shoe within it.
struct ShoeRecord {
  std::string shoe_id;
  std::string person_id;
  std::string model;
  std::string size;
  Foot foot = Foot::Left;
  int visit = 1;
  int blur_level = 0;
  int replicate = 1;
  std::string image_path;

  friend bool operator==(const ShoeRecord&, const ShoeRecord&) = default;
};

inline constexpr std::string_view kRegistryHeader =
    "shoe_id,person_id,model,size,foot,visit,blur_level,replicate,image_path";

inline void validate_record(const ShoeRecord& r) {
  if (r.shoe_id.empty() || r.person_id.empty() || r.model.empty() || r.size.empty())
    throw SchemaError("registry identifiers must be nonempty");
  if (r.visit < 1 || r.visit > 3) throw SchemaError("visit must be 1, 2 or 3");
  if (r.blur_level < 0 || r.blur_level > 10 || r.blur_level % 2 != 0)
    throw SchemaError("blur_level must be one of 0, 2, 4, 6, 8, 10");
  if (r.replicate < 1) throw SchemaError("replicate must be positive");
}

inline void write_registry(std::ostream& os, const std::vector<ShoeRecord>& records) {
  os << kRegistryHeader << '\n';
  for (const auto& r : records) {
    for (const std::string* f : {&r.shoe_id, &r.person_id, &r.model, &r.size, &r.image_path}) check_csv_field(*f);
    os << r.shoe_id << ',' << r.person_id << ',' << r.model << ',' << r.size << ',' << to_string(r.foot) << ','
       << r.visit << ',' << r.blur_level << ',' << r.replicate << ',' << r.image_path << '\n';
  }
}

inline void write_registry(const std::string& path, const std::vector<ShoeRecord>& records) {
  std::ofstream os(path);
  if (!os) throw IOError("cannot write " + path);
  write_registry(os, records);
}

inline int parse_int_field(const std::string& s, const char* what) {
  int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw FormatError(std::string("registry ") + what + " is not an integer: '" + s + "'");
  return v;
}

inline std::vector<ShoeRecord> read_registry(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("registry is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRegistryHeader) throw FormatError("registry header must be: " + std::string(kRegistryHeader));
  std::vector<ShoeRecord> out;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto c = split_csv_line(line);
    if (c.size() != 9) throw FormatError("registry row must have 9 fields: " + line);
    ShoeRecord r;
    r.shoe_id = c[0];
    r.person_id = c[1];
    r.model = c[2];
    r.size = c[3];
    try {
      r.foot = parse_foot(c[4]);
    } catch (const Error&) {
      throw FormatError("registry foot must be L or R: " + c[4]);
    }
    r.visit = parse_int_field(c[5], "visit");
    r.blur_level = parse_int_field(c[6], "blur_level");
    r.replicate = parse_int_field(c[7], "replicate");
    r.image_path = c[8];
    validate_record(r);
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<ShoeRecord> read_registry(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IOError("cannot read " + path);
  return read_registry(is);
}

// ---------------------------------------------------------------------------
// Shoe-level split
// ---------------------------------------------------------------------------

struct ShoeSplit {
  std::set<std::string> train, test;
};

inline std::vector<std::string> shoe_ids(const std::vector<ShoeRecord>& records) {
  std::set<std::string> ids;
  for (const auto& r : records) ids.insert(r.shoe_id);
  return {ids.begin(), ids.end()};
}

/// Random shoe-level partition with round(train_fraction * shoes) training
/// shoes, kept within [1, shoes - 1].
inline ShoeSplit split_by_shoe(const std::vector<ShoeRecord>& records, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train fraction must lie in (0, 1)");
  std::vector<std::string> ids = shoe_ids(records);
  if (ids.size() < 2) throw PairingError("a train/test split needs at least two shoes");
  Rng rng(seed);
  rng.shuffle(ids);
  auto n_train = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(ids.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, ids.size() - 1);
  ShoeSplit s;
  s.train.insert(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.insert(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  return s;
}

// ---------------------------------------------------------------------------
// Pair construction
// ---------------------------------------------------------------------------

struct PairSpec {
  std::string pair_id;
  Scenario scenario = Scenario::PristineAN;
  int label = 0;
  std::size_t q = 0;  // index into the registry
  std::size_t k = 0;
  std::optional<PartialSpec> partial;
  bool reflect_k = false;
};

struct ScenarioPairSet {
  Scenario scenario = Scenario::PristineAN;
  std::vector<PairSpec> mated;
  std::vector<PairSpec> non_mated;

  std::vector<PairSpec> all() const {
    std::vector<PairSpec> out = mated;
    out.insert(out.end(), non_mated.begin(), non_mated.end());
    return out;
  }
};

namespace detail {

inline std::string record_key(const ShoeRecord& r) {
  return r.shoe_id + "-" + to_string(r.foot) + "-v" + std::to_string(r.visit) + "-b" + std::to_string(r.blur_level) +
         "-r" + std::to_string(r.replicate);
}

inline Foot opposite(Foot f) { return f == Foot::Left ? Foot::Right : Foot::Left; }

}  // namespace detail

/// Mated and non-mated pairs of one scenario, restricted to records whose
/// shoe_id is in `shoes` (all shoes when empty).
///
/// Mated pairs share shoe and foot. Pristine, partial and Pristine150 pairs
/// use two replicates of visit 1 at blur 0 (Q the lower replicate); temporal
/// pairs put visit 1 against visit 2 or 3; blur pairs put a blurred Q against
/// a blur-0 K of another replicate. Each mated pair yields one non-mated pair
/// with the same Q: K is the matching capture of the next shoe (in id order)
/// with equal model, size and foot, or for Pristine150 the opposite foot of
/// the same shoe, reflected. Partial scenarios cut Q.
inline ScenarioPairSet build_pairs(const std::vector<ShoeRecord>& records, Scenario scenario,
                                   const std::set<std::string>& shoes = {}) {
  auto included = [&](const ShoeRecord& r) { return shoes.empty() || shoes.count(r.shoe_id) > 0; };
  auto find = [&](const std::string& shoe, Foot foot, int visit, int blur, int rep) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = records[i];
      if (r.shoe_id == shoe && r.foot == foot && r.visit == visit && r.blur_level == blur && r.replicate == rep &&
          included(r))
        return i;
    }
    return std::nullopt;
  };
  auto replicates = [&](const std::string& shoe, Foot foot, int visit, int blur) {
    std::vector<int> reps;
    for (const auto& r : records)
      if (r.shoe_id == shoe && r.foot == foot && r.visit == visit && r.blur_level == blur && included(r))
        reps.push_back(r.replicate);
    std::sort(reps.begin(), reps.end());
    reps.erase(std::unique(reps.begin(), reps.end()), reps.end());
    return reps;
  };

  ScenarioPairSet set;
  set.scenario = scenario;
  const std::string sname = to_string(scenario);
  const int blur = blur_level_of(scenario);
  const int k_visit = k_visit_of(scenario);
  const auto region = partial_region_of(scenario);

  // (shoe, foot) units in deterministic order.
  std::set<std::pair<std::string, Foot>> units;
  for (const auto& r : records)
    if (included(r)) units.insert({r.shoe_id, r.foot});

  struct Mate {
    std::size_t q, k;
  };
  std::vector<Mate> mates;
  for (const auto& [shoe, foot] : units) {
    if (blur > 0) {
      const auto qreps = replicates(shoe, foot, 1, blur);
      const auto kreps = replicates(shoe, foot, 1, 0);
      if (qreps.empty() || kreps.empty()) continue;
      const int qrep = qreps.front();
      int krep = kreps.front();
      for (int r : kreps)
        if (r != qrep) {
          krep = r;
          break;
        }
      mates.push_back({*find(shoe, foot, 1, blur, qrep), *find(shoe, foot, 1, 0, krep)});
    } else if (k_visit > 1) {
      const auto qreps = replicates(shoe, foot, 1, 0);
      const auto kreps = replicates(shoe, foot, k_visit, 0);
      if (qreps.empty() || kreps.empty()) continue;
      mates.push_back({*find(shoe, foot, 1, 0, qreps.front()), *find(shoe, foot, k_visit, 0, kreps.front())});
    } else {
      const auto reps = replicates(shoe, foot, 1, 0);
      for (std::size_t a = 0; a < reps.size(); ++a)
        for (std::size_t b = a + 1; b < reps.size(); ++b)
          mates.push_back({*find(shoe, foot, 1, 0, reps[a]), *find(shoe, foot, 1, 0, reps[b])});
    }
  }
  if (mates.empty())
    throw PairingError(sname + ": no shoe has the captures a mated pair needs (same shoe, same foot" +
                       std::string(blur > 0 ? ", blurred Q and blur-0 K" : k_visit > 1 ? ", later visit K" : ", two replicates") +
                       ")");

  auto make = [&](std::size_t q, std::size_t k, int label, bool reflect) {
    PairSpec p;
    p.scenario = scenario;
    p.label = label;
    p.q = q;
    p.k = k;
    p.reflect_k = reflect;
    if (region) p.partial = PartialSpec{*region, records[q].foot};
    p.pair_id = sname + ":" + detail::record_key(records[q]) + ":" + detail::record_key(records[k]) + (reflect ? ":refl" : "");
    return p;
  };

  std::size_t non_mates_found = 0;
  for (const Mate& m : mates) {
    set.mated.push_back(make(m.q, m.k, 1, false));
    const ShoeRecord& q = records[m.q];
    const ShoeRecord& k = records[m.k];
    std::optional<std::size_t> other;
    if (scenario == Scenario::Pristine150) {
      const Foot f = detail::opposite(q.foot);
      other = find(q.shoe_id, f, k.visit, k.blur_level, k.replicate);
      if (!other) {
        const auto reps = replicates(q.shoe_id, f, k.visit, k.blur_level);
        if (!reps.empty()) other = find(q.shoe_id, f, k.visit, k.blur_level, reps.front());
      }
    } else {
      std::vector<std::string> peers;
      for (const auto& [shoe, foot] : units) {
        if (shoe == q.shoe_id || foot != q.foot) continue;
        const auto rep = std::find_if(records.begin(), records.end(),
                                      [&, s = shoe](const ShoeRecord& r) { return r.shoe_id == s && included(r); });
        if (rep != records.end() && rep->model == q.model && rep->size == q.size) peers.push_back(shoe);
      }
      // Next peer after Q's shoe in cyclic id order.
      std::sort(peers.begin(), peers.end());
      auto it = std::upper_bound(peers.begin(), peers.end(), q.shoe_id);
      for (std::size_t tries = 0; tries < peers.size() && !other; ++tries, ++it) {
        if (it == peers.end()) it = peers.begin();
        const auto reps = replicates(*it, q.foot, k.visit, k.blur_level);
        if (reps.empty()) continue;
        const int rep = std::find(reps.begin(), reps.end(), k.replicate) != reps.end() ? k.replicate : reps.front();
        other = find(*it, q.foot, k.visit, k.blur_level, rep);
      }
    }
    if (!other) continue;
    set.non_mated.push_back(make(m.q, *other, 0, scenario == Scenario::Pristine150));
    ++non_mates_found;
  }
  if (non_mates_found == 0)
    throw PairingError(sname + (scenario == Scenario::Pristine150
                                    ? ": no shoe has both feet captured (same shoe, different foot)"
                                    : ": no non-mated candidate shares model, size and foot with any Q"));
  return set;
}

// ---------------------------------------------------------------------------
// Featurization of pair sets
// ---------------------------------------------------------------------------

using ImageLoader = std::function<GrayImage(const ShoeRecord&)>;

inline ImageLoader directory_loader(const std::string& base_dir) {
  return [base_dir](const ShoeRecord& r) {
    const std::filesystem::path p(r.image_path);
    return load_gray(p.is_absolute() ? p.string() : (std::filesystem::path(base_dir) / p).string());
  };
}

struct PairFailure {
  std::string pair_id;
  std::string code;
  std::string message;
};

struct FeaturizedPairs {
  std::vector<FeatureRow> rows;
  std::vector<PairFailure> failures;
};

/// Runs the pipeline on every pair; pair i is seeded by its id. Pairs whose
/// pipeline throws are reported rather than aborting the batch.
inline FeaturizedPairs featurize_pairs(const std::vector<ShoeRecord>& records, const std::vector<PairSpec>& pairs,
                                       const ImageLoader& load, const PipelineConfig& base_cfg, std::uint64_t seed,
                                       unsigned threads = 1) {
  std::vector<std::optional<FeatureRow>> rows(pairs.size());
  std::vector<std::optional<PairFailure>> fails(pairs.size());
  parallel_for(
      pairs.size(),
      [&](std::size_t i) {
        const PairSpec& p = pairs[i];
        try {
          PairImages imgs{load(records[p.q]), load(records[p.k]), p.partial, p.reflect_k};
          PipelineConfig cfg = base_cfg;
          cfg.icp.seed = derive_seed(seed, fnv1a64(p.pair_id));
          cfg.icp.threads = 1;
          const PairResult res = featurize(imgs, cfg);
          FeatureRow row;
          row.pair_id = p.pair_id;
          row.q_shoe_id = records[p.q].shoe_id;
          row.k_shoe_id = records[p.k].shoe_id;
          row.scenario = p.scenario;
          row.label = p.label;
          row.features = res.features;
          rows[i] = std::move(row);
        } catch (const Error& e) {
          fails[i] = PairFailure{p.pair_id, e.code(), e.what()};
        }
      },
      threads);
  FeaturizedPairs out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (rows[i]) out.rows.push_back(std::move(*rows[i]));
    if (fails[i]) out.failures.push_back(std::move(*fails[i]));
  }
  return out;
}

/// Feature rows for train and test shoes across scenarios.
struct SplitFeatures {
  std::vector<FeatureRow> train, test;
  std::vector<PairFailure> failures;
  std::vector<std::string> notes;  // scenarios skipped for lack of pairs
};

/// Builds and featurizes the pairs of every scenario within each side of a
/// shoe split. A scenario the registry cannot pair is noted and skipped.
inline SplitFeatures featurize_split(const std::vector<ShoeRecord>& records, const std::vector<Scenario>& scenarios,
                                     const ShoeSplit& split, const ImageLoader& load, const PipelineConfig& cfg,
                                     std::uint64_t seed, unsigned threads = 1) {
  SplitFeatures out;
  for (Scenario s : scenarios)
    for (const auto* side : {&split.train, &split.test}) {
      const char* side_name = side == &split.train ? "train" : "test";
      ScenarioPairSet pairs;
      try {
        pairs = build_pairs(records, s, *side);
      } catch (const PairingError& e) {
        out.notes.push_back(std::string(side_name) + ": " + e.what());
        continue;
      }
      FeaturizedPairs fp = featurize_pairs(records, pairs.all(), load, cfg, seed, threads);
      auto& dst = side == &split.train ? out.train : out.test;
      dst.insert(dst.end(), fp.rows.begin(), fp.rows.end());
      out.failures.insert(out.failures.end(), fp.failures.begin(), fp.failures.end());
    }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment matrix
// ---------------------------------------------------------------------------

enum class Regime { Baseline, Full, FullIndicators, Category, Scenario, Loo, CategoryLoo };

inline constexpr std::array<Regime, 7> kAllRegimes = {Regime::Baseline, Regime::Full,     Regime::FullIndicators,
                                                      Regime::Category, Regime::Scenario, Regime::Loo,
                                                      Regime::CategoryLoo};

inline std::string to_string(Regime r) {
  switch (r) {
    case Regime::Baseline: return "baseline";
    case Regime::Full: return "full";
    case Regime::FullIndicators: return "full_indicators";
    case Regime::Category: return "category";
    case Regime::Scenario: return "scenario";
    case Regime::Loo: return "loo";
    case Regime::CategoryLoo: return "category_loo";
  }
  return "";
}

inline Regime parse_regime(std::string_view s) {
  for (Regime r : kAllRegimes)
    if (to_string(r) == s) return r;
  throw ConfigError("unknown regime " + std::string(s));
}

/// Which training rows a regime uses when testing on `test`.
struct TrainingPlan {
  std::string key;  // identical keys share one model
  std::vector<Scenario> scenarios;
  bool indicators = false;
};

inline TrainingPlan training_plan(Regime regime, Scenario test, const std::vector<Scenario>& available) {
  TrainingPlan plan;
  switch (regime) {
    case Regime::Baseline:
      plan.key = "baseline";
      plan.scenarios = {Scenario::PristineAN};
      break;
    case Regime::Full:
    case Regime::FullIndicators:
      plan.key = to_string(regime);
      plan.scenarios = available;
      plan.indicators = regime == Regime::FullIndicators;
      break;
    case Regime::Category:
      plan.key = "category:" + to_string(category_of(test));
      for (Scenario s : available)
        if (category_of(s) == category_of(test)) plan.scenarios.push_back(s);
      break;
    case Regime::Scenario:
      plan.key = "scenario:" + to_string(test);
      plan.scenarios = {test};
      break;
    case Regime::Loo:
      plan.key = "loo:" + to_string(test);
      for (Scenario s : available)
        if (s != test) plan.scenarios.push_back(s);
      break;
    case Regime::CategoryLoo:
      plan.key = "category_loo:" + to_string(test);
      for (Scenario s : available)
        if (s != test && category_of(s) == category_of(test)) plan.scenarios.push_back(s);
      break;
  }
  return plan;
}

struct ExperimentConfig {
  std::vector<Regime> regimes{kAllRegimes.begin(), kAllRegimes.end()};
  ForestParams params = default_forest_params();
  std::uint64_t seed = 0;
  unsigned threads = 1;
  Scenario reference = Scenario::PristineAN;  // EMD reference scenario
};

struct ExperimentCell {
  Regime regime;
  Scenario scenario;
  std::string model_key;
  std::optional<EvalReport> report;
  std::string note;  // why the cell is empty
};

/// Per-feature standardized EMD of each scenario against the reference.
using EmdTable = std::map<Scenario, std::array<std::optional<double>, kFeatureCount>>;

struct ExperimentReport {
  std::vector<Regime> regimes;
  std::vector<Scenario> scenarios;
  std::vector<ExperimentCell> cells;  // regime-major
  std::map<std::string, ForestModel> models;
  EmdTable emd_mated, emd_non_mated;

  const ExperimentCell& cell(Regime r, Scenario s) const {
    for (const auto& c : cells)
      if (c.regime == r && c.scenario == s) return c;
    throw StateError("no experiment cell for " + to_string(r) + " / " + to_string(s));
  }
};

inline EmdTable emd_table(const std::vector<FeatureRow>& rows, Scenario reference, int label) {
  std::set<Scenario> present;
  for (const auto& r : rows) present.insert(r.scenario);
  EmdTable table;
  for (Scenario s : present) {
    if (s == reference) continue;
    auto& entry = table[s];
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      const auto a = feature_column(rows, f, reference, label);
      const auto b = feature_column(rows, f, s, label);
      if (!a.empty() && !b.empty()) entry[f] = emd_shift(a, b);
    }
  }
  return table;
}

inline std::vector<FeatureRow> rows_for(const std::vector<FeatureRow>& rows, const std::vector<Scenario>& scenarios) {
  std::vector<FeatureRow> out;
  for (const auto& r : rows)
    if (std::find(scenarios.begin(), scenarios.end(), r.scenario) != scenarios.end()) out.push_back(r);
  return out;
}

/// Trains the models each regime needs (once per distinct training plan) and
/// evaluates them on every test scenario present.
inline ExperimentReport run_experiment_matrix(const std::vector<FeatureRow>& train_rows,
                                              const std::vector<FeatureRow>& test_rows, const ExperimentConfig& cfg) {
  ExperimentReport rep;
  rep.regimes = cfg.regimes;
  std::set<Scenario> train_present, test_present;
  for (const auto& r : train_rows) train_present.insert(r.scenario);
  for (const auto& r : test_rows) test_present.insert(r.scenario);
  for (Scenario s : kAllScenarios)
    if (test_present.count(s)) rep.scenarios.push_back(s);
  std::vector<Scenario> available;
  for (Scenario s : kAllScenarios)
    if (train_present.count(s)) available.push_back(s);
  for (Scenario s : kAllScenarios)
    if (train_present.count(s) != test_present.count(s))
      std::cerr << "warning: scenario " << to_string(s) << " lacks a "
                << (train_present.count(s) ? "test" : "train") << " split\n";

  for (Regime regime : cfg.regimes)
    for (Scenario test : rep.scenarios) {
      ExperimentCell cell{regime, test, "", std::nullopt, ""};
      const TrainingPlan plan = training_plan(regime, test, available);
      cell.model_key = plan.key;
      auto found = rep.models.find(plan.key);
      if (found == rep.models.end()) {
        const auto subset = rows_for(train_rows, plan.scenarios);
        try {
          ForestModel m = train_forest(to_dataset(subset, plan.indicators), cfg.params, cfg.seed, cfg.threads);
          m.indicator_columns = plan.indicators;
          found = rep.models.emplace(plan.key, std::move(m)).first;
        } catch (const DegenerateLabelsError& e) {
          cell.note = std::string("no usable training data: ") + e.what();
          rep.cells.push_back(std::move(cell));
          continue;
        }
      }
      const auto test_subset = rows_for(test_rows, {test});
      cell.report = evaluate(found->second, to_dataset(test_subset, plan.indicators));
      rep.cells.push_back(std::move(cell));
    }
  std::vector<FeatureRow> all_rows = train_rows;
  all_rows.insert(all_rows.end(), test_rows.begin(), test_rows.end());
  rep.emd_mated = emd_table(all_rows, cfg.reference, 1);
  rep.emd_non_mated = emd_table(all_rows, cfg.reference, 0);
  return rep;
}

// ---------------------------------------------------------------------------
// Report output
// ---------------------------------------------------------------------------

inline Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

inline Json to_json(const EvalReport& r) {
  return Json{{"n", r.n},
              {"positives", r.positives},
              {"accuracy", r.accuracy},
              {"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn}, {"fn", r.confusion.fn}}},
              {"auc", optional_json(r.auc)},
              {"optimal_threshold", optional_json(r.optimal_threshold)},
              {"sensitivity", optional_json(r.sensitivity)},
              {"specificity", optional_json(r.specificity)}};
}

inline Json to_json(const EmdTable& t) {
  Json j = Json::object();
  for (const auto& [s, values] : t) {
    Json row = Json::object();
    for (std::size_t f = 0; f < kFeatureCount; ++f) row[std::string(kFeatureNames[f])] = optional_json(values[f]);
    j[to_string(s)] = std::move(row);
  }
  return j;
}

inline Json to_json(const ExperimentReport& rep) {
  Json regimes = Json::array(), scenarios = Json::array(), accuracy = Json::object(), reports = Json::object();
  for (Regime r : rep.regimes) regimes.push_back(to_string(r));
  for (Scenario s : rep.scenarios) scenarios.push_back(to_string(s));
  for (const auto& c : rep.cells) {
    const std::string r = to_string(c.regime), s = to_string(c.scenario);
    accuracy[r][s] = c.report ? Json(c.report->accuracy) : Json(nullptr);
    Json cell{{"model", c.model_key}};
    cell["report"] = c.report ? to_json(*c.report) : Json(nullptr);
    if (!c.note.empty()) cell["note"] = c.note;
    reports[r][s] = std::move(cell);
  }
  Json importances = Json::object();
  for (const auto& [key, m] : rep.models) {
    Json imp = Json::object();
    for (const auto& [name, v] : named_importances(m)) imp[name] = v;
    importances[key] = std::move(imp);
  }
  return Json{{"regimes", regimes},     {"scenarios", scenarios},
              {"accuracy", accuracy},   {"reports", reports},
              {"importances", importances},
              {"emd", {{"mated", to_json(rep.emd_mated)}, {"non_mated", to_json(rep.emd_non_mated)}}}};
}

/// Accuracy matrix: one row per regime, one column per test scenario.
inline void write_accuracy_csv(std::ostream& os, const ExperimentReport& rep) {
  os << "regime";
  for (Scenario s : rep.scenarios) os << ',' << to_string(s);
  os << '\n';
  for (Regime r : rep.regimes) {
    os << to_string(r);
    for (Scenario s : rep.scenarios) {
      os << ',';
      const auto& c = rep.cell(r, s);
      if (c.report) os << format_double(c.report->accuracy);
    }
    os << '\n';
  }
}

/// EMD table: one row per feature, one column per non-reference scenario.
inline void write_emd_csv(std::ostream& os, const EmdTable& t) {
  os << "feature";
  for (const auto& [s, _] : t) os << ',' << to_string(s);
  os << '\n';
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    os << kFeatureNames[f];
    for (const auto& [s, values] : t) {
      os << ',';
      if (values[f]) os << format_double(*values[f]);
    }
    os << '\n';
  }
}

}  // namespace sole
