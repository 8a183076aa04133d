#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "sole/featuretable.hpp"
#include "sole/forest.hpp"
#include "sole/serialize.hpp"

using namespace sole;

namespace {

Dataset separable(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.columns = {"a", "b"};
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % 2);
    d.rows.push_back({rng.uniform(0, 1) + (y ? 2.0 : 0.0), rng.uniform(0, 1)});
    d.labels.push_back(y);
    d.groups.push_back("g" + std::to_string(i / 4));
  }
  return d;
}

Dataset noise(std::size_t n, std::size_t p, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  for (std::size_t j = 0; j < p; ++j) d.columns.push_back("f" + std::to_string(j));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> r;
    for (std::size_t j = 0; j < p; ++j) r.push_back(rng.uniform(0, 1));
    d.rows.push_back(r);
    d.labels.push_back(rng.uniform(0, 1) < 0.5);
    d.groups.push_back("g" + std::to_string(i));
  }
  return d;
}

ForestParams small(int trees) {
  ForestParams p;
  p.n_trees = trees;
  return p;
}

}  // namespace

TEST(Forest, SeparableOobAccuracy) {
  const ForestModel m = train_forest(separable(200, 1), small(100), 3);
  ASSERT_TRUE(m.oob_score.has_value());
  EXPECT_GE(*m.oob_score, 0.99);
}

TEST(Forest, NoiseOobNearChance) {
  double total = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const ForestModel m = train_forest(noise(200, 5, 100 + s), small(100), s);
    ASSERT_TRUE(m.oob_score.has_value());
    total += *m.oob_score;
  }
  EXPECT_GE(total / 10, 0.4);
  EXPECT_LE(total / 10, 0.6);
}

TEST(Forest, SingleClassIsRejected) {
  Dataset d = separable(20, 2);
  for (int& y : d.labels) y = 1;
  EXPECT_THROW(train_forest(d, small(5), 0), DegenerateLabelsError);
}

TEST(Forest, DeterministicAcrossThreadCounts) {
  const Dataset d = noise(150, 8, 4);
  const ForestModel a = train_forest(d, small(60), 11, 1);
  const ForestModel b = train_forest(d, small(60), 11, 4);
  EXPECT_EQ(dump_model(a), dump_model(b));
  EXPECT_EQ(dump_model(a), dump_model(train_forest(d, small(60), 11, 1)));
  EXPECT_NE(dump_model(a), dump_model(train_forest(d, small(60), 12, 1)));
}

TEST(Forest, PosteriorIsMeanOfTreeVotes) {
  ForestModel m;
  m.columns = {"x"};
  m.medians = {0.0};
  m.importances = {0.0};
  Tree yes, no;
  yes.add_node(1.0);
  no.add_node(0.0);
  m.trees = {yes, yes};
  EXPECT_EQ(m.predict(std::vector<double>{0.3}), 1.0);
  m.trees = {yes, no};
  EXPECT_EQ(m.predict(std::vector<double>{0.3}), 0.5);
}

TEST(Forest, SingleFullTreeMemorizesTrainingData) {
  const Dataset d = noise(60, 4, 5);
  ForestParams p = small(1);
  p.max_features = 4;
  p.bootstrap = false;
  const ForestModel m = train_forest(d, p, 6);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(m.predict(d.rows[i]), d.labels[i]);
}

TEST(Forest, FullyGrownTreeOnWholeDataMemorizes) {
  // Each value distinct, so a tree grown without depth limits isolates every row.
  const Dataset d = noise(80, 3, 7);
  ForestParams p = small(50);
  p.max_features = 3;
  const ForestModel m = train_forest(d, p, 8);
  for (const Tree& t : m.trees)
    for (std::size_t node = 0; node < t.node_count(); ++node)
      if (t.feature[node] < 0) {
        EXPECT_TRUE(t.value[node] == 0.0 || t.value[node] == 1.0);
      }
}

TEST(Forest, ImportancesPlantedSignalAndNormalization) {
  Rng rng(9);
  Dataset d;
  d.columns = {"signal", "n1", "n2", "n3"};
  for (int i = 0; i < 300; ++i) {
    const int y = i % 2;
    d.rows.push_back({y + rng.normal(0, 0.1), rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)});
    d.labels.push_back(y);
  }
  const ForestModel m = train_forest(d, small(100), 10);
  double sum = 0;
  for (double v : m.importances) {
    EXPECT_GE(v, 0.0);
    sum += v;
  }
  EXPECT_NEAR(sum, 1.0, 1e-9);
  EXPECT_GT(m.importances[0], 0.9);
}

TEST(Forest, UnusedFeatureHasZeroImportance) {
  Dataset d = separable(100, 11);
  d.columns.push_back("constant");
  for (auto& r : d.rows) r.push_back(7.0);
  const ForestModel m = train_forest(d, small(30), 12);
  EXPECT_EQ(m.importances[2], 0.0);
  const auto named = named_importances(m);
  EXPECT_EQ(named[2].first, "constant");
}

TEST(Forest, ShufflingZeroImportanceColumnKeepsAccuracy) {
  Dataset d = separable(200, 13);
  d.columns.push_back("constant");
  for (auto& r : d.rows) r.push_back(1.0);
  const ForestModel m = train_forest(d, small(50), 14);
  ASSERT_EQ(m.importances[2], 0.0);
  const Dataset test = separable(100, 15);
  Dataset a = test, b = test;
  a.columns = b.columns = d.columns;
  Rng rng(16);
  for (auto& r : a.rows) r.push_back(1.0);
  for (auto& r : b.rows) r.push_back(rng.uniform(-5, 5));
  auto acc = [&](const Dataset& t) {
    const auto post = m.predict(t);
    double ok = 0;
    for (std::size_t i = 0; i < post.size(); ++i) ok += classify(post[i]) == t.labels[i];
    return ok / static_cast<double>(post.size());
  };
  EXPECT_NEAR(acc(a), acc(b), 0.005);
}

TEST(Forest, MedianImputation) {
  Dataset d = separable(40, 17);
  d.rows[0][1] = std::nan("");
  const ForestModel m = train_forest(d, small(10), 18);
  std::vector<double> col;
  for (std::size_t i = 1; i < d.size(); ++i) col.push_back(d.rows[i][1]);
  EXPECT_DOUBLE_EQ(m.medians[1], median(col));
  const auto x = m.impute({0.5, std::nan("")});
  EXPECT_EQ(x[0], 0.5);
  EXPECT_EQ(x[1], m.medians[1]);
  EXPECT_EQ(m.impute({0.1, 0.2}), (std::vector<double>{0.1, 0.2}));
}

TEST(Forest, ImputationWithStoredMedian) {
  ForestModel m;
  m.columns = {"PSR"};
  m.medians = {4.2};
  EXPECT_EQ(m.impute({std::nan("")})[0], 4.2);
}

TEST(Forest, AllMissingColumnMedianIsZero) {
  Dataset d = separable(20, 19);
  for (auto& r : d.rows) r[1] = std::nan("");
  EXPECT_EQ(column_medians(d)[1], 0.0);
}

TEST(Forest, UntrainedAndSchemaErrors) {
  ForestModel m;
  EXPECT_THROW(m.impute({1.0}), StateError);
  EXPECT_THROW(m.predict(std::vector<double>{1.0}), StateError);
  const ForestModel t = train_forest(separable(30, 20), small(5), 0);
  Dataset wrong = separable(4, 21);
  wrong.columns = {"b", "a"};
  EXPECT_THROW(t.predict(wrong), SchemaError);
}

TEST(Forest, RespectsDepthAndLeafLimits) {
  const Dataset d = noise(200, 4, 22);
  ForestParams p = small(20);
  p.max_depth = 3;
  p.min_samples_leaf = 5;
  const ForestModel m = train_forest(d, p, 23);
  for (const Tree& t : m.trees) {
    std::vector<int> depth(t.node_count(), 0);
    for (std::size_t i = 0; i < t.node_count(); ++i)
      if (t.feature[i] >= 0) {
        depth[t.left[i]] = depth[i] + 1;
        depth[t.right[i]] = depth[i] + 1;
      }
    for (int dd : depth) EXPECT_LE(dd, 3);
  }
}

TEST(Forest, ModelJsonRoundTrip) {
  const Dataset d = noise(80, 5, 24);
  ForestParams p = small(20);
  p.max_depth = 10;
  const ForestModel m = train_forest(d, p, 25);
  const ForestModel back = model_from_json(Json::parse(dump_model(m)));
  EXPECT_EQ(dump_model(back), dump_model(m));
  for (const auto& r : d.rows) EXPECT_EQ(back.predict(r), m.predict(r));
  Json j = to_json(m);
  EXPECT_TRUE(j["hyperparams"]["max_depth"].is_number());
  j["schema_version"] = 99;
  EXPECT_THROW(model_from_json(j), SchemaError);
  const ForestModel unlimited = train_forest(d, small(3), 1);
  EXPECT_TRUE(to_json(unlimited)["hyperparams"]["max_depth"].is_null());
}

TEST(HyperGrid, HasOneHundredFortyFourPoints) {
  const HyperGrid g;
  EXPECT_EQ(g.size(), 144u);
  EXPECT_EQ(g.points().size(), 144u);
  const ForestParams def = default_forest_params();
  EXPECT_EQ(def.n_trees, 1000);
  EXPECT_FALSE(def.max_depth.has_value());
  EXPECT_EQ(def.min_samples_split, 2);
  EXPECT_EQ(def.min_samples_leaf, 1);
}

TEST(GridSearch, FoldsAreGroupDisjointAndStratified) {
  Dataset d = separable(200, 26);
  const auto fold = stratified_group_folds(d, 5, 27);
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < d.size(); ++j)
      if (d.groups[i] == d.groups[j]) {
        EXPECT_EQ(fold[i], fold[j]);
      }
  for (int f = 0; f < 5; ++f) {
    int pos = 0, neg = 0;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (fold[i] == f) (d.labels[i] ? pos : neg)++;
    EXPECT_GE(pos, 15);
    EXPECT_GE(neg, 15);
  }
}

TEST(GridSearch, SeparableDataScoresHighAndTiesPreferSmallerForests) {
  HyperGrid g;
  g.n_trees = {10, 20};
  g.max_depth = {std::nullopt, 2};
  g.min_samples_split = {2};
  g.min_samples_leaf = {1};
  const GridSearchResult r = grid_search_cv(separable(100, 28), g, 5, 29);
  EXPECT_EQ(r.table.size(), 4u);
  for (const auto& e : r.table) {
    if (!e.params.max_depth) {
      EXPECT_GE(e.mean_accuracy, 0.99);
    }
  }
  EXPECT_EQ(r.best.n_trees, 10);
  EXPECT_EQ(r.best.max_depth, std::optional<int>(2));
}

TEST(FeatureTable, CsvRoundTripWithMissing) {
  FeatureRow row;
  row.pair_id = "p1";
  row.q_shoe_id = "s1";
  row.k_shoe_id = "s2";
  row.scenario = Scenario::Blurry06;
  row.label = 1;
  for (std::size_t i = 0; i < kFeatureCount; ++i) row.features.values[i] = 0.1 * static_cast<double>(i) + 1e-7;
  row.features.mark_missing("PSR");
  std::stringstream ss;
  write_feature_csv(ss, {row, row});
  const auto back = read_feature_csv(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].features.values, row.features.values);
  EXPECT_TRUE(back[0].features.is_missing("PSR"));
  EXPECT_EQ(back[0].scenario, Scenario::Blurry06);
  EXPECT_EQ(back[1].label, 1);

  const Dataset d = to_dataset(back, true);
  EXPECT_EQ(d.width(), 38u);
  EXPECT_TRUE(std::isnan(d.rows[0][*feature_index("PSR")]));
  EXPECT_EQ(d.rows[0][35], 0.0);
  EXPECT_EQ(d.rows[0][36], 1.0);
  EXPECT_EQ(d.rows[0][37], 0.0);
}
