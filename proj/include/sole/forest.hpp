#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "sole/errors.hpp"
#include "sole/util.hpp"

namespace sole {

/// Labelled feature matrix. Missing entries are NaN.
struct Dataset {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;          // 1 mated, 0 non-mated
  std::vector<std::string> groups;  // shoe identity used to keep CV folds disjoint

  std::size_t size() const noexcept { return rows.size(); }
  std::size_t width() const noexcept { return columns.size(); }

  void validate() const {
    if (rows.size() != labels.size()) throw SchemaError("dataset rows and labels differ in length");
    if (!groups.empty() && groups.size() != rows.size()) throw SchemaError("dataset groups differ in length");
    for (const auto& r : rows)
      if (r.size() != columns.size()) throw SchemaError("dataset row width does not match its columns");
    for (int y : labels)
      if (y != 0 && y != 1) throw SchemaError("labels must be 0 or 1");
    for (const auto& r : rows)
      for (double v : r)
        if (std::isinf(v)) throw SchemaError("dataset contains an infinite value");
  }

  Dataset subset(const std::vector<std::size_t>& idx) const {
    Dataset out;
    out.columns = columns;
    for (std::size_t i : idx) {
      out.rows.push_back(rows[i]);
      out.labels.push_back(labels[i]);
      if (!groups.empty()) out.groups.push_back(groups[i]);
    }
    return out;
  }
};

struct ForestParams {
  int n_trees = 1000;
  std::optional<int> max_depth;  // empty = grow until pure or constrained
  int min_samples_split = 2;
  int min_samples_leaf = 1;
  int max_features = 0;  // 0 = ceil(sqrt(width))
  bool bootstrap = true;  // false: every tree sees each row once

  void validate() const {
    if (n_trees < 1) throw ConfigError("n_trees must be >= 1");
    if (max_depth && *max_depth < 1) throw ConfigError("max_depth must be >= 1");
    if (min_samples_split < 2) throw ConfigError("min_samples_split must be >= 2");
    if (min_samples_leaf < 1) throw ConfigError("min_samples_leaf must be >= 1");
    if (max_features < 0) throw ConfigError("max_features must be >= 0");
  }

  friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

inline int features_per_split(const ForestParams& p, std::size_t width) {
  if (p.max_features > 0) return std::min<int>(p.max_features, static_cast<int>(width));
  return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(width))));
}

/// Flat binary tree; node 0 is the root. Leaves have feature == -1.
struct Tree {
  std::vector<int> feature;
  std::vector<double> threshold;
  std::vector<int> left, right;
  std::vector<double> value;  // mated fraction of the training samples reaching the node

  std::size_t node_count() const noexcept { return feature.size(); }

  double predict(const std::vector<double>& x) const {
    int node = 0;
    while (feature[node] >= 0) node = x[feature[node]] <= threshold[node] ? left[node] : right[node];
    return value[node];
  }

  int add_node(double v) {
    feature.push_back(-1);
    threshold.push_back(0.0);
    left.push_back(-1);
    right.push_back(-1);
    value.push_back(v);
    return static_cast<int>(feature.size() - 1);
  }
};

struct ForestModel {
  static constexpr int kSchemaVersion = 1;

  std::vector<std::string> columns;
  ForestParams params;
  std::uint64_t seed = 0;
  bool indicator_columns = false;
  std::vector<double> medians;
  std::vector<Tree> trees;
  std::vector<double> importances;
  std::optional<double> oob_score;

  bool trained() const noexcept { return !trees.empty(); }

  void check_columns(const std::vector<std::string>& cols) const {
    if (cols != columns) throw SchemaError("feature columns do not match the model's training columns");
  }

  /// Replaces NaN entries with the stored training medians.
  std::vector<double> impute(std::vector<double> x) const {
    if (medians.empty()) throw StateError("imputer has not been fitted");
    if (x.size() != medians.size()) throw SchemaError("feature vector width does not match the model");
    for (std::size_t j = 0; j < x.size(); ++j)
      if (std::isnan(x[j])) x[j] = medians[j];
    return x;
  }

  double predict(const std::vector<double>& raw) const {
    if (!trained()) throw StateError("model has not been trained");
    const std::vector<double> x = impute(raw);
    double sum = 0.0;
    for (const Tree& t : trees) sum += t.predict(x);
    return sum / static_cast<double>(trees.size());
  }

  std::vector<double> predict(const Dataset& data) const {
    check_columns(data.columns);
    std::vector<double> out;
    out.reserve(data.size());
    for (const auto& row : data.rows) out.push_back(predict(row));
    return out;
  }
};

inline constexpr double kDecisionThreshold = 0.5;

inline int classify(double posterior, double threshold = kDecisionThreshold) {
  return posterior >= threshold ? 1 : 0;
}

/// Column medians ignoring NaN. A column with no observed values gets 0 and a
/// warning on stderr.
inline std::vector<double> column_medians(const Dataset& data) {
  std::vector<double> med(data.width(), 0.0);
  for (std::size_t j = 0; j < data.width(); ++j) {
    std::vector<double> col;
    for (const auto& r : data.rows)
      if (!std::isnan(r[j])) col.push_back(r[j]);
    if (col.empty()) {
      std::cerr << "warning: column " << data.columns[j] << " has no observed values; median set to 0\n";
      continue;
    }
    med[j] = median(std::move(col));
  }
  return med;
}

namespace detail {

inline double gini(double pos, double total) {
  if (total <= 0.0) return 0.0;
  const double p = pos / total;
  return 2.0 * p * (1.0 - p);
}

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<std::vector<double>>& x, const std::vector<int>& y, const ForestParams& params,
              int mtry, std::uint64_t seed)
      : x_(x), y_(y), params_(params), mtry_(mtry), rng_(seed), importance_(x.empty() ? 0 : x[0].size(), 0.0) {}

  Tree build(std::vector<std::size_t> samples) {
    total_ = static_cast<double>(samples.size());
    grow(samples, 0);
    return std::move(tree_);
  }

  const std::vector<double>& importance() const { return importance_; }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double child_impurity = std::numeric_limits<double>::infinity();  // weighted sum
  };

  int grow(std::vector<std::size_t>& samples, int depth) {
    const auto n = static_cast<double>(samples.size());
    double pos = 0.0;
    for (std::size_t i : samples) pos += y_[i];
    const int node = tree_.add_node(pos / n);
    const double impurity = gini(pos, n);
    if (impurity == 0.0) return node;
    if (params_.max_depth && depth >= *params_.max_depth) return node;
    if (samples.size() < static_cast<std::size_t>(params_.min_samples_split)) return node;
    if (samples.size() < 2 * static_cast<std::size_t>(params_.min_samples_leaf)) return node;

    const Split best = find_split(samples);
    if (best.feature < 0) return node;

    importance_[best.feature] += (n * impurity - best.child_impurity) / total_;
    std::vector<std::size_t> lo, hi;
    for (std::size_t i : samples) (x_[i][best.feature] <= best.threshold ? lo : hi).push_back(i);
    samples.clear();
    samples.shrink_to_fit();
    tree_.feature[node] = best.feature;
    tree_.threshold[node] = best.threshold;
    const int l = grow(lo, depth + 1);
    tree_.left[node] = l;
    const int r = grow(hi, depth + 1);
    tree_.right[node] = r;
    return node;
  }

  /// Draws features without replacement until mtry non-constant ones have been
  /// examined (or all features are exhausted).
  Split find_split(const std::vector<std::size_t>& samples) {
    const std::size_t p = importance_.size();
    std::vector<std::size_t> order(p);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Split best;
    int informative = 0;
    std::vector<std::pair<double, int>> col(samples.size());
    for (std::size_t drawn = 0; drawn < p && informative < mtry_; ++drawn) {
      const std::size_t pick = drawn + rng_.index(p - drawn);
      std::swap(order[drawn], order[pick]);
      const std::size_t f = order[drawn];
      for (std::size_t s = 0; s < samples.size(); ++s) col[s] = {x_[samples[s]][f], y_[samples[s]]};
      std::sort(col.begin(), col.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      if (col.front().first == col.back().first) continue;
      ++informative;
      evaluate_feature(col, static_cast<int>(f), best);
    }
    return best;
  }

  void evaluate_feature(const std::vector<std::pair<double, int>>& col, int f, Split& best) const {
    const std::size_t n = col.size();
    const auto min_leaf = static_cast<std::size_t>(params_.min_samples_leaf);
    double total_pos = 0.0;
    for (const auto& e : col) total_pos += e.second;
    double left_pos = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      left_pos += col[i].second;
      if (col[i].first == col[i + 1].first) continue;
      const std::size_t nl = i + 1, nr = n - nl;
      if (nl < min_leaf || nr < min_leaf) continue;
      const double dl = static_cast<double>(nl), dr = static_cast<double>(nr);
      const double child = dl * gini(left_pos, dl) + dr * gini(total_pos - left_pos, dr);
      if (child < best.child_impurity) {
        best.child_impurity = child;
        best.feature = f;
        double mid = col[i].first + (col[i + 1].first - col[i].first) / 2.0;
        if (mid >= col[i + 1].first) mid = col[i].first;
        best.threshold = mid;
      }
    }
  }

  const std::vector<std::vector<double>>& x_;
  const std::vector<int>& y_;
  const ForestParams& params_;
  int mtry_;
  Rng rng_;
  Tree tree_;
  std::vector<double> importance_;
  double total_ = 1.0;
};

}  // namespace detail

/// Random forest: bootstrap of n rows per tree, Gini splits over a random
/// subset of ceil(sqrt(p)) features, leaf value = mated fraction. Tree t draws
/// from its own stream derive_seed(seed, t), so the result does not depend on
/// the thread count.
inline ForestModel train_forest(const Dataset& data, const ForestParams& params, std::uint64_t seed,
                                unsigned threads = 1) {
  params.validate();
  data.validate();
  if (data.size() == 0) throw DegenerateLabelsError("cannot train on an empty dataset");
  if (data.width() == 0) throw SchemaError("dataset has no feature columns");
  const auto positives = std::count(data.labels.begin(), data.labels.end(), 1);
  if (positives == 0 || static_cast<std::size_t>(positives) == data.size())
    throw DegenerateLabelsError("training data contains a single class");

  ForestModel model;
  model.columns = data.columns;
  model.params = params;
  model.seed = seed;
  model.medians = column_medians(data);
  std::vector<std::vector<double>> x;
  x.reserve(data.size());
  for (const auto& r : data.rows) x.push_back(model.impute(r));

  const std::size_t n = data.size(), p = data.width();
  const int mtry = features_per_split(params, p);
  const auto n_trees = static_cast<std::size_t>(params.n_trees);
  std::vector<Tree> trees(n_trees);
  std::vector<std::vector<double>> tree_importance(n_trees);
  std::vector<std::vector<char>> in_bag(n_trees);

  parallel_for(
      n_trees,
      [&](std::size_t t) {
        Rng boot(derive_seed(seed, 2 * t));
        std::vector<std::size_t> sample(n);
        in_bag[t].assign(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
          sample[i] = params.bootstrap ? boot.index(n) : i;
          in_bag[t][sample[i]] = 1;
        }
        detail::TreeBuilder builder(x, data.labels, params, mtry, derive_seed(seed, 2 * t + 1));
        trees[t] = builder.build(std::move(sample));
        tree_importance[t] = builder.importance();
      },
      threads);

  model.importances.assign(p, 0.0);
  for (const auto& imp : tree_importance) {
    const double s = std::accumulate(imp.begin(), imp.end(), 0.0);
    if (s <= 0.0) continue;
    for (std::size_t j = 0; j < p; ++j) model.importances[j] += imp[j] / s;
  }
  const double total = std::accumulate(model.importances.begin(), model.importances.end(), 0.0);
  if (total > 0.0)
    for (double& v : model.importances) v /= total;

  std::size_t scored = 0, correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    std::size_t votes = 0;
    for (std::size_t t = 0; t < n_trees; ++t)
      if (!in_bag[t][i]) {
        sum += trees[t].predict(x[i]);
        ++votes;
      }
    if (votes == 0) continue;
    ++scored;
    correct += classify(sum / static_cast<double>(votes)) == data.labels[i];
  }
  if (scored > 0) model.oob_score = static_cast<double>(correct) / static_cast<double>(scored);
  model.trees = std::move(trees);
  return model;
}

/// Importances paired with column names.
inline std::vector<std::pair<std::string, double>> named_importances(const ForestModel& model) {
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t j = 0; j < model.columns.size(); ++j) out.emplace_back(model.columns[j], model.importances[j]);
  return out;
}

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

struct HyperGrid {
  std::vector<int> n_trees = {500, 1000, 2000, 5000};
  std::vector<std::optional<int>> max_depth = {10, 30, 50, std::nullopt};
  std::vector<int> min_samples_split = {2, 5, 10};
  std::vector<int> min_samples_leaf = {1, 2, 4};

  std::size_t size() const {
    return n_trees.size() * max_depth.size() * min_samples_split.size() * min_samples_leaf.size();
  }

  /// Grid points in enumeration order (trees outermost, leaf innermost).
  std::vector<ForestParams> points() const {
    std::vector<ForestParams> out;
    for (int t : n_trees)
      for (const auto& d : max_depth)
        for (int s : min_samples_split)
          for (int l : min_samples_leaf) {
            ForestParams p;
            p.n_trees = t;
            p.max_depth = d;
            p.min_samples_split = s;
            p.min_samples_leaf = l;
            out.push_back(p);
          }
    return out;
  }
};

/// The configuration selected on the reference data set: 1000 trees,
/// unlimited depth, min split 2, min leaf 1.
inline ForestParams default_forest_params() { return ForestParams{}; }

/// Stratified group k-fold assignment. Groups are shuffled with the seed,
/// ordered by size (largest first) and each is placed in the fold that keeps
/// per-class counts most even. Returns the fold of every row.
inline std::vector<int> stratified_group_folds(const Dataset& data, int folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  const std::size_t n = data.size();
  std::vector<std::string> groups = data.groups;
  if (groups.empty())
    for (std::size_t i = 0; i < n; ++i) groups.push_back("row" + std::to_string(i));

  std::vector<std::string> names = groups;
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  if (names.size() < static_cast<std::size_t>(folds))
    throw ConfigError("cross-validation needs at least as many groups as folds");
  auto group_of = [&](std::size_t i) {
    return static_cast<std::size_t>(std::lower_bound(names.begin(), names.end(), groups[i]) - names.begin());
  };
  std::vector<std::array<double, 2>> counts(names.size(), {0.0, 0.0});
  for (std::size_t i = 0; i < n; ++i) counts[group_of(i)][data.labels[i]] += 1.0;

  std::vector<std::size_t> order(names.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return counts[a][0] + counts[a][1] > counts[b][0] + counts[b][1];
  });

  std::vector<std::array<double, 2>> fold_counts(static_cast<std::size_t>(folds), {0.0, 0.0});
  std::vector<int> group_fold(names.size(), 0);
  for (std::size_t g : order) {
    int best = 0;
    double best_cost = std::numeric_limits<double>::infinity();
    for (int f = 0; f < folds; ++f) {
      double cost = 0.0;
      for (int f2 = 0; f2 < folds; ++f2)
        for (int c = 0; c < 2; ++c) {
          const double v = fold_counts[f2][c] + (f2 == f ? counts[g][c] : 0.0);
          cost += v * v;
        }
      if (cost < best_cost) best_cost = cost, best = f;
    }
    group_fold[g] = best;
    fold_counts[best][0] += counts[g][0];
    fold_counts[best][1] += counts[g][1];
  }
  std::vector<int> fold(n);
  for (std::size_t i = 0; i < n; ++i) fold[i] = group_fold[group_of(i)];
  return fold;
}

struct CvEntry {
  ForestParams params;
  std::vector<double> fold_accuracy;
  double mean_accuracy = 0.0;
};

struct GridSearchResult {
  ForestParams best;
  double best_accuracy = 0.0;
  std::vector<CvEntry> table;
};

/// Mean-accuracy grid search under stratified group k-fold CV. Ties prefer
/// fewer trees, then shallower depth (unlimited counts as deepest), then
/// enumeration order.
inline GridSearchResult grid_search_cv(const Dataset& data, const HyperGrid& grid, int folds, std::uint64_t seed,
                                       unsigned threads = 1) {
  const std::vector<int> fold = stratified_group_folds(data, folds, seed);
  std::vector<Dataset> train(folds), test(folds);
  for (int f = 0; f < folds; ++f) {
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < data.size(); ++i) (fold[i] == f ? te : tr).push_back(i);
    train[f] = data.subset(tr);
    test[f] = data.subset(te);
  }
  GridSearchResult out;
  const auto points = grid.points();
  for (std::size_t gi = 0; gi < points.size(); ++gi) {
    CvEntry e;
    e.params = points[gi];
    for (int f = 0; f < folds; ++f) {
      const ForestModel m = train_forest(train[f], e.params, derive_seed(seed, gi * 1000 + f), threads);
      const auto post = m.predict(test[f]);
      std::size_t ok = 0;
      for (std::size_t i = 0; i < post.size(); ++i) ok += classify(post[i]) == test[f].labels[i];
      e.fold_accuracy.push_back(post.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(post.size()));
    }
    e.mean_accuracy = std::accumulate(e.fold_accuracy.begin(), e.fold_accuracy.end(), 0.0) / folds;
    out.table.push_back(std::move(e));
  }
  auto depth_rank = [](const std::optional<int>& d) { return d ? *d : std::numeric_limits<int>::max(); };
  std::size_t best = 0;
  for (std::size_t i = 1; i < out.table.size(); ++i) {
    const auto& a = out.table[i];
    const auto& b = out.table[best];
    if (a.mean_accuracy > b.mean_accuracy ||
        (a.mean_accuracy == b.mean_accuracy &&
         (a.params.n_trees < b.params.n_trees ||
          (a.params.n_trees == b.params.n_trees && depth_rank(a.params.max_depth) < depth_rank(b.params.max_depth)))))
      best = i;
  }
  out.best = out.table[best].params;
  out.best_accuracy = out.table[best].mean_accuracy;
  return out;
}

}  // namespace sole
