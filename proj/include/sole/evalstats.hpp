#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "sole/errors.hpp"
#include "sole/forest.hpp"
#include "sole/util.hpp"

namespace sole {

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

inline Confusion confusion_at(const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (labels[i]) pred ? ++c.tp : ++c.fn;
    else pred ? ++c.fp : ++c.tn;
  }
  return c;
}

/// Area under the ROC curve via the rank-sum statistic; tied scores count as
/// half-concordant. Undefined unless both classes are present.
inline std::optional<double> roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw SchemaError("scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0, n_pos = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t)
      if (labels[order[t]]) rank_sum += avg_rank, n_pos += 1.0;
    i = j;
  }
  const double n_neg = static_cast<double>(n) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) return std::nullopt;
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

struct YoudenPoint {
  double threshold = 0.5;
  double sensitivity = 0.0;
  double specificity = 0.0;
};

/// Threshold among the observed scores maximizing sensitivity + specificity;
/// ties go to the highest threshold.
inline std::optional<YoudenPoint> youden_optimum(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::vector<double> cands = scores;
  std::sort(cands.begin(), cands.end());
  cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
  const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double neg = static_cast<double>(labels.size()) - pos;
  if (pos == 0.0 || neg == 0.0) return std::nullopt;
  std::optional<YoudenPoint> best;
  double best_j = -std::numeric_limits<double>::infinity();
  for (auto it = cands.rbegin(); it != cands.rend(); ++it) {
    const Confusion c = confusion_at(scores, labels, *it);
    const double sens = static_cast<double>(c.tp) / pos, spec = static_cast<double>(c.tn) / neg;
    if (sens + spec - 1.0 > best_j) {
      best_j = sens + spec - 1.0;
      best = YoudenPoint{*it, sens, spec};
    }
  }
  return best;
}

struct EvalReport {
  std::size_t n = 0;
  std::size_t positives = 0;
  double accuracy = 0.0;  // at the 0.5 decision threshold
  Confusion confusion;    // at the 0.5 decision threshold
  std::optional<double> auc;
  std::optional<double> optimal_threshold;
  std::optional<double> sensitivity;  // at the optimal threshold
  std::optional<double> specificity;
};

/// Accuracy at 0.5, AUC and the Youden operating point. With a single class
/// present only the accuracy fields are filled.
inline EvalReport evaluate_scores(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.empty()) throw SchemaError("cannot evaluate an empty test set");
  if (scores.size() != labels.size()) throw SchemaError("scores and labels differ in length");
  EvalReport r;
  r.n = scores.size();
  r.positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  r.confusion = confusion_at(scores, labels, kDecisionThreshold);
  r.accuracy = static_cast<double>(r.confusion.tp + r.confusion.tn) / static_cast<double>(r.n);
  r.auc = roc_auc(scores, labels);
  if (const auto y = youden_optimum(scores, labels)) {
    r.optimal_threshold = y->threshold;
    r.sensitivity = y->sensitivity;
    r.specificity = y->specificity;
  }
  return r;
}

inline EvalReport evaluate(const ForestModel& model, const Dataset& test) {
  return evaluate_scores(model.predict(test), test.labels);
}

// ---------------------------------------------------------------------------
// Earth Mover's Distance
// ---------------------------------------------------------------------------

/// 1D Wasserstein-1 distance between two empirical distributions. Equal sizes
/// match sorted samples; otherwise the CDF difference is integrated exactly.
inline double emd_raw(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw SchemaError("EMD needs two nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() == b.size()) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
  }
  std::vector<double> xs = a;
  xs.insert(xs.end(), b.begin(), b.end());
  std::sort(xs.begin(), xs.end());
  const auto na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  double total = 0.0;
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    while (ia < a.size() && a[ia] <= xs[i]) ++ia;
    while (ib < b.size() && b[ib] <= xs[i]) ++ib;
    total += std::abs(static_cast<double>(ia) / na - static_cast<double>(ib) / nb) * (xs[i + 1] - xs[i]);
  }
  return total;
}

/// EMD after standardizing both samples by the mean and population standard
/// deviation of their union. Zero combined spread gives 0.
inline double emd_shift(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw SchemaError("EMD needs two nonempty samples");
  double sum = 0.0;
  for (double v : a) sum += v;
  for (double v : b) sum += v;
  const double n = static_cast<double>(a.size() + b.size());
  const double mean = sum / n;
  double ss = 0.0;
  for (double v : a) ss += (v - mean) * (v - mean);
  for (double v : b) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);
  if (sd == 0.0) return 0.0;
  for (double& v : a) v = (v - mean) / sd;
  for (double& v : b) v = (v - mean) / sd;
  return emd_raw(std::move(a), std::move(b));
}

// ---------------------------------------------------------------------------
// Density summaries
// ---------------------------------------------------------------------------

struct Histogram {
  std::vector<double> edges;  // bins + 1 entries
  std::vector<std::size_t> counts;
};

inline Histogram histogram(const std::vector<double>& samples, int bins, double lo, double hi) {
  if (bins < 1) throw ConfigError("histogram needs at least one bin");
  Histogram h;
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  for (int i = 0; i <= bins; ++i) h.edges.push_back(lo + (hi - lo) * i / bins);
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (double v : samples) {
    if (v < lo || v > hi) continue;
    auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * bins);
    if (b >= h.counts.size()) b = h.counts.size() - 1;
    ++h.counts[b];
  }
  return h;
}

/// Silverman's rule: 0.9 * min(sd, IQR / 1.34) * n^(-1/5), falling back to
/// whichever spread measure is positive, then to 1e-3 * max(1, |mean|).
inline double silverman_bandwidth(const std::vector<double>& samples) {
  if (samples.empty()) throw SchemaError("bandwidth of an empty sample");
  const auto n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : samples) ss += (v - mean) * (v - mean);
  const double sd = samples.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  const double iqr = quantile(samples, 0.75) - quantile(samples, 0.25);
  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) spread = std::max(sd, iqr / 1.34);
  if (!(spread > 0.0)) return 1e-3 * std::max(1.0, std::abs(mean));
  return 0.9 * spread * std::pow(n, -0.2);
}

struct DensityCurve {
  std::vector<double> x, y;
  double bandwidth = 0.0;
};

/// Gaussian KDE sampled on `points` evenly spaced abscissae spanning the data
/// +/- 3 bandwidths, clipped to [lo, hi], renormalized so the trapezoid
/// integral over the sampled range is 1.
inline DensityCurve gaussian_kde(const std::vector<double>& samples, int points,
                                 double lo = -std::numeric_limits<double>::infinity(),
                                 double hi = std::numeric_limits<double>::infinity()) {
  if (points < 2) throw ConfigError("KDE needs at least two sample points");
  DensityCurve c;
  c.bandwidth = silverman_bandwidth(samples);
  const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
  double a = std::max(lo, *mn - 3.0 * c.bandwidth), b = std::min(hi, *mx + 3.0 * c.bandwidth);
  if (!(b > a)) b = a + c.bandwidth;
  const double norm = 1.0 / (static_cast<double>(samples.size()) * c.bandwidth * std::sqrt(2.0 * M_PI));
  for (int i = 0; i < points; ++i) {
    const double x = a + (b - a) * i / (points - 1);
    double s = 0.0;
    for (double v : samples) {
      const double z = (x - v) / c.bandwidth;
      s += std::exp(-0.5 * z * z);
    }
    c.x.push_back(x);
    c.y.push_back(s * norm);
  }
  double area = 0.0;
  for (std::size_t i = 1; i < c.x.size(); ++i) area += (c.x[i] - c.x[i - 1]) * (c.y[i] + c.y[i - 1]) / 2.0;
  if (area > 0.0)
    for (double& v : c.y) v /= area;
  return c;
}

inline double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
  double area = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) area += (x[i] - x[i - 1]) * (y[i] + y[i - 1]) / 2.0;
  return area;
}

}  // namespace sole
