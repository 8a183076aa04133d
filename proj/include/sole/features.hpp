#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sole/clustersim.hpp"
#include "sole/errors.hpp"
#include "sole/icp.hpp"
#include "sole/image.hpp"
#include "sole/imagemetrics.hpp"
#include "sole/kdtree.hpp"
#include "sole/pointcloud.hpp"
#include "sole/simfeatures.hpp"

namespace sole {

inline constexpr std::size_t kFeatureCount = 35;

/// Feature column names, in model order.
inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "q_points_count",
    "k_points_count",
    "mean",
    "std",
    "0.1",
    "0.25",
    "0.5",
    "0.75",
    "0.9",
    "centroid_distance_n_clusters_20",
    "cluster_proportion_n_clusters_20",
    "iterations_k_n_clusters_20",
    "wcv_ratio_n_clusters_20",
    "centroid_distance_n_clusters_100",
    "cluster_proportion_n_clusters_100",
    "iterations_k_n_clusters_100",
    "wcv_ratio_n_clusters_100",
    "q_pct_threshold_1",
    "k_pct_threshold_1",
    "q_pct_threshold_2",
    "k_pct_threshold_2",
    "q_pct_threshold_3",
    "k_pct_threshold_3",
    "q_pct_threshold_5",
    "k_pct_threshold_5",
    "q_pct_threshold_10",
    "k_pct_threshold_10",
    "peak_value",
    "MSE",
    "SSIM",
    "NCC",
    "PSR",
    "jaccard_index_0",
    "jaccard_index_-1",
    "jaccard_index_-2",
};

inline std::optional<std::size_t> feature_index(std::string_view name) {
  for (std::size_t i = 0; i < kFeatureNames.size(); ++i)
    if (kFeatureNames[i] == name) return i;
  return std::nullopt;
}

/// The 35 similarity features of one (Q, K) pair plus a missing-value mask
/// for metrics that were undefined on this pair.
struct FeatureVector {
  std::array<double, kFeatureCount> values{};
  std::array<bool, kFeatureCount> missing{};

  void set(std::string_view name, double v) {
    const auto i = feature_index(name);
    if (!i) throw SchemaError("unknown feature " + std::string(name));
    values[*i] = v;
    missing[*i] = false;
  }
  void set(std::string_view name, std::optional<double> v) {
    if (v) return set(name, *v);
    mark_missing(name);
  }
  void mark_missing(std::string_view name) {
    const auto i = feature_index(name);
    if (!i) throw SchemaError("unknown feature " + std::string(name));
    values[*i] = 0.0;
    missing[*i] = true;
  }
  double get(std::string_view name) const {
    const auto i = feature_index(name);
    if (!i) throw SchemaError("unknown feature " + std::string(name));
    return values[*i];
  }
  bool is_missing(std::string_view name) const {
    const auto i = feature_index(name);
    return i && missing[*i];
  }
  bool any_missing() const {
    for (bool m : missing)
      if (m) return true;
    return false;
  }
};

/// Settings for turning an image pair into features.
struct PipelineConfig {
  int darkness_threshold = kDefaultDarknessThreshold;
  int binarize_threshold = kBinarizeThreshold;
  bool toe_up = true;
  IcpConfig icp;
};

struct PartialSpec {
  Region region = Region::Toe;
  Foot foot = Foot::Left;
};

/// A pair ready for featurization. K is reflected (Pristine-150 style
/// non-mates) and Q is cut (partial scenarios) inside the pipeline so that
/// the point clouds and the binarized images stay consistent.
struct PairImages {
  GrayImage q;
  GrayImage k;
  std::optional<PartialSpec> partial;
  bool reflect_k = false;
};

struct PreparedPair {
  PointCloud q_cloud, k_cloud;
  BinaryImage jq, jk;
};

inline PreparedPair prepare_pair(const PairImages& pair, const PipelineConfig& cfg) {
  PreparedPair p;
  p.q_cloud = extract_points(edge_detect(pair.q), cfg.darkness_threshold);
  p.k_cloud = extract_points(edge_detect(pair.k), cfg.darkness_threshold);
  p.jq = binarize(pair.q, cfg.binarize_threshold);
  p.jk = binarize(pair.k, cfg.binarize_threshold);
  if (p.q_cloud.empty()) throw EmptyCloudError("no edge points extracted from Q");
  if (p.k_cloud.empty()) throw EmptyCloudError("no edge points extracted from K");
  if (pair.reflect_k) {
    const Bounds b = bounds(p.k_cloud);
    p.k_cloud = reflect(p.k_cloud);
    p.jk = mirror_columns(p.jk, static_cast<int>(std::lround(b.min_x + b.max_x)), 1);
  }
  if (pair.partial) {
    const CutPlan plan = plan_cut(p.q_cloud, pair.partial->region, pair.partial->foot, cfg.toe_up);
    p.q_cloud = apply_cut(p.q_cloud, plan);
    p.jq = mask_cut(p.jq, plan);
  }
  return p;
}

/// Features of an already aligned pair.
inline FeatureVector compute_features(const PointCloud& q, const PointCloud& k_star, const BinaryImage& jq,
                                      const BinaryImage& jk, const RigidTransform& k_to_q,
                                      std::uint64_t seed = 0) {
  if (q.empty() || k_star.empty()) throw EmptyCloudError("features need two nonempty clouds");
  FeatureVector fv;
  fv.set("q_points_count", static_cast<double>(q.size()));
  fv.set("k_points_count", static_cast<double>(k_star.size()));

  const NeighborIndex q_index(q), k_index(k_star);
  const MinDistStats md = min_dist_stats(q, k_index);
  fv.set("mean", md.mean);
  fv.set("std", md.std);
  fv.set("0.1", md.p10);
  fv.set("0.25", md.p25);
  fv.set("0.5", md.p50);
  fv.set("0.75", md.p75);
  fv.set("0.9", md.p90);

  const auto clusters = cluster_metrics_all(q, k_star, seed);
  for (std::size_t i = 0; i < kClusterCounts.size(); ++i) {
    const std::string suffix = "_n_clusters_" + std::to_string(kClusterCounts[i]);
    if (!clusters[i]) {
      for (const char* stem : {"centroid_distance", "cluster_proportion", "iterations_k", "wcv_ratio"})
        fv.mark_missing(stem + suffix);
      continue;
    }
    const ClusterMetrics& cm = *clusters[i];
    fv.set("centroid_distance" + suffix, cm.cdm);
    fv.set("cluster_proportion" + suffix, cm.cpm);
    fv.set("iterations_k" + suffix, static_cast<double>(cm.im));
    if (cm.twrm_defined) fv.set("wcv_ratio" + suffix, cm.twrm);
    else fv.mark_missing("wcv_ratio" + suffix);
  }

  const OverlapReport ov = overlap_report(q, q_index, k_star, k_index);
  for (std::size_t i = 0; i < kOverlapRadii.size(); ++i) {
    const std::string d = std::to_string(kOverlapRadii[i]);
    fv.set("q_pct_threshold_" + d, ov.q_pct[i]);
    fv.set("k_pct_threshold_" + d, ov.k_pct[i]);
  }

  const int w = std::max(jq.width(), jk.width());
  const int h = std::max(jq.height(), jk.height());
  const BinaryImage jq_padded = pad_to(jq, w, h);
  const BinaryImage jk_aligned = rasterize_aligned(jk, k_to_q, w, h);
  const ImageMetricReport im = image_metrics(jq_padded, jk_aligned);
  fv.set("peak_value", im.peak_value);
  fv.set("MSE", im.mse);
  fv.set("SSIM", im.ssim);
  fv.set("NCC", im.ncc);
  fv.set("PSR", im.psr);

  fv.set("jaccard_index_0", jaccard(q, k_star, 0));
  fv.set("jaccard_index_-1", jaccard(q, k_star, 1));
  fv.set("jaccard_index_-2", jaccard(q, k_star, 2));
  return fv;
}

struct PairResult {
  PointCloud q_cloud;
  PointCloud k_cloud;
  PointCloud k_star;
  AlignmentResult alignment;
  FeatureVector features;
};

/// Full pipeline: edge points -> alignment -> features.
inline PairResult featurize(const PairImages& pair, const PipelineConfig& cfg) {
  PreparedPair p = prepare_pair(pair, cfg);
  PairResult out;
  out.alignment = align(p.q_cloud, p.k_cloud, cfg.icp);
  out.k_star = apply(out.alignment.transform, p.k_cloud);
  out.features = compute_features(p.q_cloud, out.k_star, p.jq, p.jk, out.alignment.transform, cfg.icp.seed);
  out.q_cloud = std::move(p.q_cloud);
  out.k_cloud = std::move(p.k_cloud);
  return out;
}

}  // namespace sole
