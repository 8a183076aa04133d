// Acceptance suite: one PASS/FAIL line per headline requirement, followed by
// indented measurements. Exit status is nonzero when any line fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "../support.hpp"
#include "sole/clustersim.hpp"
#include "sole/evalkit.hpp"
#include "sole/evalstats.hpp"
#include "sole/features.hpp"
#include "sole/forest.hpp"
#include "sole/icp.hpp"
#include "sole/imagemetrics.hpp"
#include "sole/serialize.hpp"
#include "sole/simfeatures.hpp"
#include "sole/synthgen.hpp"

using namespace sole;
using sole::testing::median_nn;
using sole::testing::tread_cloud;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

struct Report {
  std::string name;
  bool ok = true;
  std::vector<std::string> details;

  void check(bool cond, const std::string& what) {
    if (!cond) ok = false;
    details.push_back(std::string(cond ? "ok   " : "MISS ") + what);
  }
  void note(const std::string& what) { details.push_back("     " + what); }

  ~Report() {
    std::cout << (ok ? "PASS " : "FAIL ") << name << '\n';
    for (const auto& d : details) std::cout << "    " << d << '\n';
    std::cout.flush();
    if (!ok) ++failures;
  }
};

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// ---------------------------------------------------------------------------

void icp_recovery() {
  Report r{"ICP recovery: >=95/100 random rigid perturbations end with median NN <= 1.0; align() at 2000 points <= 10 s"};
  Rng rng(2024);
  int good = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const PointCloud q = tread_cloud(500, 1000 + static_cast<std::uint64_t>(trial));
    const Bounds b = bounds(q);
    const double half_range = 0.5 * std::max(b.width(), b.height());
    const double theta = rng.uniform(-30.0, 30.0) * M_PI / 180.0;
    const double radius = half_range * std::sqrt(rng.uniform()), dir = rng.uniform(0.0, 2.0 * M_PI);
    const RigidTransform perturb{theta, radius * std::cos(dir), radius * std::sin(dir)};
    const PointCloud k = apply(perturb, sole::testing::jitter(q, 0.5, 5000 + static_cast<std::uint64_t>(trial)));
    IcpConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(trial);
    const AlignmentResult res = align(q, k, cfg);
    const double m = median_nn(apply(res.transform, k), q);
    worst = std::max(worst, m);
    good += m <= 1.0;
  }
  r.check(good >= 95, "recovered " + std::to_string(good) + "/100 (worst median NN " + fmt(worst) + ")");

  const PointCloud q = tread_cloud(2000, 77);
  const PointCloud k = apply(RigidTransform{0.3, 40.0, -25.0}, sole::testing::jitter(q, 0.5, 78));
  IcpConfig cfg;
  cfg.threads = 1;
  const auto t0 = Clock::now();
  const AlignmentResult res = align(q, k, cfg);
  const double secs = seconds_since(t0);
  r.check(res.candidates.size() == 50, std::to_string(res.candidates.size()) + " candidates evaluated");
  r.check(secs <= 10.0, "2000-point align on one thread took " + fmt(secs, 2) + " s");
}

// ---------------------------------------------------------------------------

double auc_by_pairs(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0, total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        total += 1.0;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / total;
}

double transport_lp(const std::vector<double>& a, const std::vector<double>& b) {
  // Uniform equal-size transport: the optimum is attained at a permutation.
  std::vector<std::size_t> perm(b.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) c += std::abs(a[i] - b[perm[i]]);
    best = std::min(best, c / static_cast<double>(a.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

void oracle_equivalence() {
  Report r{"Oracle equivalence: KD-tree, AUC, 1D EMD and min-dist statistics match brute-force oracles"};
  Rng rng(31);

  PointCloud pts;
  for (int i = 0; i < 200; ++i) pts.push_back({rng.uniform(-50, 50), rng.uniform(-50, 50)});
  const NeighborIndex idx(pts);
  int mismatches = 0;
  for (int qn = 0; qn < 1000; ++qn) {
    const Point q{rng.uniform(-60, 60), rng.uniform(-60, 60)};
    double best = std::numeric_limits<double>::infinity();
    for (const Point& p : pts) best = std::min(best, distance(q, p));
    mismatches += idx.nearest(q).distance != best;
  }
  r.check(mismatches == 0, "KD-tree nearest distance exact on 1000 queries x 200 points (" +
                               std::to_string(mismatches) + " mismatches)");

  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < 20; ++i) {
    scores.push_back(std::round(rng.uniform() * 10.0) / 10.0);
    labels.push_back(i % 2);
  }
  const double auc = *roc_auc(scores, labels), oracle = auc_by_pairs(scores, labels);
  r.check(auc == oracle, "AUC " + fmt(auc, 6) + " vs pair counting " + fmt(oracle, 6));

  double emd_err = 0.0;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> a(5), b(5);
    for (auto& v : a) v = rng.normal(0, 3);
    for (auto& v : b) v = rng.normal(1, 2);
    emd_err = std::max(emd_err, std::abs(emd_raw(a, b) - transport_lp(a, b)));
  }
  r.check(emd_err <= 1e-9, "EMD vs transport LP on 5-point samples, max |diff| " + std::to_string(emd_err));

  const PointCloud q = tread_cloud(400, 3), k = sole::testing::jitter(tread_cloud(350, 4), 1.0, 5);
  std::vector<double> brute;
  for (const Point& a : q) {
    double best = std::numeric_limits<double>::infinity();
    for (const Point& b : k) best = std::min(best, distance(a, b));
    brute.push_back(best);
  }
  std::sort(brute.begin(), brute.end());
  const double n = static_cast<double>(brute.size());
  const double mean = std::accumulate(brute.begin(), brute.end(), 0.0) / n;
  double ss = 0.0;
  for (double d : brute) ss += (d - mean) * (d - mean);
  auto pct = [&](double p) {  // linear interpolation between closest ranks
    const double pos = p * (n - 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, brute.size() - 1);
    return brute[lo] + (pos - static_cast<double>(lo)) * (brute[hi] - brute[lo]);
  };
  const MinDistStats fast = min_dist_stats(q, k);
  const double md_err = std::max({std::abs(fast.mean - mean), std::abs(fast.std - std::sqrt(ss / n)),
                                  std::abs(fast.p10 - pct(0.10)), std::abs(fast.p25 - pct(0.25)),
                                  std::abs(fast.p50 - pct(0.50)), std::abs(fast.p75 - pct(0.75)),
                                  std::abs(fast.p90 - pct(0.90))});
  r.check(md_err <= 1e-9, "min-dist statistics vs O(nm) scan, max |diff| " + std::to_string(md_err));
}

// ---------------------------------------------------------------------------

void formula_checks() {
  Report r{"Formula checks: 144-point grid, 35 feature columns, PV spike = 100, CPM example = 0.2, planted shifts"};
  r.check(HyperGrid{}.size() == 144 && HyperGrid{}.points().size() == 144,
          "hyperparameter grid has " + std::to_string(HyperGrid{}.points().size()) + " points");

  const std::vector<std::string> expected = {
      "q_points_count", "k_points_count", "mean", "std", "0.1", "0.25", "0.5", "0.75", "0.9",
      "centroid_distance_n_clusters_20", "cluster_proportion_n_clusters_20", "iterations_k_n_clusters_20",
      "wcv_ratio_n_clusters_20", "centroid_distance_n_clusters_100", "cluster_proportion_n_clusters_100",
      "iterations_k_n_clusters_100", "wcv_ratio_n_clusters_100", "q_pct_threshold_1", "k_pct_threshold_1",
      "q_pct_threshold_2", "k_pct_threshold_2", "q_pct_threshold_3", "k_pct_threshold_3", "q_pct_threshold_5",
      "k_pct_threshold_5", "q_pct_threshold_10", "k_pct_threshold_10", "peak_value", "MSE", "SSIM", "NCC", "PSR",
      "jaccard_index_0", "jaccard_index_-1", "jaccard_index_-2"};
  bool same = expected.size() == kFeatureCount;
  for (std::size_t i = 0; same && i < kFeatureCount; ++i) same = expected[i] == kFeatureNames[i];
  r.check(same, "feature vector columns: " + std::to_string(kFeatureCount) + " names in the expected order");

  PhaseCorrMap spike;
  spike.width = spike.height = 10;
  spike.r.assign(100, 0.0);
  spike.r[37] = 10.0;
  spike.peak = 10.0;
  spike.peak_row = 3;
  spike.peak_col = 7;
  const double pv = peak_value(spike);
  r.check(pv == 100.0, "PV on a 10x10 single-spike field = " + fmt(pv, 6));

  Rng rng(12);
  auto blob = [&](Point c, int n) {
    PointCloud out;
    for (int i = 0; i < n; ++i) out.push_back({c.x + rng.normal(0, 1.0), c.y + rng.normal(0, 1.0)});
    return out;
  };
  PointCloud q = blob({0, 0}, 60), k = blob({0, 0}, 40);
  for (const Point& p : blob({100, 0}, 40)) q.push_back(p);
  for (const Point& p : blob({100, 0}, 60)) k.push_back(p);
  const double cpm = cluster_metrics(q, k, 2).cpm;
  r.check(std::abs(cpm - 0.2) <= 1e-12, "CPM for 60/40 vs 40/60 two-cluster split = " + fmt(cpm, 12));

  int exact = 0, tried = 0;
  BinaryImage base(48, 40, 1);
  for (auto& v : base.pixels()) v = rng.uniform() < 0.3 ? 0 : 1;
  for (auto [dr, dc] : {std::pair{0, 0}, {3, 5}, {17, 2}, {39, 47}, {20, 24}, {1, 46}}) {
    BinaryImage shifted(48, 40);
    for (int row = 0; row < 40; ++row)
      for (int col = 0; col < 48; ++col) shifted((row + dr) % 40, (col + dc) % 48) = base(row, col);
    const PhaseCorrMap m = phase_correlation(base, shifted);
    ++tried;
    exact += m.peak_row == dr && m.peak_col == dc;
  }
  r.check(exact == tried, "phase-correlation peak at the planted circular shift in " + std::to_string(exact) + "/" +
                              std::to_string(tried) + " cases");
}

// ---------------------------------------------------------------------------

void identity_suite() {
  Report r{"Identity suite: self-pairs give similarity 1 and distance 0; IM = 1"};
  const SynthSpec spec;
  ShoeIdentity id;
  id.shoe_id = "S001";
  const GrayImage img = capture(spec, generate_shoe(spec, id), "S001", CaptureOptions{});
  const PointCloud cloud = extract_points(edge_detect(img));
  const BinaryImage bin = binarize(img);
  const FeatureVector fv = compute_features(cloud, cloud, bin, bin, RigidTransform{}, 1);
  auto v = [&](const char* name) { return fv.get(name); };
  for (const char* n : {"q_pct_threshold_1", "k_pct_threshold_1", "q_pct_threshold_3", "k_pct_threshold_10",
                        "jaccard_index_0", "jaccard_index_-1", "jaccard_index_-2", "NCC", "SSIM"})
    r.check(std::abs(v(n) - 1.0) <= 1e-12, std::string(n) + " = " + fmt(v(n), 15));
  for (const char* n : {"MSE", "mean", "std", "0.1", "0.25", "0.5", "0.75", "0.9", "centroid_distance_n_clusters_20",
                        "cluster_proportion_n_clusters_20", "wcv_ratio_n_clusters_20", "centroid_distance_n_clusters_100",
                        "cluster_proportion_n_clusters_100", "wcv_ratio_n_clusters_100"})
    r.check(std::abs(v(n)) <= 1e-12, std::string(n) + " = " + fmt(v(n), 15));
  for (const char* n : {"iterations_k_n_clusters_20", "iterations_k_n_clusters_100"})
    r.check(v(n) == 1.0, std::string(n) + " = " + fmt(v(n), 0));
  std::vector<double> sample;
  for (std::size_t i = 0; i < 50; ++i) sample.push_back(cloud[i].x);
  r.check(emd_raw(sample, sample) == 0.0 && emd_shift(sample, sample) == 0.0, "EMD of a sample with itself = 0");
  r.note(std::to_string(cloud.size()) + " edge points in the self-pair");
}

// ---------------------------------------------------------------------------

struct E2EData {
  std::vector<FeatureRow> train, test;
  ExperimentReport report;
  double seconds = 0.0;
};

E2EData end_to_end() {
  E2EData d;
  Report r{"End-to-end synthetic run: Full >= 0.90 on pristine and >= 0.80 on blur 6; Baseline >= 10 points below "
           "Full on blur 6; <= 30 min"};
  const auto t0 = Clock::now();
  SynthSpec spec;
  spec.seed = 7;
  CorpusPlan plan;
  plan.shoes = 30;
  plan.blur_levels = {2, 6, 10};
  const unsigned threads = default_threads();
  const SynthCorpus corpus = generate_corpus(spec, plan, threads);
  const ShoeSplit split = split_by_shoe(corpus.records, 0.7, 7);
  const std::vector<Scenario> scenarios = {Scenario::PristineAN, Scenario::Blurry02,   Scenario::Blurry06,
                                           Scenario::Blurry10,   Scenario::PartialToe, Scenario::PartialHeel};
  const SplitFeatures sf = featurize_split(corpus.records, scenarios, split, corpus.loader(), PipelineConfig{}, 7, threads);
  d.train = sf.train;
  d.test = sf.test;
  r.note(std::to_string(corpus.records.size()) + " captures, " + std::to_string(split.train.size()) + "/" +
         std::to_string(split.test.size()) + " train/test shoes, " + std::to_string(d.train.size()) + "/" +
         std::to_string(d.test.size()) + " train/test pairs, " + std::to_string(sf.failures.size()) +
         " failed pairs, featurized in " + fmt(seconds_since(t0), 1) + " s on " + std::to_string(threads) + " thread(s)");

  ExperimentConfig cfg;
  cfg.regimes = {Regime::Baseline, Regime::Full};
  cfg.seed = 7;
  cfg.threads = threads;
  d.report = run_experiment_matrix(d.train, d.test, cfg);
  d.seconds = seconds_since(t0);

  auto acc = [&](Regime g, Scenario s) {
    const auto& c = d.report.cell(g, s);
    return c.report ? c.report->accuracy : -1.0;
  };
  for (Scenario s : scenarios)
    r.note(to_string(s) + ": baseline " + fmt(acc(Regime::Baseline, s), 3) + ", full " + fmt(acc(Regime::Full, s), 3));
  const double full_pristine = acc(Regime::Full, Scenario::PristineAN);
  const double full_b6 = acc(Regime::Full, Scenario::Blurry06), base_b6 = acc(Regime::Baseline, Scenario::Blurry06);
  r.check(full_pristine >= 0.90, "Full accuracy on pristine " + fmt(full_pristine, 3) + " >= 0.90");
  r.check(full_b6 >= 0.80, "Full accuracy on blur 6 " + fmt(full_b6, 3) + " >= 0.80");
  r.check(base_b6 <= full_b6 - 0.10, "Baseline accuracy on blur 6 " + fmt(base_b6, 3) + " <= Full - 0.10");
  r.check(d.seconds <= 1800.0, "total runtime " + fmt(d.seconds, 1) + " s <= 1800 s");
  return d;
}

void distribution_shift(const E2EData& d) {
  Report r{"Distribution shift: standardized EMD of k_pct_threshold_3, pristine vs blur 10 (mated), >= 5x the "
           "pristine resample EMD"};
  std::vector<FeatureRow> all = d.train;
  all.insert(all.end(), d.test.begin(), d.test.end());
  const std::size_t f = *feature_index("k_pct_threshold_3");
  const auto pristine = feature_column(all, f, Scenario::PristineAN, 1);
  const auto blur10 = feature_column(all, f, Scenario::Blurry10, 1);
  if (pristine.size() < 4 || blur10.empty()) {
    r.check(false, "not enough mated rows");
    return;
  }
  const double shift = emd_shift(pristine, blur10);

  // Null reference: an independent pristine mated sample of the same size,
  // drawn from the same generator under another seed.
  SynthSpec spec;
  spec.seed = 8;
  CorpusPlan plan;
  plan.shoes = 30;
  const SynthCorpus fresh = generate_corpus(spec, plan, default_threads());
  const auto mated = build_pairs(fresh.records, Scenario::PristineAN).mated;
  const FeaturizedPairs fp = featurize_pairs(fresh.records, mated, fresh.loader(), PipelineConfig{}, 8, default_threads());
  const auto pristine_b = feature_column(fp.rows, f, Scenario::PristineAN, 1);
  const double resample = emd_shift(pristine, pristine_b);

  Rng rng(99);
  double half_split = 0.0;
  const int reps = 50;
  for (int i = 0; i < reps; ++i) {
    std::vector<double> v = pristine;
    rng.shuffle(v);
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    half_split += emd_shift(std::vector<double>(v.begin(), mid), std::vector<double>(mid, v.end()));
  }
  half_split /= reps;
  const double from_table = d.report.emd_mated.count(Scenario::Blurry10)
                                ? d.report.emd_mated.at(Scenario::Blurry10)[f].value_or(-1.0)
                                : -1.0;
  r.note("pristine n=" + std::to_string(pristine.size()) + ", blur 10 n=" + std::to_string(blur10.size()) +
         ", resample n=" + std::to_string(pristine_b.size()));
  r.note("mean EMD over 50 half splits of the pristine sample (half-size reference): " + fmt(half_split, 4));
  r.check(from_table == shift, "experiment EMD table agrees: " + fmt(from_table, 6));
  r.check(shift >= 5.0 * resample, "pristine vs blur 10 EMD " + fmt(shift, 4) + " vs independent pristine resample EMD " +
                                       fmt(resample, 4) + " (ratio " + fmt(shift / resample, 1) + ")");
}

void determinism(const E2EData& d) {
  Report r{"Determinism: identical seeds give byte-identical model JSON and posteriors, including parallel training"};
  const Dataset train = to_dataset(d.train), test = to_dataset(d.test);
  ForestParams p;
  p.n_trees = 300;
  const std::string a = dump_model(train_forest(train, p, 7, 1));
  const std::string b = dump_model(train_forest(train, p, 7, 1));
  const ForestModel par = train_forest(train, p, 7, 4);
  r.check(a == b, "two single-thread runs: identical model JSON (" + std::to_string(a.size()) + " bytes)");
  r.check(a == dump_model(par), "4-thread training matches single-thread model JSON");
  r.check(model_from_json(Json::parse(a)).predict(test) == par.predict(test), "posteriors identical on the test pairs");
  const auto& full = d.report.models.at("full");
  ExperimentConfig cfg;
  cfg.regimes = {Regime::Full};
  cfg.seed = 7;
  cfg.threads = 1;
  const ExperimentReport again = run_experiment_matrix(d.train, d.test, cfg);
  r.check(dump_model(again.models.at("full")) == dump_model(full),
          "Full model retrained on one thread matches the end-to-end model");

  // Featurization is reproducible pair by pair.
  SynthSpec spec;
  spec.seed = 7;
  CorpusPlan plan;
  plan.shoes = 6;
  const SynthCorpus corpus = generate_corpus(spec, plan);
  const auto pairs = build_pairs(corpus.records, Scenario::PristineAN).all();
  const auto f1 = featurize_pairs(corpus.records, pairs, corpus.loader(), PipelineConfig{}, 3, 1);
  const auto f2 = featurize_pairs(corpus.records, pairs, corpus.loader(), PipelineConfig{}, 3, 2);
  bool same = f1.rows.size() == f2.rows.size() && !f1.rows.empty();
  for (std::size_t i = 0; same && i < f1.rows.size(); ++i) same = f1.rows[i].features.values == f2.rows[i].features.values;
  r.check(same, "feature rows identical across repeated featurization");
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  icp_recovery();
  oracle_equivalence();
  formula_checks();
  identity_suite();
  const E2EData d = end_to_end();
  distribution_shift(d);
  determinism(d);
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << " in "
            << fmt(seconds_since(t0), 1) << " s\n";
  return failures == 0 ? 0 : 1;
}
