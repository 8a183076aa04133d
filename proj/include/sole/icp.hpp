#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "sole/errors.hpp"
#include "sole/kdtree.hpp"
#include "sole/pointcloud.hpp"
#include "sole/simfeatures.hpp"
#include "sole/util.hpp"

namespace sole {

struct IcpConfig {
  int max_iterations = 200;
  /// Stop once the relative MSE improvement of an iteration drops below this.
  double convergence_tol = 1e-6;
  std::vector<double> downsample_rates = {0.04, 0.05, 0.06, 0.20, 0.50};
  /// Overlap radius used to pick the winning candidate.
  double overlap_threshold_for_selection = 3.0;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  void validate() const {
    if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    if (!(convergence_tol > 0.0)) throw ConfigError("convergence_tol must be positive");
    if (downsample_rates.empty()) throw ConfigError("at least one downsample rate is required");
    for (double r : downsample_rates)
      if (!(r > 0.0 && r <= 1.0)) throw ConfigError("downsample rates must lie in (0, 1]");
    if (!(overlap_threshold_for_selection > 0.0)) throw ConfigError("selection threshold must be positive");
  }
};

enum class Direction { QReference, KReference };

inline const char* to_string(Direction d) {
  return d == Direction::QReference ? "Q-reference" : "K-reference";
}

/// Outcome of one ICP run (moving -> reference frame).
struct IcpRun {
  RigidTransform transform;
  double objective = 0.0;  // summed squared correspondence distance at exit
  int iterations = 0;
  bool converged = false;
  bool degenerate = false;  // some iteration matched every point to one target
  std::vector<double> objective_history;  // one entry per correspondence step
};

/// One scored alignment candidate.
struct CandidateDiagnostics {
  double rate = 0.0;
  int start = 0;
  Direction direction = Direction::QReference;
  RigidTransform transform;  // always K -> K*
  double objective = 0.0;
  double selection_score = 0.0;
  int iterations = 0;
  bool converged = false;
  bool degenerate = false;
};

struct AlignmentResult {
  RigidTransform transform;  // maps K onto K* (Q's frame)
  double objective = 0.0;
  double selection_score = 0.0;
  Direction direction = Direction::QReference;
  int start_used = 0;
  double rate_used = 1.0;
  std::vector<CandidateDiagnostics> candidates;
};

/// Closed-form rigid (rotation + translation) least-squares fit taking
/// `from[i]` onto `to[i]`.
inline RigidTransform fit_rigid(const std::vector<Point>& from, const std::vector<Point>& to) {
  const auto n = static_cast<double>(from.size());
  double fx = 0, fy = 0, tx = 0, ty = 0;
  for (std::size_t i = 0; i < from.size(); ++i) {
    fx += from[i].x, fy += from[i].y;
    tx += to[i].x, ty += to[i].y;
  }
  fx /= n, fy /= n, tx /= n, ty /= n;
  // Cross-covariance terms; the optimal angle maximizes cos*a + sin*b.
  double a = 0, b = 0;
  for (std::size_t i = 0; i < from.size(); ++i) {
    const double px = from[i].x - fx, py = from[i].y - fy;
    const double qx = to[i].x - tx, qy = to[i].y - ty;
    a += px * qx + py * qy;
    b += px * qy - py * qx;
  }
  const double theta = (a == 0.0 && b == 0.0) ? 0.0 : std::atan2(b, a);
  const double c = std::cos(theta), s = std::sin(theta);
  return {theta, tx - (c * fx - s * fy), ty - (s * fx + c * fy)};
}

inline IcpRun icp_single(const PointCloud& reference, const NeighborIndex& ref_index,
                         const PointCloud& moving, const RigidTransform& init, const IcpConfig& cfg) {
  if (reference.empty() || moving.empty()) throw EmptyCloudError("ICP needs two nonempty clouds");
  IcpRun run;
  run.transform = init;
  PointCloud current = apply(init, moving);
  std::vector<Point> matched(current.size());
  double prev_mse = std::numeric_limits<double>::infinity();
  const auto n = static_cast<double>(current.size());

  for (int iter = 0;; ++iter) {
    double objective = 0.0;
    std::size_t first_target = std::numeric_limits<std::size_t>::max();
    bool single_target = true;
    for (std::size_t i = 0; i < current.size(); ++i) {
      const Neighbor nb = ref_index.nearest(current[i]);
      matched[i] = nb.point;
      objective += nb.distance * nb.distance;
      if (i == 0) first_target = nb.index;
      else if (nb.index != first_target) single_target = false;
    }
    run.objective_history.push_back(objective);
    run.objective = objective;
    if (single_target && current.size() > 1) run.degenerate = true;

    const double mse = objective / n;
    if (mse == 0.0 || (std::isfinite(prev_mse) && prev_mse - mse <= cfg.convergence_tol * prev_mse)) {
      run.converged = true;
      break;
    }
    if (iter >= cfg.max_iterations) break;

    const RigidTransform step = fit_rigid(current.points(), matched);
    current = apply(step, current);
    run.transform = compose(step, run.transform);
    run.iterations = iter + 1;
    prev_mse = mse;
  }
  return run;
}

inline IcpRun icp_single(const PointCloud& reference, const PointCloud& moving,
                         const RigidTransform& init, const IcpConfig& cfg) {
  if (reference.empty() || moving.empty()) throw EmptyCloudError("ICP needs two nonempty clouds");
  return icp_single(reference, NeighborIndex(reference), moving, init, cfg);
}

/// Identity plus shifts of the moving cloud left, right, up and down by
/// twice its extent along the shift axis.
inline std::array<RigidTransform, 5> make_starts(const PointCloud& moving) {
  const Bounds b = bounds(moving);
  const double sx = 2.0 * b.width(), sy = 2.0 * b.height();
  return {RigidTransform{0.0, 0.0, 0.0}, RigidTransform{0.0, sx, 0.0}, RigidTransform{0.0, -sx, 0.0},
          RigidTransform{0.0, 0.0, sy}, RigidTransform{0.0, 0.0, -sy}};
}

/// Multi-start, two-way, multi-rate alignment of K onto Q. Every candidate is
/// scored by the share of K* within the selection radius of Q, computed on the
/// full clouds; ties go to the lower objective, then to enumeration order
/// (rate, start, direction).
inline AlignmentResult align(const PointCloud& q, const PointCloud& k, const IcpConfig& cfg) {
  if (q.empty() || k.empty()) throw EmptyCloudError("alignment needs two nonempty clouds");
  cfg.validate();
  const NeighborIndex q_full_index(q);
  const auto k_starts = make_starts(k);
  const auto q_starts = make_starts(q);

  const std::size_t n_rates = cfg.downsample_rates.size();
  std::vector<PointCloud> q_ds(n_rates), k_ds(n_rates);
  std::vector<NeighborIndex> q_ds_index(n_rates), k_ds_index(n_rates);
  for (std::size_t r = 0; r < n_rates; ++r) {
    q_ds[r] = downsample(q, cfg.downsample_rates[r], derive_seed(cfg.seed, 2 * r));
    k_ds[r] = downsample(k, cfg.downsample_rates[r], derive_seed(cfg.seed, 2 * r + 1));
    q_ds_index[r] = NeighborIndex(q_ds[r]);
    k_ds_index[r] = NeighborIndex(k_ds[r]);
  }

  const std::size_t total = n_rates * 5 * 2;
  std::vector<CandidateDiagnostics> cands(total);
  parallel_for(
      total,
      [&](std::size_t c) {
        const std::size_t r = c / 10;
        const int start = static_cast<int>((c / 2) % 5);
        const Direction dir = (c % 2 == 0) ? Direction::QReference : Direction::KReference;
        IcpRun run;
        RigidTransform k_to_q;
        if (dir == Direction::QReference) {
          run = icp_single(q_ds[r], q_ds_index[r], k_ds[r], k_starts[start], cfg);
          k_to_q = run.transform;
        } else {
          run = icp_single(k_ds[r], k_ds_index[r], q_ds[r], q_starts[start], cfg);
          k_to_q = invert(run.transform);
        }
        CandidateDiagnostics& d = cands[c];
        d.rate = cfg.downsample_rates[r];
        d.start = start;
        d.direction = dir;
        d.transform = k_to_q;
        d.objective = run.objective;
        d.iterations = run.iterations;
        d.converged = run.converged;
        d.degenerate = run.degenerate;
        d.selection_score = proportion_overlap(apply(k_to_q, k), q_full_index, cfg.overlap_threshold_for_selection);
      },
      cfg.threads);

  std::size_t best = 0;
  for (std::size_t c = 1; c < total; ++c) {
    const auto& a = cands[c];
    const auto& b = cands[best];
    if (a.selection_score > b.selection_score ||
        (a.selection_score == b.selection_score && a.objective < b.objective))
      best = c;
  }
  AlignmentResult out;
  out.transform = cands[best].transform;
  out.objective = cands[best].objective;
  out.selection_score = cands[best].selection_score;
  out.direction = cands[best].direction;
  out.start_used = cands[best].start;
  out.rate_used = cands[best].rate;
  out.candidates = std::move(cands);
  return out;
}

}  // namespace sole
