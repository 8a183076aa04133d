#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <optional>
#include <cstdint>
#include <mutex>
#include <vector>

#include <fftw3.h>

#include "sole/errors.hpp"
#include "sole/image.hpp"
#include "sole/pointcloud.hpp"

namespace sole {

/// Writes every black pixel of `k_img`, moved by `tf` in plane coordinates,
/// onto a white canvas of the target size (nearest pixel; off-canvas pixels
/// are dropped).
inline BinaryImage rasterize_aligned(const BinaryImage& k_img, const RigidTransform& tf, int target_width,
                                     int target_height) {
  BinaryImage out(target_width, target_height, 1);
  for (int r = 0; r < k_img.height(); ++r)
    for (int c = 0; c < k_img.width(); ++c) {
      if (k_img(r, c) != 0) continue;
      const Point p = tf(pixel_to_point(r, c, k_img.height()));
      const int row = point_to_row(p.y, target_height);
      const int col = point_to_col(p.x);
      if (out.contains(row, col)) out(row, col) = 0;
    }
  return out;
}

/// Circular cross-correlation map of two binary images.
struct PhaseCorrMap {
  int width = 0;   // N
  int height = 0;  // M
  std::vector<double> r;  // row-major, height x width
  int peak_row = 0;
  int peak_col = 0;
  double peak = 0.0;

  double at(int row, int col) const { return r[static_cast<std::size_t>(row) * width + col]; }
};

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

/// Owns an fftw plan; planner calls are not thread-safe so they are serialized.
class FftwPlan {
 public:
  explicit FftwPlan(fftw_plan p) : plan_(p) {}
  FftwPlan(const FftwPlan&) = delete;
  FftwPlan& operator=(const FftwPlan&) = delete;
  ~FftwPlan() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan_);
  }
  void execute() const { fftw_execute(plan_); }

 private:
  fftw_plan plan_;
};

inline std::vector<std::complex<double>> forward_fft(const BinaryImage& img) {
  const int h = img.height(), w = img.width();
  const int wc = w / 2 + 1;
  double* in = fftw_alloc_real(static_cast<std::size_t>(h) * w);
  fftw_complex* out = fftw_alloc_complex(static_cast<std::size_t>(h) * wc);
  std::unique_ptr<FftwPlan> plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = std::make_unique<FftwPlan>(fftw_plan_dft_r2c_2d(h, w, in, out, FFTW_ESTIMATE));
  }
  const auto& px = img.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) in[i] = px[i];
  plan->execute();
  std::vector<std::complex<double>> spectrum(static_cast<std::size_t>(h) * wc);
  for (std::size_t i = 0; i < spectrum.size(); ++i) spectrum[i] = {out[i][0], out[i][1]};
  plan.reset();
  fftw_free(in);
  fftw_free(out);
  return spectrum;
}

inline std::vector<double> inverse_fft(const std::vector<std::complex<double>>& spectrum, int h, int w) {
  const int wc = w / 2 + 1;
  fftw_complex* in = fftw_alloc_complex(static_cast<std::size_t>(h) * wc);
  double* out = fftw_alloc_real(static_cast<std::size_t>(h) * w);
  std::unique_ptr<FftwPlan> plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = std::make_unique<FftwPlan>(fftw_plan_dft_c2r_2d(h, w, in, out, FFTW_ESTIMATE));
  }
  for (std::size_t i = 0; i < spectrum.size(); ++i) in[i][0] = spectrum[i].real(), in[i][1] = spectrum[i].imag();
  plan->execute();
  std::vector<double> r(static_cast<std::size_t>(h) * w);
  const double scale = 1.0 / (static_cast<double>(h) * w);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = out[i] * scale;
  plan.reset();
  fftw_free(in);
  fftw_free(out);
  return r;
}

}  // namespace detail

/// Inverse transform of the unnormalized cross-power spectrum
/// conj(F(jq)) * F(jk). Both images are padded with white to their common
/// size first. The map is r(s) = sum_x jq(x) jk(x + s), so a copy of jq
/// circularly shifted by s peaks at s.
inline PhaseCorrMap phase_correlation(const BinaryImage& jq_in, const BinaryImage& jk_in) {
  const int w = std::max(jq_in.width(), jk_in.width());
  const int h = std::max(jq_in.height(), jk_in.height());
  const BinaryImage jq = pad_to(jq_in, w, h);
  const BinaryImage jk = pad_to(jk_in, w, h);

  auto fq = detail::forward_fft(jq);
  const auto fk = detail::forward_fft(jk);
  for (std::size_t i = 0; i < fq.size(); ++i) fq[i] = std::conj(fq[i]) * fk[i];

  PhaseCorrMap map;
  map.width = w;
  map.height = h;
  map.r = detail::inverse_fft(fq, h, w);
  // Entries are integer overlap counts; rounding removes FFT round-off.
  for (double& v : map.r) v = std::round(v);
  std::size_t best = 0;
  for (std::size_t i = 1; i < map.r.size(); ++i)
    if (map.r[i] > map.r[best]) best = i;
  map.peak = map.r[best];
  map.peak_row = static_cast<int>(best / w);
  map.peak_col = static_cast<int>(best % w);
  return map;
}

/// Peak over the mean of the map.
inline double peak_value(const PhaseCorrMap& map) {
  double sum = 0.0;
  for (double v : map.r) sum += v;
  const double mean = sum / static_cast<double>(map.r.size());
  if (mean == 0.0) throw UndefinedMetricError("peak value undefined: correlation map has zero mean");
  return map.peak / mean;
}

inline constexpr int kPsrExclusion = 11;

/// (peak - mean(sidelobe)) / std(sidelobe), the sidelobe being every entry
/// outside an 11x11 window centred on the peak (wrapping circularly).
inline double psr(const PhaseCorrMap& map) {
  const int half = kPsrExclusion / 2;
  auto excluded = [&](int row, int col) {
    int dr = std::abs(row - map.peak_row), dc = std::abs(col - map.peak_col);
    dr = std::min(dr, map.height - dr);
    dc = std::min(dc, map.width - dc);
    return dr <= half && dc <= half;
  };
  double sum = 0.0;
  std::size_t n = 0;
  for (int r = 0; r < map.height; ++r)
    for (int c = 0; c < map.width; ++c) {
      if (excluded(r, c)) continue;
      const double v = map.at(r, c);
      sum += v;
      ++n;
    }
  if (n == 0) throw UndefinedMetricError("PSR undefined: no sidelobe outside the peak window");
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (int r = 0; r < map.height; ++r)
    for (int c = 0; c < map.width; ++c)
      if (!excluded(r, c)) ss += (map.at(r, c) - mean) * (map.at(r, c) - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n));
  if (sd == 0.0) throw UndefinedMetricError("PSR undefined: sidelobe has zero spread");
  return (map.peak - mean) / sd;
}

inline void require_same_dims(const BinaryImage& a, const BinaryImage& b, const char* what) {
  if (a.width() != b.width() || a.height() != b.height())
    throw ConfigError(std::string(what) + " needs images of identical dimensions");
}

/// Pearson correlation of pixel values.
inline double ncc(const BinaryImage& a, const BinaryImage& b) {
  require_same_dims(a, b, "NCC");
  const auto& pa = a.pixels();
  const auto& pb = b.pixels();
  const auto n = static_cast<double>(pa.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) ma += pa[i], mb += pb[i];
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const double da = pa[i] - ma, db = pb[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va == 0.0 || vb == 0.0) throw UndefinedMetricError("NCC undefined for a constant image");
  return cov / (std::sqrt(va) * std::sqrt(vb));
}

inline double mse(const BinaryImage& a, const BinaryImage& b) {
  require_same_dims(a, b, "MSE");
  const auto& pa = a.pixels();
  const auto& pb = b.pixels();
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < pa.size(); ++i) mismatches += pa[i] != pb[i];
  return static_cast<double>(mismatches) / static_cast<double>(pa.size());
}

inline constexpr int kSsimWindow = 7;

/// Mean structural similarity over every fully contained 7x7 window, with
/// uniform weights, dynamic range 1, C1 = 0.01^2, C2 = 0.03^2 and sample
/// (N-1) normalization of the window variances and covariance.
inline double ssim(const BinaryImage& a, const BinaryImage& b) {
  require_same_dims(a, b, "SSIM");
  const int w = a.width(), h = a.height();
  if (w < kSsimWindow || h < kSsimWindow) throw TooSmallError("SSIM needs images of at least 7x7 pixels");
  // Integral images of a, b, a*b (binary: a^2 = a).
  const int W = w + 1;
  std::vector<std::int64_t> ia(static_cast<std::size_t>(W) * (h + 1), 0), ib(ia.size(), 0), iab(ia.size(), 0);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const std::size_t at = static_cast<std::size_t>(r + 1) * W + (c + 1);
      const std::size_t up = static_cast<std::size_t>(r) * W + (c + 1);
      const std::size_t left = static_cast<std::size_t>(r + 1) * W + c;
      const std::size_t diag = static_cast<std::size_t>(r) * W + c;
      const int va = a(r, c), vb = b(r, c);
      ia[at] = va + ia[up] + ia[left] - ia[diag];
      ib[at] = vb + ib[up] + ib[left] - ib[diag];
      iab[at] = va * vb + iab[up] + iab[left] - iab[diag];
    }
  auto box = [&](const std::vector<std::int64_t>& s, int r, int c) {
    const int r2 = r + kSsimWindow, c2 = c + kSsimWindow;
    return s[static_cast<std::size_t>(r2) * W + c2] - s[static_cast<std::size_t>(r) * W + c2] -
           s[static_cast<std::size_t>(r2) * W + c] + s[static_cast<std::size_t>(r) * W + c];
  };
  constexpr double n = kSsimWindow * kSsimWindow;
  constexpr double cov_norm = n / (n - 1.0);
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  std::size_t windows = 0;
  for (int r = 0; r + kSsimWindow <= h; ++r)
    for (int c = 0; c + kSsimWindow <= w; ++c) {
      const double sa = static_cast<double>(box(ia, r, c)), sb = static_cast<double>(box(ib, r, c));
      const double sab = static_cast<double>(box(iab, r, c));
      const double mx = sa / n, my = sb / n;
      const double vx = cov_norm * (sa / n - mx * mx);
      const double vy = cov_norm * (sb / n - my * my);
      const double cxy = cov_norm * (sab / n - mx * my);
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++windows;
    }
  return total / static_cast<double>(windows);
}

struct ImageMetricReport {
  std::optional<double> peak_value, psr, ncc, mse, ssim;
};

/// All image-space metrics for a padded, aligned pair.
inline ImageMetricReport image_metrics(const BinaryImage& jq, const BinaryImage& jk_aligned) {
  ImageMetricReport rep;
  auto guarded = [](auto&& fn) -> std::optional<double> {
    try {
      return fn();
    } catch (const UndefinedMetricError&) {
      return std::nullopt;
    } catch (const TooSmallError&) {
      return std::nullopt;
    }
  };
  const PhaseCorrMap map = phase_correlation(jq, jk_aligned);
  rep.peak_value = guarded([&] { return peak_value(map); });
  rep.psr = guarded([&] { return psr(map); });
  rep.ncc = guarded([&] { return ncc(jq, jk_aligned); });
  rep.mse = mse(jq, jk_aligned);
  rep.ssim = guarded([&] { return ssim(jq, jk_aligned); });
  return rep;
}

}  // namespace sole
