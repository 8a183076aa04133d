#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "sole/errors.hpp"
#include "sole/evalkit.hpp"
#include "sole/image.hpp"
#include "sole/image_io.hpp"
#include "sole/pointcloud.hpp"
#include "sole/util.hpp"

namespace sole {

enum class TreadFamily { Grid, Waves, Hex };

inline const char* to_string(TreadFamily f) {
  switch (f) {
    case TreadFamily::Grid: return "grid";
    case TreadFamily::Waves: return "waves";
    case TreadFamily::Hex: return "hex";
  }
  return "";
}

inline TreadFamily parse_tread_family(std::string_view s) {
  for (TreadFamily f : {TreadFamily::Grid, TreadFamily::Waves, TreadFamily::Hex})
    if (s == to_string(f)) return f;
  throw ConfigError("unknown tread family " + std::string(s));
}

/// Generator settings. Lengths are in pixels.
struct SynthSpec {
  int canvas_width = 120;
  int canvas_height = 260;
  std::vector<TreadFamily> families = {TreadFamily::Grid, TreadFamily::Waves, TreadFamily::Hex};
  double period = 14.0;              // tread repeat distance
  int rac_count = 30;                // per shoe
  double rac_min_radius = 1.5;
  double rac_max_radius = 3.5;
  int wear_patches = 3;              // worn-through areas per shoe
  double wear_patch_min_radius = 7.0;
  double wear_patch_max_radius = 16.0;
  double jitter_sigma = 2.0;         // replicate translation sd
  double rotation_jitter_deg = 1.5;  // replicate rotation sd
  double blur_sigma_per_level = 0.4;
  double contrast_width = 16.0;      // logistic tone curve applied to every capture
  double rac_erosion_per_level = 0.15;
  double salt_density = 2e-4;        // isolated specks per pixel
  std::uint64_t seed = 0;

  void validate() const {
    if (canvas_width < 32 || canvas_height < 32) throw ConfigError("canvas must be at least 32x32");
    if (families.empty()) throw ConfigError("at least one tread family is required");
    if (!(period >= 4.0)) throw ConfigError("tread period must be >= 4 pixels");
    if (rac_count < 0) throw ConfigError("RAC count must be >= 0");
    if (!(rac_min_radius > 0.0 && rac_max_radius >= rac_min_radius)) throw ConfigError("bad RAC radius range");
    if (wear_patches < 0) throw ConfigError("wear patch count must be >= 0");
    if (!(wear_patch_min_radius > 0.0 && wear_patch_max_radius >= wear_patch_min_radius))
      throw ConfigError("bad wear patch radius range");
    for (double v : {jitter_sigma, rotation_jitter_deg, blur_sigma_per_level, rac_erosion_per_level, salt_density})
      if (!(v >= 0.0)) throw ConfigError("generator spreads and rates must be >= 0");
    if (!(contrast_width > 0.0)) throw ConfigError("contrast width must be positive");
  }
};

/// Gaussian blur sd for a blur level.
inline double blur_sigma(const SynthSpec& spec, int level) { return spec.blur_sigma_per_level * level; }

struct ShoeIdentity {
  std::string shoe_id;
  int model = 0;
  std::string size = "10";
  Foot foot = Foot::Left;
};

/// A randomly acquired characteristic: a round gouge or a straight nick,
/// in pixel coordinates of the master image.
struct Rac {
  double col = 0.0, row = 0.0;
  double radius = 0.0;
  bool nick = false;
  double angle = 0.0;  // nick direction, radians
};

struct ShoeMaster {
  GrayImage image;  // with RACs
  GrayImage base;   // same outsole before RACs were cut
  std::vector<Rac> racs;
};

namespace detail {

inline double size_scale(const std::string& size) {
  // 0.02 of outline scale per size step around 10.
  try {
    return std::clamp(1.0 + 0.02 * (parse_double(size) - 10.0), 0.8, 1.1);
  } catch (const Error&) {
    return 1.0;
  }
}

/// Sole outline for a left foot: a forefoot ellipse bulging toward +x, a
/// narrower heel ellipse and a waist joining them.
inline cv::Mat sole_mask(int w, int h, double scale) {
  cv::Mat mask(h, w, CV_8U, cv::Scalar(0));
  const double cx = w / 2.0;
  auto pt = [](double x, double y) { return cv::Point(static_cast<int>(std::lround(x)), static_cast<int>(std::lround(y))); };
  auto sz = [](double a, double b) { return cv::Size(static_cast<int>(std::lround(a)), static_cast<int>(std::lround(b))); };
  cv::ellipse(mask, pt(cx + 0.04 * w, 0.30 * h), sz(0.42 * w * scale, 0.26 * h * scale), 0, 0, 360, cv::Scalar(255), cv::FILLED);
  cv::ellipse(mask, pt(cx - 0.02 * w, 0.76 * h), sz(0.33 * w * scale, 0.19 * h * scale), 0, 0, 360, cv::Scalar(255), cv::FILLED);
  const std::vector<cv::Point> waist = {pt(cx - 0.30 * w * scale, 0.36 * h), pt(cx + 0.38 * w * scale, 0.36 * h),
                                        pt(cx + 0.28 * w * scale, 0.74 * h), pt(cx - 0.32 * w * scale, 0.74 * h)};
  cv::fillConvexPoly(mask, waist, cv::Scalar(255));
  return mask;
}

/// Tread elements (black on white) over the whole canvas for one model.
inline cv::Mat tread_pattern(int w, int h, TreadFamily family, double period, Rng& rng) {
  cv::Mat pat(h, w, CV_8U, cv::Scalar(255));
  const double p = period * rng.uniform(0.9, 1.1);
  const double angle = rng.uniform(-0.35, 0.35);
  const double ox = rng.uniform(0, p), oy = rng.uniform(0, p);
  const double c = std::cos(angle), s = std::sin(angle);
  auto place = [&](double u, double v) {
    // Pattern lattice (u, v) rotated about the canvas centre.
    return cv::Point2d(w / 2.0 + c * u - s * v, h / 2.0 + s * u + c * v);
  };
  const double reach = std::hypot(w, h) / 2.0 + 2 * p;
  constexpr int kShift = 4;  // sub-pixel drawing precision
  auto fixed = [&](cv::Point2d q) {
    return cv::Point(static_cast<int>(std::lround(q.x * (1 << kShift))), static_cast<int>(std::lround(q.y * (1 << kShift))));
  };
  switch (family) {
    case TreadFamily::Grid: {
      const double lug = 0.58 * p;
      int row = 0;
      for (double v = -reach + oy; v < reach; v += p, ++row)
        for (double u = -reach + ox + (row % 2) * p / 2; u < reach; u += p) {
          std::vector<cv::Point> poly;
          for (auto [du, dv] : {std::pair{-1, -1}, {1, -1}, {1, 1}, {-1, 1}})
            poly.push_back(fixed(place(u + du * lug / 2, v + dv * lug / 2)));
          cv::fillConvexPoly(pat, poly, cv::Scalar(0), cv::LINE_8, kShift);
        }
      break;
    }
    case TreadFamily::Waves: {
      const double amp = 0.25 * p, wavelength = 2.2 * p;
      const int thick = std::max(2, static_cast<int>(std::lround(0.42 * p)));
      for (double v = -reach + oy; v < reach; v += p) {
        std::vector<cv::Point> line;
        for (double u = -reach; u <= reach; u += 1.0) line.push_back(fixed(place(u, v + amp * std::sin(2 * M_PI * u / wavelength))));
        cv::polylines(pat, line, false, cv::Scalar(0), thick, cv::LINE_8, kShift);
      }
      break;
    }
    case TreadFamily::Hex: {
      const double radius = 0.36 * p;
      const double dv = p * std::sqrt(3.0) / 2.0;
      int row = 0;
      for (double v = -reach + oy; v < reach; v += dv, ++row)
        for (double u = -reach + ox + (row % 2) * p / 2; u < reach; u += p) {
          std::vector<cv::Point> poly;
          for (int k = 0; k < 6; ++k) {
            const double t = M_PI / 6 + k * M_PI / 3;
            poly.push_back(fixed(place(u + radius * std::cos(t), v + radius * std::sin(t))));
          }
          cv::fillConvexPoly(pat, poly, cv::Scalar(0), cv::LINE_8, kShift);
        }
      break;
    }
  }
  return pat;
}

inline void draw_rac(cv::Mat& img, const Rac& r, std::uint8_t colour) {
  const cv::Point c(static_cast<int>(std::lround(r.col)), static_cast<int>(std::lround(r.row)));
  if (r.nick) {
    const double len = 2.5 * r.radius;
    const cv::Point a(static_cast<int>(std::lround(r.col - len * std::cos(r.angle))),
                      static_cast<int>(std::lround(r.row - len * std::sin(r.angle))));
    const cv::Point b(static_cast<int>(std::lround(r.col + len * std::cos(r.angle))),
                      static_cast<int>(std::lround(r.row + len * std::sin(r.angle))));
    cv::line(img, a, b, cv::Scalar(colour), std::max(1, static_cast<int>(std::lround(r.radius * 0.6))));
  } else {
    cv::circle(img, c, std::max(1, static_cast<int>(std::lround(r.radius))), cv::Scalar(colour), cv::FILLED);
  }
}

}  // namespace detail

/// Master outsole image of one shoe. The tread is shared by every shoe of the
/// same model (and mirrored for right feet); worn-through patches and RACs are
/// unique to the shoe.
inline ShoeMaster generate_shoe(const SynthSpec& spec, const ShoeIdentity& id) {
  spec.validate();
  const int w = spec.canvas_width, h = spec.canvas_height;
  Rng model_rng(derive_seed(spec.seed, 0x100000 + static_cast<std::uint64_t>(id.model)));
  const TreadFamily family = spec.families[static_cast<std::size_t>(id.model) % spec.families.size()];
  const cv::Mat mask = detail::sole_mask(w, h, detail::size_scale(id.size));
  const cv::Mat pattern = detail::tread_pattern(w, h, family, spec.period, model_rng);

  cv::Mat img(h, w, CV_8U, cv::Scalar(255));
  pattern.copyTo(img, mask);
  std::vector<std::vector<cv::Point>> contours;
  cv::findContours(mask.clone(), contours, cv::RETR_EXTERNAL, cv::CHAIN_APPROX_NONE);
  cv::drawContours(img, contours, -1, cv::Scalar(0), 2);
  if (id.foot == Foot::Right) cv::flip(img, img, 1);
  cv::Mat sole = mask.clone();
  if (id.foot == Foot::Right) cv::flip(sole, sole, 1);

  Rng shoe_rng(derive_seed(spec.seed, fnv1a64(id.shoe_id + "/" + to_string(id.foot))));
  auto random_inside = [&](double margin) {
    for (int tries = 0; tries < 10000; ++tries) {
      const double col = shoe_rng.uniform(margin, w - margin), row = shoe_rng.uniform(margin, h - margin);
      if (sole.at<std::uint8_t>(static_cast<int>(row), static_cast<int>(col))) return cv::Point2d(col, row);
    }
    return cv::Point2d(w / 2.0, h / 2.0);
  };
  for (int i = 0; i < spec.wear_patches; ++i) {
    const cv::Point2d c = random_inside(4);
    const double a = shoe_rng.uniform(spec.wear_patch_min_radius, spec.wear_patch_max_radius);
    const double b = a * shoe_rng.uniform(0.5, 1.0);
    cv::ellipse(img, cv::Point(static_cast<int>(c.x), static_cast<int>(c.y)),
                cv::Size(static_cast<int>(std::lround(a)), static_cast<int>(std::lround(b))),
                shoe_rng.uniform(0, 180), 0, 360, cv::Scalar(255), cv::FILLED);
  }

  ShoeMaster m;
  m.base = detail::from_mat(img);
  for (int i = 0; i < spec.rac_count; ++i) {
    // RACs are cut into tread contact areas, so prefer black pixels.
    cv::Point2d c = random_inside(3);
    for (int tries = 0; tries < 200 && img.at<std::uint8_t>(static_cast<int>(c.y), static_cast<int>(c.x)) != 0; ++tries)
      c = random_inside(3);
    Rac r;
    r.col = c.x;
    r.row = c.y;
    r.radius = shoe_rng.uniform(spec.rac_min_radius, spec.rac_max_radius);
    r.nick = shoe_rng.uniform() < 0.4;
    r.angle = shoe_rng.uniform(0, M_PI);
    detail::draw_rac(img, r, 255);
    m.racs.push_back(r);
  }
  m.image = detail::from_mat(img);
  return m;
}

struct CaptureOptions {
  int replicate = 1;
  int blur_level = 0;
  int wear_level = 0;  // later visits erode RACs
  std::optional<PartialSpec> partial;
};

/// One impression of a master: RAC wear, replicate placement jitter, blur,
/// a logistic tone curve, scanner specks and an optional partial mask.
/// Specks depend only on the replicate, so raising the blur level changes
/// nothing but the blur.
inline GrayImage capture(const SynthSpec& spec, const ShoeMaster& master, const std::string& shoe_key,
                         const CaptureOptions& opt) {
  spec.validate();
  if (opt.blur_level < 0 || opt.wear_level < 0 || opt.replicate < 1) throw ConfigError("bad capture options");
  cv::Mat img = to_mat(master.image);
  const int w = img.cols, h = img.rows;

  if (opt.wear_level > 0 && !master.racs.empty()) {
    const double p = std::min(1.0, spec.rac_erosion_per_level * opt.wear_level);
    Rng wear_rng(derive_seed(spec.seed, fnv1a64(shoe_key + "/wear/" + std::to_string(opt.wear_level))));
    // RAC pixels revert to the uncut tread with probability p.
    cv::Mat rac_mask(h, w, CV_8U, cv::Scalar(0));
    for (const Rac& r : master.racs) detail::draw_rac(rac_mask, r, 255);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c)
        if (rac_mask.at<std::uint8_t>(r, c) && wear_rng.uniform() < p) img.at<std::uint8_t>(r, c) = master.base(r, c);
  }

  Rng rep_rng(derive_seed(spec.seed, fnv1a64(shoe_key + "/rep/" + std::to_string(opt.replicate))));
  const double angle = rep_rng.normal(0.0, spec.rotation_jitter_deg);
  const double dx = rep_rng.normal(0.0, spec.jitter_sigma), dy = rep_rng.normal(0.0, spec.jitter_sigma);
  cv::Mat rot = cv::getRotationMatrix2D(cv::Point2f(static_cast<float>(w / 2.0), static_cast<float>(h / 2.0)), angle, 1.0);
  rot.at<double>(0, 2) += dx;
  rot.at<double>(1, 2) += dy;
  cv::Mat moved;
  cv::warpAffine(img, moved, rot, img.size(), cv::INTER_LINEAR, cv::BORDER_CONSTANT, cv::Scalar(255));

  const double sigma = blur_sigma(spec, opt.blur_level);
  if (sigma > 0.0) cv::GaussianBlur(moved, moved, cv::Size(0, 0), sigma, sigma, cv::BORDER_REPLICATE);

  cv::Mat lut(1, 256, CV_8U);
  for (int v = 0; v < 256; ++v)
    lut.at<std::uint8_t>(v) = cv::saturate_cast<std::uint8_t>(255.0 / (1.0 + std::exp(-(v - 128.0) / spec.contrast_width)));
  cv::LUT(moved, lut, moved);

  const auto specks = static_cast<int>(std::lround(spec.salt_density * w * h));
  for (int i = 0; i < specks; ++i) {
    const int r = static_cast<int>(rep_rng.index(static_cast<std::size_t>(h)));
    const int c = static_cast<int>(rep_rng.index(static_cast<std::size_t>(w)));
    const int size = 1 + static_cast<int>(rep_rng.index(2));
    cv::rectangle(moved, cv::Rect(c, r, size, size), cv::Scalar(0), cv::FILLED);
  }

  GrayImage out = detail::from_mat(moved);
  if (opt.partial) {
    const PointCloud ink = black_pixels(binarize(out));
    if (!ink.empty()) {
      const CutPlan plan = plan_cut(ink, opt.partial->region, opt.partial->foot);
      for (int r = 0; r < out.height(); ++r)
        for (int c = 0; c < out.width(); ++c)
          if (!plan.keep(pixel_to_point(r, c, out.height()))) out(r, c) = 255;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

struct CorpusPlan {
  int shoes = 30;
  int models = 3;
  std::vector<std::string> sizes = {"10"};
  int replicates = 2;                    // blur-0 captures per shoe, foot and visit
  std::vector<int> blur_levels = {};     // extra blurred captures (replicate 2, or 1 with a single replicate)
  std::vector<int> visits = {1};
  bool both_feet = false;

  void validate() const {
    if (shoes < 1 || models < 1 || sizes.empty() || replicates < 1) throw ConfigError("bad corpus plan");
    for (int b : blur_levels)
      if (b <= 0 || b > 10 || b % 2) throw ConfigError("blur levels must be among 2, 4, 6, 8, 10");
    for (int v : visits)
      if (v < 1 || v > 3) throw ConfigError("visits must be among 1, 2, 3");
  }
};

struct SynthCorpus {
  std::vector<ShoeRecord> records;
  std::vector<GrayImage> images;  // parallel to records

  ImageLoader loader() const {
    return [this](const ShoeRecord& r) {
      for (std::size_t i = 0; i < records.size(); ++i)
        if (records[i].image_path == r.image_path) return images[i];
      throw IOError("no synthetic image for " + r.image_path);
    };
  }
};

inline std::string shoe_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "S%03d", index + 1);
  return buf;
}

/// Captures for a registry. Shoe i has model i % models and size
/// sizes[(i / models) % sizes.size()].
inline SynthCorpus generate_corpus(const SynthSpec& spec, const CorpusPlan& plan, unsigned threads = 1) {
  spec.validate();
  plan.validate();
  SynthCorpus corpus;
  std::vector<ShoeIdentity> ids;
  for (int i = 0; i < plan.shoes; ++i) {
    ShoeIdentity id;
    id.shoe_id = shoe_name(i);
    id.model = i % plan.models;
    id.size = plan.sizes[static_cast<std::size_t>(i / plan.models) % plan.sizes.size()];
    ids.push_back(id);
    if (plan.both_feet) {
      id.foot = Foot::Right;
      ids.push_back(id);
    }
  }
  std::vector<std::vector<std::pair<ShoeRecord, GrayImage>>> per_shoe(ids.size());
  parallel_for(
      ids.size(),
      [&](std::size_t i) {
        const ShoeIdentity& id = ids[i];
        const ShoeMaster master = generate_shoe(spec, id);
        const std::string key = id.shoe_id + "/" + to_string(id.foot);
        auto add = [&](int visit, int blur, int rep) {
          ShoeRecord r;
          r.shoe_id = id.shoe_id;
          r.person_id = "P" + id.shoe_id.substr(1);
          r.model = "M" + std::to_string(id.model + 1);
          r.size = id.size;
          r.foot = id.foot;
          r.visit = visit;
          r.blur_level = blur;
          r.replicate = rep;
          r.image_path = "images/" + detail::record_key(r) + ".png";
          CaptureOptions opt;
          opt.replicate = rep + 100 * (visit - 1);
          opt.blur_level = blur;
          opt.wear_level = visit - 1;
          per_shoe[i].emplace_back(r, capture(spec, master, key, opt));
        };
        for (int visit : plan.visits) {
          for (int rep = 1; rep <= plan.replicates; ++rep) add(visit, 0, rep);
          if (visit == 1)
            for (int b : plan.blur_levels) add(visit, b, std::min(2, plan.replicates));
        }
      },
      threads);
  for (auto& v : per_shoe)
    for (auto& [r, img] : v) {
      corpus.records.push_back(std::move(r));
      corpus.images.push_back(std::move(img));
    }
  return corpus;
}

/// Writes images under `dir` and the registry to dir/registry.csv.
inline void write_corpus(const SynthCorpus& corpus, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  for (std::size_t i = 0; i < corpus.records.size(); ++i)
    save_png((fs::path(dir) / corpus.records[i].image_path).string(), corpus.images[i]);
  write_registry((fs::path(dir) / "registry.csv").string(), corpus.records);
}

}  // namespace sole
