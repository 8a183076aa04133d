#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "sole/errors.hpp"
#include "sole/pointcloud.hpp"

namespace sole {

/// Row-major raster. `Tag` keeps grayscale and binary images distinct types.
template <typename Tag>
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, std::uint8_t fill = 0) : width_(width), height_(height) {
    if (width < 1 || height < 1) throw FormatError("image dimensions must be positive");
    pixels_.assign(static_cast<std::size_t>(width) * height, fill);
  }
  Raster(int width, int height, std::vector<std::uint8_t> pixels)
      : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (width < 1 || height < 1) throw FormatError("image dimensions must be positive");
    if (pixels_.size() != static_cast<std::size_t>(width) * height)
      throw FormatError("pixel buffer does not match image dimensions");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return pixels_.size(); }

  std::uint8_t operator()(int row, int col) const { return pixels_[index(row, col)]; }
  std::uint8_t& operator()(int row, int col) { return pixels_[index(row, col)]; }

  /// Border-replicating read.
  std::uint8_t clamped(int row, int col) const {
    return (*this)(std::clamp(row, 0, height_ - 1), std::clamp(col, 0, width_ - 1));
  }

  bool contains(int row, int col) const noexcept {
    return row >= 0 && row < height_ && col >= 0 && col < width_;
  }

  const std::vector<std::uint8_t>& pixels() const noexcept { return pixels_; }
  std::vector<std::uint8_t>& pixels() noexcept { return pixels_; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t index(int row, int col) const noexcept {
    return static_cast<std::size_t>(row) * width_ + col;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

struct GrayTag {};
struct BinaryTag {};

/// Intensities in [0, 255].
using GrayImage = Raster<GrayTag>;
/// Entries in {0, 1}; 0 is black (ink), 1 is white.
using BinaryImage = Raster<BinaryTag>;

inline constexpr int kDefaultDarknessThreshold = 85;
inline constexpr int kBinarizeThreshold = 85;

// Pixel (row, col) <-> plane point. x grows with the column, y grows upward
// from the bottom row, so clouds live in an ordinary math plane.
inline Point pixel_to_point(int row, int col, int height) {
  return {static_cast<double>(col), static_cast<double>(height - 1 - row)};
}

inline int point_to_row(double y, int height) {
  return height - 1 - static_cast<int>(std::lround(y));
}

inline int point_to_col(double x) { return static_cast<int>(std::lround(x)); }

/// Signed response of the 8-neighbour Laplacian
/// [[-1,-1,-1],[-1,8,-1],[-1,-1,-1]] with edge-replicated borders.
inline std::vector<int> laplacian_response(const GrayImage& img) {
  const int w = img.width(), h = img.height();
  std::vector<int> out(static_cast<std::size_t>(w) * h);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      int neighbours = 0;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc)
          if (dr != 0 || dc != 0) neighbours += img.clamped(r + dr, c + dc);
      out[static_cast<std::size_t>(r) * w + c] = 8 * img(r, c) - neighbours;
    }
  }
  return out;
}

/// Laplacian edge map, clamped to [0, 255] and inverted so that edges are
/// dark on a light background.
inline GrayImage edge_detect(const GrayImage& img) {
  const std::vector<int> response = laplacian_response(img);
  GrayImage out(img.width(), img.height());
  auto& px = out.pixels();
  for (std::size_t i = 0; i < response.size(); ++i)
    px[i] = static_cast<std::uint8_t>(255 - std::clamp(response[i], 0, 255));
  return out;
}

/// Plane coordinates of every pixel strictly darker than `darkness_threshold`.
/// Rows are scanned top to bottom, columns left to right.
inline PointCloud extract_points(const GrayImage& edge_img,
                                 int darkness_threshold = kDefaultDarknessThreshold) {
  if (darkness_threshold < 0 || darkness_threshold > 256)
    throw ConfigError("darkness threshold must lie in [0, 256]");
  PointCloud cloud;
  for (int r = 0; r < edge_img.height(); ++r)
    for (int c = 0; c < edge_img.width(); ++c)
      if (edge_img(r, c) < darkness_threshold) cloud.push_back(pixel_to_point(r, c, edge_img.height()));
  return cloud;
}

inline BinaryImage binarize(const GrayImage& img, int threshold = kBinarizeThreshold) {
  BinaryImage out(img.width(), img.height());
  const auto& src = img.pixels();
  auto& dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] < threshold ? 0 : 1;
  return out;
}

/// Plane coordinates of the black pixels of a binary image.
inline PointCloud black_pixels(const BinaryImage& img) {
  PointCloud cloud;
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c)
      if (img(r, c) == 0) cloud.push_back(pixel_to_point(r, c, img.height()));
  return cloud;
}

/// Pads with white to (width, height), keeping the bottom-left corner fixed so
/// plane coordinates are unchanged.
inline BinaryImage pad_to(const BinaryImage& img, int width, int height) {
  if (width < img.width() || height < img.height()) throw ConfigError("pad_to cannot shrink an image");
  if (width == img.width() && height == img.height()) return img;
  BinaryImage out(width, height, 1);
  const int shift = height - img.height();
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c) out(r + shift, c) = img(r, c);
  return out;
}

/// Whitens every pixel on the discarded side of a partial cut.
inline BinaryImage mask_cut(const BinaryImage& img, const CutPlan& plan) {
  BinaryImage out = img;
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c)
      if (!plan.keep(pixel_to_point(r, c, img.height()))) out(r, c) = 1;
  return out;
}

/// Mirrors columns about the vertical axis x = axis_sum / 2, i.e. pixel
/// column c moves to axis_sum - c. Pixels leaving the canvas are dropped.
template <typename Tag>
Raster<Tag> mirror_columns(const Raster<Tag>& img, int axis_sum, std::uint8_t background) {
  Raster<Tag> out(img.width(), img.height(), background);
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c) {
      const int dst = axis_sum - c;
      if (dst >= 0 && dst < img.width()) out(r, dst) = img(r, c);
    }
  return out;
}

}  // namespace sole
