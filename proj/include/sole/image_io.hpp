#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "sole/errors.hpp"
#include "sole/image.hpp"

namespace sole {

namespace detail {

inline std::uint8_t luma(double r, double g, double b) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(0.299 * r + 0.587 * g + 0.114 * b), 0L, 255L));
}

inline GrayImage from_mat(const cv::Mat& decoded) {
  if (decoded.empty() || decoded.cols < 1 || decoded.rows < 1)
    throw FormatError("decoded image has zero dimensions");
  cv::Mat m = decoded;
  if (m.depth() == CV_16U) m.convertTo(m, CV_8U, 1.0 / 257.0);
  else if (m.depth() != CV_8U) m.convertTo(m, CV_8U);

  GrayImage out(m.cols, m.rows);
  const int ch = m.channels();
  for (int r = 0; r < m.rows; ++r) {
    const std::uint8_t* row = m.ptr<std::uint8_t>(r);
    for (int c = 0; c < m.cols; ++c) {
      const std::uint8_t* px = row + static_cast<std::ptrdiff_t>(c) * ch;
      if (ch == 1 || ch == 2) {
        out(r, c) = px[0];
      } else {
        // OpenCV stores colour as BGR(A); alpha is ignored.
        out(r, c) = luma(px[2], px[1], px[0]);
      }
    }
  }
  return out;
}

}  // namespace detail

/// Decodes an in-memory PNG/TIFF/JPEG. Colour converts with Rec. 601 luma.
inline GrayImage decode_gray(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw FormatError("empty image payload");
  const cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8U, const_cast<std::uint8_t*>(bytes.data()));
  cv::Mat decoded;
  try {
    decoded = cv::imdecode(buf, cv::IMREAD_UNCHANGED | cv::IMREAD_ANYDEPTH);
  } catch (const cv::Exception& e) {
    throw FormatError(std::string("image decode failed: ") + e.what());
  }
  if (decoded.empty()) throw FormatError("payload is not a decodable raster image");
  return detail::from_mat(decoded);
}

inline GrayImage load_gray(const std::string& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) throw IOError("cannot read image file " + path);
  cv::Mat decoded;
  try {
    decoded = cv::imread(path, cv::IMREAD_UNCHANGED | cv::IMREAD_ANYDEPTH);
  } catch (const cv::Exception& e) {
    throw IOError("cannot read image file " + path + ": " + e.what());
  }
  if (decoded.empty()) throw IOError("cannot decode image file " + path);
  return detail::from_mat(decoded);
}

inline cv::Mat to_mat(const GrayImage& img) {
  cv::Mat m(img.height(), img.width(), CV_8U);
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c) m.at<std::uint8_t>(r, c) = img(r, c);
  return m;
}

inline void save_png(const std::string& path, const GrayImage& img) {
  if (!cv::imwrite(path, to_mat(img))) throw IOError("cannot write " + path);
}

inline std::vector<std::uint8_t> encode_png(const GrayImage& img) {
  std::vector<std::uint8_t> out;
  if (!cv::imencode(".png", to_mat(img), out)) throw IOError("PNG encoding failed");
  return out;
}

}  // namespace sole
