#pragma once

// Raster file I/O. PNG/JPEG/PGM decoding and PNG encoding go through OpenCV's
// codecs; PBM masks are written directly.

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "retreg/enhancement.hpp"
#include "retreg/error.hpp"
#include "retreg/raster.hpp"

namespace retreg {

/// 8-bit gray or color file; color is returned as RGB, alpha is dropped.
inline InputImage read_image(const std::filesystem::path& path) {
  const cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw Error(ErrorCode::io, "cannot read image " + path.string());
  if (m.depth() != CV_8U) throw Error(ErrorCode::io, "only 8-bit images are supported: " + path.string());
  if (m.channels() == 1) {
    GrayImage out(m.rows, m.cols, 0);
    for (int r = 0; r < m.rows; ++r)
      for (int c = 0; c < m.cols; ++c) out(r, c) = m.at<std::uint8_t>(r, c);
    return out;
  }
  if (m.channels() == 3 || m.channels() == 4) {
    RgbImage out(m.rows, m.cols, Rgb{});
    const int ch = m.channels();
    for (int r = 0; r < m.rows; ++r) {
      const auto* row = m.ptr<std::uint8_t>(r);
      for (int c = 0; c < m.cols; ++c) {
        const auto* px = row + static_cast<std::ptrdiff_t>(c) * ch;
        out(r, c) = {px[2], px[1], px[0]};
      }
    }
    return out;
  }
  throw Error(ErrorCode::io, "unsupported channel count in " + path.string());
}

template <typename Tag>
void write_png(const std::filesystem::path& path, const Raster<std::uint8_t, Tag>& image) {
  cv::Mat m(image.rows(), image.cols(), CV_8UC1);
  for (int r = 0; r < image.rows(); ++r)
    for (int c = 0; c < image.cols(); ++c) m.at<std::uint8_t>(r, c) = image(r, c);
  if (!cv::imwrite(path.string(), m)) throw Error(ErrorCode::io, "cannot write " + path.string());
}

template <typename Tag>
void write_png(const std::filesystem::path& path, const Raster<Rgb, Tag>& image) {
  cv::Mat m(image.rows(), image.cols(), CV_8UC3);
  for (int r = 0; r < image.rows(); ++r)
    for (int c = 0; c < image.cols(); ++c) {
      const Rgb& p = image(r, c);
      m.at<cv::Vec3b>(r, c) = cv::Vec3b(p[2], p[1], p[0]);
    }
  if (!cv::imwrite(path.string(), m)) throw Error(ErrorCode::io, "cannot write " + path.string());
}

inline void write_png(const std::filesystem::path& path, const InputImage& image) {
  std::visit([&](const auto& img) { write_png(path, img); }, image);
}

/// Binary portable bitmap (P4), 1 = vessel drawn black.
inline void write_pbm(const std::filesystem::path& path, const BinaryMask& mask) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::io, "cannot write " + path.string());
  f << "P4\n" << mask.cols() << ' ' << mask.rows() << '\n';
  const int stride = (mask.cols() + 7) / 8;
  std::vector<char> row(static_cast<std::size_t>(stride));
  for (int r = 0; r < mask.rows(); ++r) {
    std::fill(row.begin(), row.end(), 0);
    for (int c = 0; c < mask.cols(); ++c)
      if (mask(r, c)) row[static_cast<std::size_t>(c / 8)] = static_cast<char>(row[static_cast<std::size_t>(c / 8)] | (0x80 >> (c % 8)));
    f.write(row.data(), stride);
  }
  if (!f) throw Error(ErrorCode::io, "cannot write " + path.string());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw Error(ErrorCode::io, "cannot write " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::io, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace retreg
