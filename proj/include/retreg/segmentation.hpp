#pragma once

// Vessel mask extraction from the enhanced image: local-entropy threshold,
// binarization, component size filter, hollow-vessel fill and camera-mask
// removal.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "retreg/error.hpp"
#include "retreg/raster.hpp"

namespace retreg {

/// Default minimum component size, as a fraction of the image area. It is
/// the ratio that yields exactly 950 pixels on a 1012 x 1024 image (about
/// 0.09% of the pixels).
inline constexpr double kMinComponentRatio = 950.0 / (1012.0 * 1024.0);
/// Background regions below this fraction of the image area are filled.
inline constexpr double kMaxHoleRatio = 0.000115;
/// Camera-mask intensity limit (inclusive).
inline constexpr int kDarkLimit = 15;

/// Gray-level co-occurrence counts: each pixel pairs with its right and its
/// down-right neighbour.
struct CooccurrenceMatrix {
  static constexpr int levels = 256;
  std::vector<std::uint64_t> counts = std::vector<std::uint64_t>(levels * levels, 0);
  std::uint64_t total = 0;

  std::uint64_t at(int i, int j) const { return counts[static_cast<std::size_t>(i * levels + j)]; }
  std::uint64_t& at(int i, int j) { return counts[static_cast<std::size_t>(i * levels + j)]; }
};

inline CooccurrenceMatrix cooccurrence(const GrayImage& image) {
  if (image.size() < 2) throw Error(ErrorCode::input, "co-occurrence needs at least two pixels");
  CooccurrenceMatrix m;
  for (int r = 0; r < image.rows(); ++r) {
    for (int c = 0; c + 1 < image.cols(); ++c) {
      ++m.at(image(r, c), image(r, c + 1));
      if (r + 1 < image.rows()) ++m.at(image(r, c), image(r + 1, c + 1));
    }
  }
  for (auto v : m.counts) m.total += v;
  if (m.total == 0) throw Error(ErrorCode::input, "image has no horizontal or diagonal neighbour pairs");
  return m;
}

struct ThresholdResult {
  std::uint8_t level = 0;
  std::array<double, 256> entropy_curve{};
};

/// -p log2 p with 0 log 0 = 0.
inline double entropy_term(double p) { return p > 0.0 ? -p * std::log2(p) : 0.0; }

/// H2(s) = -1/2 PA log2 PA - 1/2 PC log2 PC for every threshold s, from the
/// block sums of the co-occurrence matrix.
inline std::array<double, 256> local_entropy_curve(const CooccurrenceMatrix& m) {
  constexpr int L = CooccurrenceMatrix::levels;
  // prefix(i, j) = sum of counts over rows 0..i and columns 0..j.
  std::vector<std::uint64_t> prefix(static_cast<std::size_t>(L * L), 0);
  for (int i = 0; i < L; ++i) {
    std::uint64_t row = 0;
    for (int j = 0; j < L; ++j) {
      row += m.at(i, j);
      prefix[static_cast<std::size_t>(i * L + j)] = row + (i > 0 ? prefix[static_cast<std::size_t>((i - 1) * L + j)] : 0);
    }
  }
  const auto P = [&](int i, int j) { return prefix[static_cast<std::size_t>(i * L + j)]; };
  const double n = static_cast<double>(m.total);
  std::array<double, 256> curve{};
  for (int s = 0; s < L; ++s) {
    const std::uint64_t a = P(s, s);
    const std::uint64_t c = m.total - P(s, L - 1) - P(L - 1, s) + P(s, s);
    curve[static_cast<std::size_t>(s)] = 0.5 * entropy_term(static_cast<double>(a) / n) + 0.5 * entropy_term(static_cast<double>(c) / n);
  }
  return curve;
}

inline ThresholdResult entropy_threshold(const GrayImage& image) {
  ThresholdResult out;
  out.entropy_curve = local_entropy_curve(cooccurrence(image));
  const auto best = std::max_element(out.entropy_curve.begin(), out.entropy_curve.end());
  if (*best > 0.0) {
    out.level = static_cast<std::uint8_t>(best - out.entropy_curve.begin());
  } else {
    // Flat curve (e.g. a constant image): threshold at the brightest level so
    // nothing is segmented.
    out.level = *std::max_element(image.begin(), image.end());
  }
  return out;
}

inline BinaryMask segment(const GrayImage& enhanced, std::uint8_t level) {
  BinaryMask mask(enhanced.dims(), 0);
  for (std::size_t i = 0; i < enhanced.size(); ++i) mask[i] = enhanced[i] > level ? 1 : 0;
  return mask;
}

/// ceil(ratio * area), tolerant of the ratio having been derived from an
/// integer count on exactly this area.
inline std::size_t area_threshold(double ratio, Dims dims) {
  const double x = ratio * static_cast<double>(dims.area());
  return static_cast<std::size_t>(std::ceil(x - 1e-6 * std::max(1.0, x)));
}

inline BinaryMask size_filter(const BinaryMask& mask, double min_ratio = kMinComponentRatio) {
  const std::size_t min_size = area_threshold(min_ratio, mask.dims());
  const Components comps = label_components(mask);
  BinaryMask out = mask;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto label = comps.labels[i];
    if (label != 0 && comps.sizes[static_cast<std::size_t>(label)] < min_size) out[i] = 0;
  }
  return out;
}

/// Fills 8-connected background regions smaller than max_ratio of the image
/// area. Regions touching the image border are never filled.
inline BinaryMask fill_hollow_vessels(const BinaryMask& mask, double max_ratio = kMaxHoleRatio) {
  const std::size_t max_size = area_threshold(max_ratio, mask.dims());
  const Components holes = label_where(mask.dims(), [&](std::size_t i) { return mask[i] == 0; });
  std::vector<std::uint8_t> touches_border(holes.sizes.size(), 0);
  const int rows = mask.rows();
  const int cols = mask.cols();
  for (int r = 0; r < rows; ++r) {
    touches_border[static_cast<std::size_t>(holes.labels(r, 0))] = 1;
    touches_border[static_cast<std::size_t>(holes.labels(r, cols - 1))] = 1;
  }
  for (int c = 0; c < cols; ++c) {
    touches_border[static_cast<std::size_t>(holes.labels(0, c))] = 1;
    touches_border[static_cast<std::size_t>(holes.labels(rows - 1, c))] = 1;
  }
  BinaryMask out = mask;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto label = static_cast<std::size_t>(holes.labels[i]);
    if (label != 0 && !touches_border[label] && holes.sizes[label] < max_size) out[i] = 1;
  }
  return out;
}

/// Marks, per row, the run of pixels <= dark_limit reached from the left edge
/// and the run reached from the right edge.
inline BinaryMask detect_camera_mask(const GrayImage& original, int dark_limit = kDarkLimit) {
  BinaryMask out(original.dims(), 0);
  for (int r = 0; r < original.rows(); ++r) {
    for (int c = 0; c < original.cols() && original(r, c) <= dark_limit; ++c) out(r, c) = 1;
    for (int c = original.cols() - 1; c >= 0 && original(r, c) <= dark_limit; --c) out(r, c) = 1;
  }
  return out;
}

inline BinaryMask remove_mask(const BinaryMask& vessels, const BinaryMask& camera_mask) {
  if (vessels.dims() != camera_mask.dims()) throw Error(ErrorCode::input, "vessel and camera masks differ in shape");
  BinaryMask out(vessels.dims(), 0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (vessels[i] != 0 && camera_mask[i] == 0) ? 1 : 0;
  return out;
}

}  // namespace retreg
