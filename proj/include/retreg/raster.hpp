#pragma once

// Pixel-grid primitives: rasters, index arithmetic, line / ring / band
// rasterization, slope angles and 8-connected labeling.
//
// Conventions used throughout the library:
//   * 0-based, row-major storage; absolute index = row * cols + col.
//   * Angles are degrees in [0, 360), counterclockwise positive, 0 along +col.
//     Rows grow downward, so the row delta is negated before atan2.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "retreg/error.hpp"

namespace retreg {

struct Dims {
  int rows = 0;
  int cols = 0;

  std::size_t area() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
  bool contains(int row, int col) const { return row >= 0 && col >= 0 && row < rows && col < cols; }
  friend bool operator==(const Dims&, const Dims&) = default;
};

/// (line, column) pixel position.
struct Pixel {
  int row = 0;
  int col = 0;

  friend bool operator==(const Pixel&, const Pixel&) = default;
  friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

struct GrayTag {};
struct MaskTag {};

/// Dense row-major raster. The tag keeps gray images and masks from being
/// mixed up even though both store bytes.
template <typename T, typename Tag = void>
class Raster {
 public:
  using value_type = T;

  Raster() = default;
  Raster(int rows, int cols, T fill = T{}) : dims_{rows, cols} {
    if (rows < 1 || cols < 1) throw Error(ErrorCode::argument, "raster dimensions must be positive");
    data_.assign(dims_.area(), fill);
  }
  Raster(Dims dims, T fill = T{}) : Raster(dims.rows, dims.cols, fill) {}
  Raster(int rows, int cols, std::vector<T> data) : dims_{rows, cols}, data_(std::move(data)) {
    if (rows < 1 || cols < 1) throw Error(ErrorCode::argument, "raster dimensions must be positive");
    if (data_.size() != dims_.area()) throw Error(ErrorCode::argument, "raster data length does not match rows x cols");
  }

  int rows() const { return dims_.rows; }
  int cols() const { return dims_.cols; }
  Dims dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int row, int col) { return data_[index(row, col)]; }
  const T& operator()(int row, int col) const { return data_[index(row, col)]; }
  T& operator()(Pixel p) { return (*this)(p.row, p.col); }
  const T& operator()(Pixel p) const { return (*this)(p.row, p.col); }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  bool contains(int row, int col) const { return dims_.contains(row, col); }
  bool contains(Pixel p) const { return dims_.contains(p.row, p.col); }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(dims_.cols) + static_cast<std::size_t>(col);
  }

  Dims dims_{};
  std::vector<T> data_;
};

using Rgb = std::array<std::uint8_t, 3>;

using GrayImage = Raster<std::uint8_t, GrayTag>;
/// Values are 0 (false) or 1 (true).
using BinaryMask = Raster<std::uint8_t, MaskTag>;
using RgbImage = Raster<Rgb>;
using RealImage = Raster<double>;
/// 0 is background; regions are numbered 1..count.
using LabelMap = Raster<std::int32_t>;

template <typename Tag>
std::size_t count_true(const Raster<std::uint8_t, Tag>& mask) {
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](std::uint8_t v) { return v != 0; }));
}

// ---------------------------------------------------------------------------
// Index conversion

inline std::size_t to_absolute(Pixel p, Dims dims) {
  if (!dims.contains(p.row, p.col)) throw Error(ErrorCode::bounds, "pixel outside image");
  return static_cast<std::size_t>(p.row) * static_cast<std::size_t>(dims.cols) + static_cast<std::size_t>(p.col);
}

inline Pixel to_pixel(std::size_t absolute, Dims dims) {
  if (absolute >= dims.area()) throw Error(ErrorCode::bounds, "absolute index outside image");
  const auto cols = static_cast<std::size_t>(dims.cols);
  return {static_cast<int>(absolute / cols), static_cast<int>(absolute % cols)};
}

// ---------------------------------------------------------------------------
// Geometry

inline double normalize_degrees(double deg) {
  double a = std::fmod(deg, 360.0);
  if (a < 0.0) a += 360.0;
  if (a >= 360.0) a -= 360.0;
  return a;
}

/// Smallest absolute difference between two directions, in [0, 180].
inline double angular_distance(double a, double b) {
  const double d = std::fabs(normalize_degrees(a) - normalize_degrees(b));
  return std::min(d, 360.0 - d);
}

struct SlopeAngle {
  /// Rise over run in mathematical orientation; +/-infinity for vertical lines.
  double slope = 0.0;
  double angle = 0.0;
};

inline SlopeAngle line_slope_angle(Pixel from, Pixel to) {
  if (from == to) throw Error(ErrorCode::degenerate_input, "slope of identical points");
  const double dx = to.col - from.col;
  const double dy = -(to.row - from.row);
  SlopeAngle out;
  if (dx == 0.0) {
    out.slope = dy > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
  } else {
    out.slope = dy / dx;
  }
  out.angle = normalize_degrees(std::atan2(dy, dx) * 180.0 / std::numbers::pi);
  return out;
}

/// 8-connected digital segment from `from` to `to`, endpoints included once.
inline std::vector<Pixel> index_line(Pixel from, Pixel to, Dims dims) {
  if (!dims.contains(from.row, from.col) || !dims.contains(to.row, to.col))
    throw Error(ErrorCode::bounds, "line endpoint outside image");

  std::vector<Pixel> out;
  int r = from.row;
  int c = from.col;
  const int dr = std::abs(to.row - from.row);
  const int dc = std::abs(to.col - from.col);
  const int sr = from.row < to.row ? 1 : -1;
  const int sc = from.col < to.col ? 1 : -1;
  out.reserve(static_cast<std::size_t>(std::max(dr, dc)) + 1);

  // Bresenham on the dominant axis.
  if (dc >= dr) {
    int err = 2 * dr - dc;
    for (int i = 0; i <= dc; ++i) {
      out.push_back({r, c});
      if (err > 0) {
        r += sr;
        err -= 2 * dc;
      }
      err += 2 * dr;
      c += sc;
    }
  } else {
    int err = 2 * dc - dr;
    for (int i = 0; i <= dr; ++i) {
      out.push_back({r, c});
      if (err > 0) {
        c += sc;
        err -= 2 * dr;
      }
      err += 2 * dc;
      r += sr;
    }
  }
  return out;
}

/// Ring of diameter `dimension` inside a dimension x dimension window, in
/// window coordinates, ordered counterclockwise starting at 0 degrees.
inline std::vector<Pixel> index_circumference(int dimension) {
  if (dimension < 3 || dimension % 2 == 0)
    throw Error(ErrorCode::argument, "circumference dimension must be odd and >= 3");

  const double radius = (dimension - 1) / 2.0;
  const int center = (dimension - 1) / 2;
  std::vector<Pixel> ring;
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(dimension) * static_cast<std::size_t>(dimension), 0);
  for (int deg = 0; deg < 360; ++deg) {
    const double t = deg * std::numbers::pi / 180.0;
    const int col = center + static_cast<int>(std::lround(radius * std::cos(t)));
    const int row = center - static_cast<int>(std::lround(radius * std::sin(t)));
    auto& flag = seen[static_cast<std::size_t>(row) * static_cast<std::size_t>(dimension) + static_cast<std::size_t>(col)];
    if (!flag) {
      flag = 1;
      ring.push_back({row, col});
    }
  }
  return ring;
}

/// Pixels of the 5-pixel-wide band centered on the segment from-to, clipped to
/// `dims`. A pixel belongs to the band when its perpendicular distance to the
/// segment axis is below 2.5 and its projection falls within half a pixel of
/// the segment; a degenerate segment yields the clipped disk of radius 2.5.
inline std::vector<Pixel> index_area(Pixel from, Pixel to, Dims dims) {
  if (!dims.contains(from.row, from.col) || !dims.contains(to.row, to.col))
    throw Error(ErrorCode::bounds, "area endpoint outside image");

  constexpr double half_width = 2.5;
  constexpr double eps = 1e-9;
  const int r0 = std::max(0, std::min(from.row, to.row) - 3);
  const int r1 = std::min(dims.rows - 1, std::max(from.row, to.row) + 3);
  const int c0 = std::max(0, std::min(from.col, to.col) - 3);
  const int c1 = std::min(dims.cols - 1, std::max(from.col, to.col) + 3);

  const double ux = to.col - from.col;
  const double uy = to.row - from.row;
  const double length = std::hypot(ux, uy);

  std::vector<Pixel> out;
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      const double px = c - from.col;
      const double py = r - from.row;
      bool inside = false;
      if (length == 0.0) {
        inside = std::hypot(px, py) < half_width - eps;
      } else {
        const double along = (px * ux + py * uy) / length;
        const double across = std::fabs(px * uy - py * ux) / length;
        inside = across < half_width - eps && along > -0.5 - eps && along < length + 0.5 - eps;
      }
      if (inside) out.push_back({r, c});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Labeling

inline constexpr std::array<std::pair<int, int>, 8> kNeighbours8{{
    {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}, {1, 0}, {1, 1},
}};

struct Components {
  LabelMap labels;
  /// sizes[k] is the pixel count of label k; sizes[0] is always 0.
  std::vector<std::size_t> sizes;

  std::size_t count() const { return sizes.empty() ? 0 : sizes.size() - 1; }
};

/// 8-connected labeling of the pixels for which `member(index)` holds. Labels
/// are assigned in raster order of each region's first pixel.
template <typename Pred>
Components label_where(Dims dims, Pred member) {
  Components out{LabelMap(dims, 0), {0}};
  std::vector<std::size_t> stack;
  const std::size_t n = dims.area();
  for (std::size_t start = 0; start < n; ++start) {
    if (!member(start) || out.labels[start] != 0) continue;
    const auto label = static_cast<std::int32_t>(out.sizes.size());
    std::size_t size = 0;
    out.labels[start] = label;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      ++size;
      const int r = static_cast<int>(cur / static_cast<std::size_t>(dims.cols));
      const int c = static_cast<int>(cur % static_cast<std::size_t>(dims.cols));
      for (auto [dr, dc] : kNeighbours8) {
        const int nr = r + dr;
        const int nc = c + dc;
        if (!dims.contains(nr, nc)) continue;
        const std::size_t ni = static_cast<std::size_t>(nr) * static_cast<std::size_t>(dims.cols) + static_cast<std::size_t>(nc);
        if (member(ni) && out.labels[ni] == 0) {
          out.labels[ni] = label;
          stack.push_back(ni);
        }
      }
    }
    out.sizes.push_back(size);
  }
  return out;
}

inline Components label_components(const BinaryMask& mask) {
  return label_where(mask.dims(), [&](std::size_t i) { return mask[i] != 0; });
}

}  // namespace retreg
