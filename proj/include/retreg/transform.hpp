#pragma once

// Spatial transform models (translation, rigid, affine, quadratic), least
// squares estimation from correspondences, and resampling of the sensed image
// onto the reference frame.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string_view>
#include <vector>

#include "retreg/error.hpp"
#include "retreg/matching.hpp"
#include "retreg/raster.hpp"

namespace retreg {

enum class TransformKind { translation, rigid, affine, quadratic };

inline std::string_view to_string(TransformKind k) {
  switch (k) {
    case TransformKind::translation: return "translation";
    case TransformKind::rigid: return "rigid";
    case TransformKind::affine: return "affine";
    case TransformKind::quadratic: return "quadratic";
  }
  return "unknown";
}

/// Maps sensed-image coordinates (x = col, y = row) to reference coordinates.
/// Linear kinds use `matrix` (bottom row 0 0 1); the quadratic kind uses
/// `poly`, whose columns multiply the monomials x^2, xy, y^2, x, y, 1.
struct TransformModel {
  TransformKind kind = TransformKind::affine;
  Eigen::Matrix3d matrix = Eigen::Matrix3d::Identity();
  Eigen::Matrix<double, 2, 6> poly = Eigen::Matrix<double, 2, 6>::Zero();

  static TransformModel identity() { return {}; }

  static TransformModel translation(double tx, double ty) {
    TransformModel m;
    m.kind = TransformKind::translation;
    m.matrix(0, 2) = tx;
    m.matrix(1, 2) = ty;
    return m;
  }

  /// Rotation by `angle_deg` in the x-right, y-down pixel frame, uniform
  /// scaling, then translation.
  static TransformModel rigid(double scale, double angle_deg, double tx, double ty) {
    const double t = angle_deg * std::numbers::pi / 180.0;
    TransformModel m;
    m.kind = TransformKind::rigid;
    m.matrix << scale * std::cos(t), -scale * std::sin(t), tx, scale * std::sin(t), scale * std::cos(t), ty, 0, 0, 1;
    return m;
  }

  static TransformModel affine(const Eigen::Matrix<double, 2, 3>& top) {
    TransformModel m;
    m.kind = TransformKind::affine;
    m.matrix.topRows<2>() = top;
    return m;
  }

  static TransformModel quadratic(const Eigen::Matrix<double, 2, 6>& coefficients) {
    TransformModel m;
    m.kind = TransformKind::quadratic;
    m.poly = coefficients;
    return m;
  }

  bool is_linear() const { return kind != TransformKind::quadratic; }

  /// Row-major coefficients: 9 values for linear kinds, 12 for quadratic.
  std::vector<double> coefficients() const {
    std::vector<double> out;
    if (is_linear()) {
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) out.push_back(matrix(r, c));
    } else {
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 6; ++c) out.push_back(poly(r, c));
    }
    return out;
  }

  /// Linear part (x, y, 1 columns) as a 3x3 matrix; for quadratic models this
  /// drops the second-order terms.
  Eigen::Matrix3d linear_part() const {
    if (is_linear()) return matrix;
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    m.block<2, 3>(0, 0) = poly.rightCols<3>();
    return m;
  }
};

inline PointXY apply(const TransformModel& model, const PointXY& p) {
  if (model.is_linear()) {
    const Eigen::Vector3d v = model.matrix * Eigen::Vector3d(p.x, p.y, 1.0);
    return {v.x(), v.y()};
  }
  Eigen::Matrix<double, 6, 1> mono;
  mono << p.x * p.x, p.x * p.y, p.y * p.y, p.x, p.y, 1.0;
  const Eigen::Vector2d v = model.poly * mono;
  return {v.x(), v.y()};
}

/// Jacobian of the mapping at p, [[dx'/dx, dx'/dy], [dy'/dx, dy'/dy]].
inline Eigen::Matrix2d jacobian(const TransformModel& model, const PointXY& p) {
  if (model.is_linear()) return model.matrix.topLeftCorner<2, 2>();
  Eigen::Matrix2d j;
  for (int r = 0; r < 2; ++r) {
    j(r, 0) = 2.0 * model.poly(r, 0) * p.x + model.poly(r, 1) * p.y + model.poly(r, 3);
    j(r, 1) = model.poly(r, 1) * p.x + 2.0 * model.poly(r, 2) * p.y + model.poly(r, 4);
  }
  return j;
}

// ---------------------------------------------------------------------------
// Estimation

struct Correspondence {
  /// Point in the sensed image.
  PointXY source;
  /// Point in the reference image.
  PointXY target;
};

struct Estimate {
  TransformModel model;
  /// |apply(model, source) - target| per correspondence, px.
  std::vector<double> residuals;

  double mean_residual() const {
    if (residuals.empty()) return 0.0;
    double s = 0.0;
    for (double r : residuals) s += r;
    return s / static_cast<double>(residuals.size());
  }
  double max_residual() const { return residuals.empty() ? 0.0 : *std::max_element(residuals.begin(), residuals.end()); }
};

/// Design matrices with singular-value ratio below this are rejected.
inline constexpr double kMinConditionRatio = 1e-10;

namespace detail {

struct Normalization {
  double cx = 0.0;
  double cy = 0.0;
  double s = 1.0;
};

/// Centroid to origin, RMS distance sqrt(2).
inline Normalization normalization_of(std::span<const PointXY> pts) {
  Normalization n;
  for (const auto& p : pts) {
    n.cx += p.x;
    n.cy += p.y;
  }
  n.cx /= static_cast<double>(pts.size());
  n.cy /= static_cast<double>(pts.size());
  double ss = 0.0;
  for (const auto& p : pts) ss += (p.x - n.cx) * (p.x - n.cx) + (p.y - n.cy) * (p.y - n.cy);
  const double rms = std::sqrt(ss / static_cast<double>(pts.size()));
  n.s = rms > 0.0 ? std::sqrt(2.0) / rms : 1.0;
  return n;
}

/// Least-squares solution of a * x = b; throws when a is rank deficient.
inline Eigen::MatrixXd solve_checked(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(sv.size() - 1) <= kMinConditionRatio * sv(0))
    throw Error(ErrorCode::degenerate_geometry, "correspondences do not constrain the model");
  return svd.solve(b);
}

}  // namespace detail

/// Least-squares affine model.
inline TransformModel fit_affine(std::span<const Correspondence> pairs) {
  std::vector<PointXY> src;
  for (const auto& c : pairs) src.push_back(c.source);
  const auto n = detail::normalization_of(src);
  Eigen::MatrixXd a(static_cast<Eigen::Index>(pairs.size()), 3);
  Eigen::MatrixXd b(static_cast<Eigen::Index>(pairs.size()), 2);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    a.row(r) << n.s * (pairs[i].source.x - n.cx), n.s * (pairs[i].source.y - n.cy), 1.0;
    b.row(r) << pairs[i].target.x, pairs[i].target.y;
  }
  const Eigen::MatrixXd sol = detail::solve_checked(a, b);  // 3x2
  Eigen::Matrix3d norm;
  norm << n.s, 0, -n.s * n.cx, 0, n.s, -n.s * n.cy, 0, 0, 1;
  Eigen::Matrix3d normalized = Eigen::Matrix3d::Identity();
  normalized.topRows<2>() = sol.transpose();
  const Eigen::Matrix3d full = normalized * norm;
  return TransformModel::affine(full.topRows<2>());
}

/// Least-squares quadratic model. The fit runs in normalized source
/// coordinates u = s (x - cx), v = s (y - cy) and is expanded back into the
/// monomials of x and y.
inline TransformModel fit_quadratic(std::span<const Correspondence> pairs) {
  std::vector<PointXY> src;
  for (const auto& c : pairs) src.push_back(c.source);
  const auto n = detail::normalization_of(src);
  Eigen::MatrixXd a(static_cast<Eigen::Index>(pairs.size()), 6);
  Eigen::MatrixXd b(static_cast<Eigen::Index>(pairs.size()), 2);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double u = n.s * (pairs[i].source.x - n.cx);
    const double v = n.s * (pairs[i].source.y - n.cy);
    const auto r = static_cast<Eigen::Index>(i);
    a.row(r) << u * u, u * v, v * v, u, v, 1.0;
    b.row(r) << pairs[i].target.x, pairs[i].target.y;
  }
  const Eigen::MatrixXd sol = detail::solve_checked(a, b);  // 6x2, rows follow the monomials

  // u = s x - s cx, v = s y - s cy.
  const double s = n.s;
  const double ou = -s * n.cx;
  const double ov = -s * n.cy;
  Eigen::Matrix<double, 2, 6> poly;
  for (int k = 0; k < 2; ++k) {
    const double q_uu = sol(0, k), q_uv = sol(1, k), q_vv = sol(2, k), q_u = sol(3, k), q_v = sol(4, k), q_1 = sol(5, k);
    poly(k, 0) = q_uu * s * s;
    poly(k, 1) = q_uv * s * s;
    poly(k, 2) = q_vv * s * s;
    poly(k, 3) = 2.0 * q_uu * s * ou + q_uv * s * ov + q_u * s;
    poly(k, 4) = q_uv * ou * s + 2.0 * q_vv * s * ov + q_v * s;
    poly(k, 5) = q_uu * ou * ou + q_uv * ou * ov + q_vv * ov * ov + q_u * ou + q_v * ov + q_1;
  }
  return TransformModel::quadratic(poly);
}

inline std::vector<double> residuals_of(const TransformModel& model, std::span<const Correspondence> pairs) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& c : pairs) {
    const PointXY p = apply(model, c.source);
    out.push_back(std::hypot(p.x - c.target.x, p.y - c.target.y));
  }
  return out;
}

/// Model selection by inlier count: fewer than 3 cannot register, 3 to 5 give
/// an affine model, 6 or more a quadratic one.
inline Estimate estimate(std::span<const Correspondence> pairs) {
  if (pairs.size() < 3) throw Error(ErrorCode::registration_not_possible, "fewer than 3 correspondences");
  Estimate out;
  out.model = pairs.size() < 6 ? fit_affine(pairs) : fit_quadratic(pairs);
  out.residuals = residuals_of(out.model, pairs);
  return out;
}

/// Correspondences from matches: image02 (sensed) onto image01 (reference).
inline std::vector<Correspondence> correspondences_of(const MatchSet& matches) {
  std::vector<Correspondence> out;
  for (const auto& m : matches) out.push_back({m.b, m.a});
  return out;
}

// ---------------------------------------------------------------------------
// Resampling

enum class Interpolation { nearest = 1, bilinear = 2, bicubic = 3 };

inline std::string_view to_string(Interpolation i) {
  switch (i) {
    case Interpolation::nearest: return "nearest";
    case Interpolation::bilinear: return "bilinear";
    case Interpolation::bicubic: return "bicubic";
  }
  return "unknown";
}

enum class CanvasPolicy {
  /// Bounding box of the reference frame and the mapped sensed corners.
  union_box,
  /// Exactly the reference frame.
  reference,
};

struct Canvas {
  Dims dims;
  /// Position of the canvas origin in reference coordinates (x = col, y = row);
  /// the reference image's pixel (0, 0) sits at canvas (-x, -y).
  int offset_x = 0;
  int offset_y = 0;
};

template <typename T, typename Tag = void>
struct Resampled {
  Raster<T, Tag> image;
  BinaryMask valid;
  Canvas canvas;
};

inline constexpr int kInverseIterations = 20;
inline constexpr double kInverseTolerance = 1e-3;

/// Inverse mapping from reference coordinates to sensed coordinates.
class InverseMap {
 public:
  explicit InverseMap(const TransformModel& model) : model_(model) {
    const Eigen::Matrix3d lin = model.linear_part();
    if (std::fabs(lin.topLeftCorner<2, 2>().determinant()) < 1e-12)
      throw Error(ErrorCode::resample_failure, "transform is not invertible");
    inverse_linear_ = lin.inverse();
  }

  /// Sensed point for reference point q, or nothing when Newton iteration on
  /// a quadratic model does not converge.
  std::optional<PointXY> operator()(const PointXY& q) const {
    const Eigen::Vector3d g = inverse_linear_ * Eigen::Vector3d(q.x, q.y, 1.0);
    PointXY p{g.x(), g.y()};
    if (model_.is_linear()) return p;
    for (int it = 0; it < kInverseIterations; ++it) {
      const PointXY f = apply(model_, p);
      const Eigen::Vector2d r(f.x - q.x, f.y - q.y);
      if (r.norm() < kInverseTolerance) return p;
      const Eigen::Matrix2d j = jacobian(model_, p);
      if (std::fabs(j.determinant()) < 1e-12) return std::nullopt;
      const Eigen::Vector2d step = j.inverse() * r;
      p.x -= step.x();
      p.y -= step.y();
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) return std::nullopt;
    }
    const PointXY f = apply(model_, p);
    if (std::hypot(f.x - q.x, f.y - q.y) < kInverseTolerance) return p;
    return std::nullopt;
  }

 private:
  TransformModel model_;
  Eigen::Matrix3d inverse_linear_;
};

namespace detail {

inline double cubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::fabs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

inline std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0)); }

template <typename T>
struct PixelTraits;

template <>
struct PixelTraits<std::uint8_t> {
  static constexpr std::size_t channels = 1;
  static double get(std::uint8_t v, std::size_t) { return v; }
  static void set(std::uint8_t& v, std::size_t, double x) { v = to_byte(x); }
};

template <>
struct PixelTraits<Rgb> {
  static constexpr std::size_t channels = 3;
  static double get(const Rgb& v, std::size_t ch) { return v[ch]; }
  static void set(Rgb& v, std::size_t ch, double x) { v[ch] = to_byte(x); }
};

template <typename T, typename Tag>
T sample(const Raster<T, Tag>& src, double x, double y, Interpolation mode) {
  using Tr = PixelTraits<T>;
  const auto at = [&](int r, int c) -> const T& {
    return src(std::clamp(r, 0, src.rows() - 1), std::clamp(c, 0, src.cols() - 1));
  };
  if (mode == Interpolation::nearest) return at(static_cast<int>(std::floor(y + 0.5)), static_cast<int>(std::floor(x + 0.5)));

  T out{};
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0;
  const double fy = y - y0;
  for (std::size_t ch = 0; ch < Tr::channels; ++ch) {
    double v = 0.0;
    if (mode == Interpolation::bilinear) {
      v = (1 - fy) * ((1 - fx) * Tr::get(at(y0, x0), ch) + fx * Tr::get(at(y0, x0 + 1), ch)) +
          fy * ((1 - fx) * Tr::get(at(y0 + 1, x0), ch) + fx * Tr::get(at(y0 + 1, x0 + 1), ch));
    } else {
      for (int m = -1; m <= 2; ++m) {
        const double wy = cubic_weight(fy - m);
        for (int k = -1; k <= 2; ++k) v += wy * cubic_weight(fx - k) * Tr::get(at(y0 + m, x0 + k), ch);
      }
    }
    Tr::set(out, ch, v);
  }
  return out;
}

}  // namespace detail

/// Canvas covering the reference frame plus the forward-mapped sensed corners.
inline Canvas union_canvas(const TransformModel& model, Dims sensed, Dims reference) {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = reference.cols - 1;
  double y1 = reference.rows - 1;
  const std::array<PointXY, 4> corners{{{0.0, 0.0},
                                        {static_cast<double>(sensed.cols - 1), 0.0},
                                        {0.0, static_cast<double>(sensed.rows - 1)},
                                        {static_cast<double>(sensed.cols - 1), static_cast<double>(sensed.rows - 1)}}};
  for (const auto& c : corners) {
    const PointXY p = apply(model, c);
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw Error(ErrorCode::resample_failure, "corner maps to infinity");
    x0 = std::min(x0, p.x);
    y0 = std::min(y0, p.y);
    x1 = std::max(x1, p.x);
    y1 = std::max(y1, p.y);
  }
  Canvas canvas;
  canvas.offset_x = static_cast<int>(std::floor(x0));
  canvas.offset_y = static_cast<int>(std::floor(y0));
  const double cols = std::ceil(x1) - canvas.offset_x + 1;
  const double rows = std::ceil(y1) - canvas.offset_y + 1;
  // A canvas this much larger than the reference means the model flings the
  // sensed image away; treat it as a failed registration.
  if (cols * rows > 16.0 * static_cast<double>(reference.area()))
    throw Error(ErrorCode::resample_failure, "mapped sensed image is far larger than the reference");
  canvas.dims = {static_cast<int>(rows), static_cast<int>(cols)};
  return canvas;
}

/// Inverse-maps every canvas pixel into the sensed image and samples it.
/// Pixels whose source lies outside [0, cols-1] x [0, rows-1] (or whose
/// inverse does not converge) stay zero and are flagged invalid.
template <typename T, typename Tag>
Resampled<T, Tag> resample(const Raster<T, Tag>& sensed, const TransformModel& model, Interpolation mode, Dims reference,
                      CanvasPolicy policy = CanvasPolicy::union_box) {
  const InverseMap inverse(model);
  Canvas canvas = policy == CanvasPolicy::union_box ? union_canvas(model, sensed.dims(), reference) : Canvas{reference, 0, 0};
  Resampled<T, Tag> out{Raster<T, Tag>(canvas.dims, T{}), BinaryMask(canvas.dims, 0), canvas};
  const double max_x = sensed.cols() - 1;
  const double max_y = sensed.rows() - 1;
  constexpr double eps = 1e-9;
  for (int r = 0; r < canvas.dims.rows; ++r) {
    for (int c = 0; c < canvas.dims.cols; ++c) {
      const auto p = inverse({static_cast<double>(c + canvas.offset_x), static_cast<double>(r + canvas.offset_y)});
      if (!p || p->x < -eps || p->y < -eps || p->x > max_x + eps || p->y > max_y + eps) continue;
      out.image(r, c) = detail::sample(sensed, std::clamp(p->x, 0.0, max_x), std::clamp(p->y, 0.0, max_y), mode);
      out.valid(r, c) = 1;
    }
  }
  return out;
}

}  // namespace retreg
