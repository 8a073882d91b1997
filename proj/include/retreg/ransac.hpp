#pragma once

// Robust inlier selection: plane homographies fitted by the normalized DLT on
// random minimal samples, best consensus kept, then refitted by least squares.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "retreg/error.hpp"
#include "retreg/matching.hpp"
#include "retreg/random.hpp"

namespace retreg {

struct RansacParams {
  /// Reprojection error below which a pair counts as an inlier, px.
  double inlier_threshold = 3.0;
  int iterations = 2000;
  std::uint64_t seed = 42;
};

using Homography = Eigen::Matrix3d;

namespace detail {

/// Similarity moving the centroid to the origin with RMS distance sqrt(2).
inline Eigen::Matrix3d normalizing_similarity(std::span<const PointXY> pts) {
  double cx = 0.0;
  double cy = 0.0;
  for (const auto& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= static_cast<double>(pts.size());
  cy /= static_cast<double>(pts.size());
  double ss = 0.0;
  for (const auto& p : pts) ss += (p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy);
  const double rms = std::sqrt(ss / static_cast<double>(pts.size()));
  const double s = rms > 0.0 ? std::sqrt(2.0) / rms : 1.0;
  Eigen::Matrix3d t;
  t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
  return t;
}

inline bool collinear(const PointXY& a, const PointXY& b, const PointXY& c, double tol) {
  const double cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
  const double scale = std::max({std::hypot(b.x - a.x, b.y - a.y), std::hypot(c.x - a.x, c.y - a.y), 1.0});
  return std::fabs(cross) <= tol * scale;
}

/// True when any three of the four points are (nearly) collinear.
inline bool degenerate_quad(const std::array<PointXY, 4>& p) {
  constexpr double tol = 1e-3;
  return collinear(p[0], p[1], p[2], tol) || collinear(p[0], p[1], p[3], tol) || collinear(p[0], p[2], p[3], tol) ||
         collinear(p[1], p[2], p[3], tol);
}

}  // namespace detail

/// Normalized direct linear transform mapping `from` onto `to` (least squares
/// in the algebraic sense for more than four pairs).
inline std::optional<Homography> fit_homography(std::span<const PointXY> from, std::span<const PointXY> to) {
  const std::size_t n = from.size();
  if (n < 4 || to.size() != n) return std::nullopt;
  const Eigen::Matrix3d tf = detail::normalizing_similarity(from);
  const Eigen::Matrix3d tt = detail::normalizing_similarity(to);
  Eigen::MatrixXd a(2 * static_cast<Eigen::Index>(n), 9);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d p = tf * Eigen::Vector3d(from[i].x, from[i].y, 1.0);
    const Eigen::Vector3d q = tt * Eigen::Vector3d(to[i].x, to[i].y, 1.0);
    const auto r = 2 * static_cast<Eigen::Index>(i);
    a.row(r) << 0, 0, 0, -p.x(), -p.y(), -1, q.y() * p.x(), q.y() * p.y(), q.y();
    a.row(r + 1) << p.x(), p.y(), 1, 0, 0, 0, -q.x() * p.x(), -q.x() * p.y(), -q.x();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Homography hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  Homography out = tt.inverse() * hn * tf;
  if (!out.allFinite() || std::fabs(out(2, 2)) < 1e-12) return std::nullopt;
  out /= out(2, 2);
  if (std::fabs(out.determinant()) < 1e-12) return std::nullopt;
  return out;
}

inline PointXY apply_homography(const Homography& h, const PointXY& p) {
  const Eigen::Vector3d v = h * Eigen::Vector3d(p.x, p.y, 1.0);
  if (std::fabs(v.z()) < 1e-15) return {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  return {v.x() / v.z(), v.y() / v.z()};
}

struct RansacResult {
  MatchSet inliers;
  Homography model = Homography::Identity();
  /// Iteration that produced the winning sample.
  int best_iteration = -1;
};

/// Homography consensus over match pairs (image02 point -> image01 point).
/// The best sample is the one with most inliers; equal counts prefer the
/// smaller summed reprojection error, then the earlier sample. Its consensus
/// set is refitted once and kept if the refit does not lose pairs.
inline RansacResult ransac_inliers(const MatchSet& matches, const RansacParams& params = {}) {
  const std::size_t n = matches.size();
  if (n < 4) throw Error(ErrorCode::insufficient_matches, "homography consensus needs at least 4 matches");
  if (params.iterations < 1) throw Error(ErrorCode::argument, "RANSAC iterations must be >= 1");

  std::vector<PointXY> from(n);
  std::vector<PointXY> to(n);
  for (std::size_t i = 0; i < n; ++i) {
    from[i] = matches[i].b;
    to[i] = matches[i].a;
  }
  // Inlier indices and their summed reprojection error.
  const auto consensus = [&](const Homography& h) {
    std::pair<std::vector<std::size_t>, double> in{{}, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      const PointXY p = apply_homography(h, from[i]);
      const double e = std::hypot(p.x - to[i].x, p.y - to[i].y);
      if (e < params.inlier_threshold) {
        in.first.push_back(i);
        in.second += e;
      }
    }
    return in;
  };

  XorShift64Star rng(params.seed);
  std::vector<std::size_t> best;
  double best_error = 0.0;
  RansacResult result;
  for (int it = 0; it < params.iterations; ++it) {
    std::array<std::size_t, 4> idx{};
    for (std::size_t k = 0; k < 4; ++k) {
      bool fresh = false;
      while (!fresh) {
        idx[k] = static_cast<std::size_t>(rng.below(n));
        fresh = std::find(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx[k]) == idx.begin() + static_cast<std::ptrdiff_t>(k);
      }
    }
    std::array<PointXY, 4> sf{};
    std::array<PointXY, 4> st{};
    for (std::size_t k = 0; k < 4; ++k) {
      sf[k] = from[idx[k]];
      st[k] = to[idx[k]];
    }
    if (detail::degenerate_quad(sf) || detail::degenerate_quad(st)) continue;
    const auto h = fit_homography(sf, st);
    if (!h) continue;
    auto [in, error] = consensus(*h);
    if (in.size() > best.size() || (in.size() == best.size() && !best.empty() && error < best_error)) {
      best = std::move(in);
      best_error = error;
      result.model = *h;
      result.best_iteration = it;
    }
  }
  if (best.size() < 4) throw Error(ErrorCode::degenerate_matches, "no homography is supported by 4 or more matches");

  std::vector<PointXY> bf;
  std::vector<PointXY> bt;
  for (auto i : best) {
    bf.push_back(from[i]);
    bt.push_back(to[i]);
  }
  if (const auto refit = fit_homography(bf, bt)) {
    auto in = consensus(*refit).first;
    if (in.size() >= best.size()) {
      best = std::move(in);
      result.model = *refit;
    }
  }
  for (auto i : best) result.inliers.push_back(matches[i]);
  return result;
}

}  // namespace retreg
