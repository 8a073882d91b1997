#pragma once

// Synthetic fundus-like images with known vessel trees, bifurcation ground
// truth and camera mask, plus known warps of them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "retreg/enhancement.hpp"
#include "retreg/error.hpp"
#include "retreg/random.hpp"
#include "retreg/raster.hpp"
#include "retreg/transform.hpp"

namespace retreg {

/// One straight vessel segment; children start at its end point.
struct BranchSpec {
  /// Only read for tree roots.
  PointXY start;
  /// Direction, degrees counterclockwise from +x with y pointing up on screen.
  double angle = 0.0;
  double length = 0.0;
  /// Full width at half maximum of the Gaussian cross-section, px.
  double width = 4.0;
  std::vector<BranchSpec> children;
};

struct VesselTreeSpec {
  std::uint64_t seed = 1;
  int rows = 512;
  int cols = 512;
  Polarity polarity = Polarity::dark_vessel;
  double background = 150.0;
  /// Peak deviation of a vessel centerline from the background.
  double contrast = 60.0;
  double noise_sigma = 0.0;
  /// Peak-to-peak amplitude of a left-to-right linear illumination ramp.
  double illumination_gradient = 0.0;
  /// Radius of the circular field of view; 0 disables the camera mask.
  double mask_radius = 0.0;
  std::vector<BranchSpec> trees;
};

struct GroundTruthBifurcation {
  PointXY center;
  /// Directions of every vessel leaving the node (parent first), degrees.
  std::vector<double> angles;
  std::vector<double> widths;
};

struct GroundTruth {
  std::vector<GroundTruthBifurcation> bifurcations;
  /// Set by warp(): the model that took the original phantom to this one.
  std::optional<TransformModel> transform;
};

struct Phantom {
  GrayImage image;
  GroundTruth truth;
};

inline constexpr double kMinPhantomWidth = 2.0;
inline constexpr double kMinSiblingSeparationDeg = 30.0;
inline constexpr std::uint8_t kMaskLevel = 5;
inline constexpr std::uint8_t kMaskMaxLevel = 15;

inline PointXY branch_end(const PointXY& start, const BranchSpec& b) {
  const double t = b.angle * std::numbers::pi / 180.0;
  return {start.x + b.length * std::cos(t), start.y - b.length * std::sin(t)};
}

namespace detail {

struct Segment {
  PointXY from;
  PointXY to;
  double width;
};

inline void flatten(const BranchSpec& b, const PointXY& start, std::vector<Segment>& segments, GroundTruth& truth) {
  if (!(b.width >= kMinPhantomWidth)) throw Error(ErrorCode::spec, "vessel width below 2 px");
  if (!(b.length > 0.0)) throw Error(ErrorCode::spec, "vessel length must be positive");
  const PointXY end = branch_end(start, b);
  segments.push_back({start, end, b.width});
  if (b.children.size() >= 2) {
    GroundTruthBifurcation node;
    node.center = end;
    node.angles.push_back(normalize_degrees(b.angle + 180.0));
    node.widths.push_back(b.width);
    for (const auto& c : b.children) {
      node.angles.push_back(normalize_degrees(c.angle));
      node.widths.push_back(c.width);
    }
    for (std::size_t i = 0; i < node.angles.size(); ++i)
      for (std::size_t j = i + 1; j < node.angles.size(); ++j)
        if (angular_distance(node.angles[i], node.angles[j]) < kMinSiblingSeparationDeg)
          throw Error(ErrorCode::spec, "branches meeting at a bifurcation are closer than 30 degrees");
    truth.bifurcations.push_back(std::move(node));
  }
  for (const auto& c : b.children) flatten(c, end, segments, truth);
}

inline double distance_to_segment(double x, double y, const Segment& s) {
  const double ux = s.to.x - s.from.x;
  const double uy = s.to.y - s.from.y;
  const double len2 = ux * ux + uy * uy;
  double t = len2 > 0.0 ? ((x - s.from.x) * ux + (y - s.from.y) * uy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(x - (s.from.x + t * ux), y - (s.from.y + t * uy));
}

}  // namespace detail

/// Renders the spec. Vessels are Gaussian ridges (FWHM = width) combined by
/// per-pixel maximum so junctions do not brighten; then illumination ramp,
/// Gaussian noise (xorshift64* stream, raster order), rounding, and finally
/// the camera mask outside `mask_radius`.
inline Phantom render(const VesselTreeSpec& spec) {
  if (spec.rows < 16 || spec.cols < 16) throw Error(ErrorCode::spec, "phantom must be at least 16 x 16");
  if (spec.noise_sigma < 0.0 || spec.mask_radius < 0.0) throw Error(ErrorCode::spec, "negative noise or mask radius");

  Phantom out;
  std::vector<detail::Segment> segments;
  for (const auto& root : spec.trees) detail::flatten(root, root.start, segments, out.truth);

  RealImage vessel(spec.rows, spec.cols, 0.0);
  for (const auto& s : segments) {
    const double sigma = s.width / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
    const double reach = 4.0 * sigma + 1.0;
    const int r0 = std::max(0, static_cast<int>(std::floor(std::min(s.from.y, s.to.y) - reach)));
    const int r1 = std::min(spec.rows - 1, static_cast<int>(std::ceil(std::max(s.from.y, s.to.y) + reach)));
    const int c0 = std::max(0, static_cast<int>(std::floor(std::min(s.from.x, s.to.x) - reach)));
    const int c1 = std::min(spec.cols - 1, static_cast<int>(std::ceil(std::max(s.from.x, s.to.x) + reach)));
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c) {
        const double d = detail::distance_to_segment(c, r, s);
        if (d > reach) continue;
        vessel(r, c) = std::max(vessel(r, c), std::exp(-d * d / (2.0 * sigma * sigma)));
      }
  }

  XorShift64Star rng(spec.seed);
  const double sign = spec.polarity == Polarity::bright_vessel ? 1.0 : -1.0;
  const double cx = (spec.cols - 1) / 2.0;
  const double cy = (spec.rows - 1) / 2.0;
  out.image = GrayImage(spec.rows, spec.cols, 0);
  for (int r = 0; r < spec.rows; ++r)
    for (int c = 0; c < spec.cols; ++c) {
      const double ramp = spec.illumination_gradient * (static_cast<double>(c) / (spec.cols - 1) - 0.5);
      const double noise = spec.noise_sigma > 0.0 ? spec.noise_sigma * rng.gaussian() : 0.0;
      double v = spec.background + ramp + sign * spec.contrast * vessel(r, c) + noise;
      if (spec.mask_radius > 0.0 && std::hypot(c - cx, r - cy) > spec.mask_radius)
        v = std::min<double>(kMaskLevel + noise, kMaskMaxLevel);
      out.image(r, c) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
    }
  return out;
}

/// Resamples the phantom through `model` (bilinear, onto the same frame) and
/// maps the ground truth with it. Pixels with no source stay at 0.
inline Phantom warp(const GrayImage& image, const GroundTruth& truth, const TransformModel& model) {
  // The resampler maps sensed -> reference; the warped image is the reference
  // frame of the original seen through `model`.
  auto res = resample(image, model, Interpolation::bicubic, image.dims(), CanvasPolicy::reference);
  Phantom out;
  out.image = std::move(res.image);
  out.truth = truth;
  for (auto& b : out.truth.bifurcations) b.center = apply(model, b.center);
  out.truth.transform = model;
  return out;
}

/// Similarity about the image center: p' = c + scale R(angle) (p - c) + t.
inline TransformModel centered_similarity(Dims dims, double angle_deg, double scale, double tx, double ty) {
  const double cx = (dims.cols - 1) / 2.0;
  const double cy = (dims.rows - 1) / 2.0;
  TransformModel m = TransformModel::rigid(scale, angle_deg, 0.0, 0.0);
  const Eigen::Vector2d c(cx, cy);
  const Eigen::Vector2d shift = c - m.matrix.topLeftCorner<2, 2>() * c + Eigen::Vector2d(tx, ty);
  m.matrix(0, 2) = shift.x();
  m.matrix(1, 2) = shift.y();
  return m;
}

// ---------------------------------------------------------------------------
// Random trees

struct ForestOptions {
  int rows = 1024;
  int cols = 1024;
  int target_bifurcations = 35;
  Polarity polarity = Polarity::dark_vessel;
  double noise_sigma = 0.0;
  double illumination_gradient = 0.0;
  /// Root vessel width range; children narrow from their parent down to
  /// min_width.
  double root_width_min = 4.0;
  double root_width_max = 5.0;
  double min_width = 3.0;
};

/// Grows random binary vessel trees inside the field of view, keeping every
/// bifurcation well separated from other vessels and nodes so that each one
/// is individually detectable. Deterministic in `seed`.
inline VesselTreeSpec random_forest_spec(std::uint64_t seed, const ForestOptions& opt = {}) {
  VesselTreeSpec spec;
  spec.seed = seed;
  spec.rows = opt.rows;
  spec.cols = opt.cols;
  spec.polarity = opt.polarity;
  spec.background = opt.polarity == Polarity::dark_vessel ? 150.0 : 50.0;
  spec.contrast = opt.polarity == Polarity::dark_vessel ? 70.0 : 110.0;
  spec.noise_sigma = opt.noise_sigma;
  spec.illumination_gradient = opt.illumination_gradient;
  spec.mask_radius = 0.47 * std::min(opt.rows, opt.cols);

  XorShift64Star rng(seed ^ 0xA5A5A5A5DEADBEEFULL);
  const PointXY center{(opt.cols - 1) / 2.0, (opt.rows - 1) / 2.0};
  const double usable = spec.mask_radius - 32.0;

  std::vector<detail::Segment> placed;
  std::vector<PointXY> nodes;
  int bifurcations = 0;

  const auto inside = [&](const PointXY& p) { return std::hypot(p.x - center.x, p.y - center.y) <= usable; };
  // Clearance between a new segment and everything already placed, ignoring
  // the first `skip` px next to its own start node.
  const auto clear = [&](const detail::Segment& s, double skip) {
    const double len = std::hypot(s.to.x - s.from.x, s.to.y - s.from.y);
    for (double t = skip; t <= len; t += 2.0) {
      const double x = s.from.x + (s.to.x - s.from.x) * t / len;
      const double y = s.from.y + (s.to.y - s.from.y) * t / len;
      for (const auto& o : placed)
        if (detail::distance_to_segment(x, y, o) < 26.0) return false;
    }
    for (const auto& n : nodes)
      if (std::hypot(n.x - s.to.x, n.y - s.to.y) < 50.0) return false;
    return true;
  };

  struct Pending {
    BranchSpec* branch;
    PointXY end;
    int depth;
  };

  for (int attempt = 0; attempt < 40 && bifurcations < opt.target_bifurcations; ++attempt) {
    BranchSpec root;
    const double rad = usable * std::sqrt(rng.uniform(0.0, 0.6));
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    root.start = {center.x + rad * std::cos(phi), center.y - rad * std::sin(phi)};
    root.angle = rng.uniform(0.0, 360.0);
    root.length = rng.uniform(55.0, 80.0);
    root.width = rng.uniform(opt.root_width_min, opt.root_width_max);
    const PointXY root_end = branch_end(root.start, root);
    detail::Segment seg{root.start, root_end, root.width};
    const bool near_node = std::any_of(nodes.begin(), nodes.end(), [&](const PointXY& n) {
      return std::hypot(n.x - root.start.x, n.y - root.start.y) < 50.0;
    });
    if (!inside(root.start) || !inside(root_end) || near_node || !clear(seg, 0.0)) continue;
    {
      spec.trees.push_back(root);
      placed.push_back(seg);
      nodes.push_back(root.start);
      nodes.push_back(root_end);
      std::vector<Pending> queue{{&spec.trees.back(), root_end, 0}};
      for (std::size_t qi = 0; qi < queue.size() && bifurcations < opt.target_bifurcations; ++qi) {
        Pending cur = queue[qi];
        if (cur.depth >= 4) continue;
        std::vector<BranchSpec> kids;
        std::vector<detail::Segment> kid_segments;
        for (int side = 0; side < 2; ++side) {
          for (int tries = 0; tries < 8; ++tries) {
            BranchSpec kid;
            const double turn = rng.uniform(15.0, 85.0);
            kid.angle = normalize_degrees(cur.branch->angle + (side == 0 ? turn : -turn));
            kid.length = rng.uniform(50.0, 75.0);
            kid.width = std::max(opt.min_width, cur.branch->width * rng.uniform(0.6, 0.95));
            const PointXY end = branch_end(cur.end, kid);
            detail::Segment s{cur.end, end, kid.width};
            if (!inside(end) || !clear(s, 30.0)) continue;
            bool apart = true;
            for (const auto& k : kid_segments)
              if (detail::distance_to_segment(end.x, end.y, k) < 40.0) apart = false;
            if (!apart) continue;
            kids.push_back(kid);
            kid_segments.push_back(s);
            break;
          }
        }
        // Single surviving children would only bend the vessel; keep leaves
        // simple and require a genuine split.
        if (kids.size() != 2) continue;
        if (angular_distance(kids[0].angle, kids[1].angle) < kMinSiblingSeparationDeg) continue;
        cur.branch->children = kids;
        for (std::size_t k = 0; k < 2; ++k) {
          placed.push_back(kid_segments[k]);
          nodes.push_back(kid_segments[k].to);
        }
        ++bifurcations;
        for (auto& child : cur.branch->children)
          queue.push_back({&child, branch_end(cur.end, child), cur.depth + 1});
      }
    }
  }
  return spec;
}

}  // namespace retreg
