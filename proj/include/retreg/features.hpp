#pragma once

// Bifurcation (y-feature) detection: skeleton, candidate pixels, candidate
// clustering, density filtering and ring-profile validation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string_view>
#include <vector>

#include "retreg/error.hpp"
#include "retreg/raster.hpp"

namespace retreg {

/// Side of the square region analysed around each bifurcation.
inline constexpr int kRegionDimension = 41;
inline constexpr int kRegionRadius = (kRegionDimension - 1) / 2;
inline constexpr double kRingThresholdFactor = 1.3;
inline constexpr double kMinBranchSeparationDeg = 25.0;
/// Longest end branch removed as a thinning spur.
inline constexpr int kMaxSpurLength = 6;

// ---------------------------------------------------------------------------
// Thinning

namespace detail {

/// Neighbourhood bits x1..x8 counterclockwise from east, as in kNeighbours8.
inline std::array<int, 8> neighbourhood(const BinaryMask& m, int r, int c) {
  std::array<int, 8> x{};
  for (std::size_t k = 0; k < 8; ++k) {
    const auto [dr, dc] = kNeighbours8[k];
    x[k] = m.contains(r + dr, c + dc) && m(r + dr, c + dc) ? 1 : 0;
  }
  return x;
}

/// Yokoi connectivity number for 8-connected foreground. A foreground pixel
/// is simple (deletable without changing topology) iff this equals 1.
inline int connectivity_number(const std::array<int, 8>& x) {
  int n = 0;
  for (std::size_t k = 0; k < 8; k += 2) {
    const int a = 1 - x[k];
    const int b = 1 - x[(k + 1) % 8];
    const int c = 1 - x[(k + 2) % 8];
    n += a - a * b * c;
  }
  return n;
}

/// Two-subiteration parallel thinning (Lam, Lee and Suen's algorithm A1, the
/// usual stock "thin" operator). Each subiteration marks deletable pixels on a
/// snapshot and removes them together; they alternate until stable.
inline BinaryMask parallel_thin(const BinaryMask& mask) {
  BinaryMask skel = mask;
  std::vector<std::size_t> doomed;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int sub = 0; sub < 2; ++sub) {
      doomed.clear();
      for (int r = 0; r < skel.rows(); ++r) {
        for (int c = 0; c < skel.cols(); ++c) {
          if (!skel(r, c)) continue;
          const auto x = neighbourhood(skel, r, c);
          const auto at = [&](int k) { return x[static_cast<std::size_t>((k - 1) % 8)]; };
          int crossings = 0;
          int n1 = 0;
          int n2 = 0;
          for (int i = 1; i <= 4; ++i) {
            if (!at(2 * i - 1) && (at(2 * i) || at(2 * i + 1))) ++crossings;
            n1 += at(2 * i - 1) | at(2 * i);
            n2 += at(2 * i) | at(2 * i + 1);
          }
          if (crossings != 1) continue;
          const int n = std::min(n1, n2);
          if (n < 2 || n > 3) continue;
          const bool g3 = sub == 0 ? ((at(2) | at(3) | !at(8)) & at(1)) == 0 : ((at(6) | at(7) | !at(4)) & at(5)) == 0;
          if (g3) doomed.push_back(static_cast<std::size_t>(r) * static_cast<std::size_t>(skel.cols()) + static_cast<std::size_t>(c));
        }
      }
      for (auto i : doomed) skel[i] = 0;
      if (!doomed.empty()) changed = true;
    }
  }
  return skel;
}

/// Sequential clean-up: border pixels that are simple and not end points are
/// removed one at a time until none is left, which strips the redundant
/// staircase pixels parallel thinning can leave behind.
inline void remove_simple_points(BinaryMask& skel) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (int r = 0; r < skel.rows(); ++r) {
      for (int c = 0; c < skel.cols(); ++c) {
        if (!skel(r, c)) continue;
        const auto x = neighbourhood(skel, r, c);
        // Only pixels with a 4-neighbour in the background are on the border.
        if (x[0] && x[2] && x[4] && x[6]) continue;
        if (std::accumulate(x.begin(), x.end(), 0) < 2) continue;
        if (connectivity_number(x) != 1) continue;
        skel(r, c) = 0;
        changed = true;
      }
    }
  }
}

}  // namespace detail

/// Parallel thinning to a stable result, then sequential removal of any
/// remaining simple non-end pixels so the skeleton is one pixel wide. Every
/// deletion preserves 8-connected topology.
inline BinaryMask skeletonize(const BinaryMask& mask) {
  BinaryMask skel = detail::parallel_thin(mask);
  detail::remove_simple_points(skel);
  return skel;
}

inline int skeleton_neighbours(const BinaryMask& skel, int r, int c) {
  const auto x = detail::neighbourhood(skel, r, c);
  return std::accumulate(x.begin(), x.end(), 0);
}

/// Removes end branches of at most `max_length` pixels that run from an end
/// point into a junction. Such spurs come from bumps on the mask boundary,
/// and each one would otherwise add a candidate next to the real junction.
/// Branches that end without meeting a junction are kept.
inline BinaryMask prune_spurs(const BinaryMask& skeleton, int max_length) {
  BinaryMask out = skeleton;
  for (int r = 0; r < skeleton.rows(); ++r) {
    for (int c = 0; c < skeleton.cols(); ++c) {
      if (!skeleton(r, c) || skeleton_neighbours(skeleton, r, c) != 1) continue;
      std::vector<Pixel> path{{r, c}};
      Pixel prev{-1, -1};
      Pixel cur{r, c};
      bool junction = false;
      while (static_cast<int>(path.size()) <= max_length) {
        std::optional<Pixel> next;
        for (const auto& [dr, dc] : kNeighbours8) {
          const Pixel p{cur.row + dr, cur.col + dc};
          if (skeleton.contains(p.row, p.col) && skeleton(p.row, p.col) && p != prev && p != cur) {
            next = p;
            break;
          }
        }
        if (!next) break;
        if (skeleton_neighbours(skeleton, next->row, next->col) >= 3) {
          junction = true;
          break;
        }
        prev = cur;
        cur = *next;
        path.push_back(cur);
      }
      if (junction)
        for (const Pixel p : path) out(p.row, p.col) = 0;
    }
  }
  detail::remove_simple_points(out);
  return out;
}

/// Skeleton pixels with three or more skeleton pixels among their 8 neighbours.
inline BinaryMask bifurcation_candidates(const BinaryMask& skeleton) {
  BinaryMask out(skeleton.dims(), 0);
  for (int r = 0; r < skeleton.rows(); ++r)
    for (int c = 0; c < skeleton.cols(); ++c)
      if (skeleton(r, c) && skeleton_neighbours(skeleton, r, c) >= 3) out(r, c) = 1;
  return out;
}

/// One point per 8-connected cluster of candidates: the centroid, each
/// coordinate rounded half up. Sorted by absolute index.
inline std::vector<Pixel> cluster_candidates(const BinaryMask& candidates) {
  const Components comps = label_components(candidates);
  std::vector<double> sum_r(comps.sizes.size(), 0.0);
  std::vector<double> sum_c(comps.sizes.size(), 0.0);
  for (int r = 0; r < candidates.rows(); ++r)
    for (int c = 0; c < candidates.cols(); ++c)
      if (const auto l = static_cast<std::size_t>(comps.labels(r, c)); l != 0) {
        sum_r[l] += r;
        sum_c[l] += c;
      }
  std::vector<Pixel> out;
  for (std::size_t l = 1; l < comps.sizes.size(); ++l) {
    const double n = static_cast<double>(comps.sizes[l]);
    out.push_back({static_cast<int>(std::floor(sum_r[l] / n + 0.5)), static_cast<int>(std::floor(sum_c[l] / n + 0.5))});
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Drops every point that shares a window x window square (centered on any
/// point) holding more than two points. Survivors keep their input order.
inline std::vector<Pixel> density_filter(const std::vector<Pixel>& points, int window = kRegionDimension) {
  const int half = window / 2;
  std::vector<std::uint8_t> drop(points.size(), 0);
  std::vector<std::size_t> inside;
  for (std::size_t i = 0; i < points.size(); ++i) {
    inside.clear();
    for (std::size_t j = 0; j < points.size(); ++j)
      if (std::abs(points[j].row - points[i].row) <= half && std::abs(points[j].col - points[i].col) <= half) inside.push_back(j);
    if (inside.size() > 2)
      for (auto j : inside) drop[j] = 1;
  }
  std::vector<Pixel> out;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (!drop[i]) out.push_back(points[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Validation

struct BifurcationFeature {
  /// Bifurcation center in full-image coordinates.
  Pixel center;
  /// Branch positions on the radius-20 ring, in region coordinates, ordered
  /// by angle.
  std::array<Pixel, 3> branches{};
  /// 41 x 41 crop of the enhanced image centered on `center`.
  GrayImage region;
  /// Dimensions of the source image.
  Dims image_dims;

  Pixel branch_in_image(std::size_t k) const {
    return {center.row + branches[k].row - kRegionRadius, center.col + branches[k].col - kRegionRadius};
  }
};

enum class RejectCause { none, border, too_few_arcs, too_few_after_separation };

inline std::string_view to_string(RejectCause cause) {
  switch (cause) {
    case RejectCause::none: return "none";
    case RejectCause::border: return "border";
    case RejectCause::too_few_arcs: return "too-few-arcs";
    case RejectCause::too_few_after_separation: return "too-few-after-separation";
  }
  return "unknown";
}

/// Result of validating one candidate, with the ring-profile diagnostics that
/// drive the decision.
struct Validation {
  std::optional<BifurcationFeature> feature;
  RejectCause cause = RejectCause::none;
  std::vector<double> profile;
  double threshold = 0.0;
  /// Number of maximal above-threshold arcs on the ring.
  std::size_t arcs = 0;
  /// Peaks surviving the angular separation rule, before the 3-branch cut.
  std::size_t separated = 0;

  bool accepted() const { return feature.has_value(); }
};

inline const std::vector<Pixel>& region_ring() {
  static const std::vector<Pixel> ring = index_circumference(kRegionDimension);
  return ring;
}

inline GrayImage crop_region(const GrayImage& image, Pixel center) {
  GrayImage region(kRegionDimension, kRegionDimension, 0);
  for (int r = 0; r < kRegionDimension; ++r)
    for (int c = 0; c < kRegionDimension; ++c)
      region(r, c) = image(center.row + r - kRegionRadius, center.col + c - kRegionRadius);
  return region;
}

/// Sum of region intensities over the 5-pixel-wide band from the region
/// center to `branch`.
inline double branch_band_sum(const GrayImage& region, Pixel branch) {
  double sum = 0.0;
  for (Pixel p : index_area({kRegionRadius, kRegionRadius}, branch, region.dims())) sum += region(p);
  return sum;
}

inline Validation validate_bifurcation(const GrayImage& enhanced, Pixel point) {
  Validation out;
  if (point.row < kRegionRadius || point.col < kRegionRadius || point.row >= enhanced.rows() - kRegionRadius ||
      point.col >= enhanced.cols() - kRegionRadius) {
    out.cause = RejectCause::border;
    return out;
  }

  GrayImage region = crop_region(enhanced, point);
  const auto& ring = region_ring();
  const std::size_t n = ring.size();
  out.profile.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.profile[i] = region(ring[i]);
  const double mean = std::accumulate(out.profile.begin(), out.profile.end(), 0.0) / static_cast<double>(n);
  out.threshold = kRingThresholdFactor * mean;

  // Maximal above-threshold runs on the circular profile.
  std::vector<std::uint8_t> above(n);
  for (std::size_t i = 0; i < n; ++i) above[i] = out.profile[i] > out.threshold ? 1 : 0;
  struct Peak {
    std::size_t ring_index;
    double value;
    std::size_t order;
  };
  std::vector<Peak> peaks;
  const auto all_above = std::all_of(above.begin(), above.end(), [](auto v) { return v != 0; });
  if (all_above) {
    const auto it = std::max_element(out.profile.begin(), out.profile.end());
    peaks.push_back({static_cast<std::size_t>(it - out.profile.begin()), *it, 0});
  } else {
    // Start scanning just after a below-threshold sample so a run crossing
    // the 0-degree seam is seen as one arc.
    std::size_t start = 0;
    while (above[start]) ++start;
    for (std::size_t k = 1; k <= n; ++k) {
      const std::size_t i = (start + k) % n;
      if (!above[i]) continue;
      Peak best{i, out.profile[i], peaks.size()};
      std::size_t j = k;
      while (j <= n && above[(start + j) % n]) {
        const std::size_t idx = (start + j) % n;
        if (out.profile[idx] > best.value) best = {idx, out.profile[idx], peaks.size()};
        ++j;
      }
      peaks.push_back(best);
      k = j;
    }
  }
  out.arcs = peaks.size();
  if (peaks.size() < 3) {
    out.cause = RejectCause::too_few_arcs;
    return out;
  }

  // Angular non-maximum suppression: stronger peaks first, equal peaks in
  // angular order.
  const Pixel center{kRegionRadius, kRegionRadius};
  const auto angle_of = [&](std::size_t ring_index) { return line_slope_angle(center, ring[ring_index]).angle; };
  std::vector<Peak> order = peaks;
  std::stable_sort(order.begin(), order.end(), [](const Peak& a, const Peak& b) {
    if (a.value != b.value) return a.value > b.value;
    return a.ring_index < b.ring_index;
  });
  std::vector<Peak> kept;
  for (const Peak& p : order) {
    const bool clear = std::all_of(kept.begin(), kept.end(), [&](const Peak& q) {
      return angular_distance(angle_of(p.ring_index), angle_of(q.ring_index)) >= kMinBranchSeparationDeg;
    });
    if (clear) kept.push_back(p);
  }
  out.separated = kept.size();
  if (kept.size() < 3) {
    out.cause = RejectCause::too_few_after_separation;
    return out;
  }

  if (kept.size() > 3) {
    std::vector<std::pair<double, std::size_t>> scored;
    for (const Peak& p : kept) scored.emplace_back(branch_band_sum(region, ring[p.ring_index]), p.ring_index);
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    kept.clear();
    for (std::size_t k = 0; k < 3; ++k) kept.push_back({scored[k].second, 0.0, 0});
  }
  std::sort(kept.begin(), kept.end(), [](const Peak& a, const Peak& b) { return a.ring_index < b.ring_index; });

  BifurcationFeature feature;
  feature.center = point;
  for (std::size_t k = 0; k < 3; ++k) feature.branches[k] = ring[kept[k].ring_index];
  feature.region = std::move(region);
  feature.image_dims = enhanced.dims();
  out.feature = std::move(feature);
  return out;
}

/// Candidate detection, clustering, density filtering and validation of a
/// vessel mask against its enhanced image. Features are sorted by the
/// absolute index of their centers.
struct FeatureTrace {
  BinaryMask skeleton;
  BinaryMask candidates;
  std::vector<Pixel> clustered;
  std::vector<Pixel> dense_filtered;
  std::vector<BifurcationFeature> features;
};

inline FeatureTrace find_bifurcations(const BinaryMask& vessels, const GrayImage& enhanced) {
  if (vessels.dims() != enhanced.dims()) throw Error(ErrorCode::input, "vessel mask and enhanced image differ in shape");
  FeatureTrace trace;
  trace.skeleton = prune_spurs(skeletonize(vessels), kMaxSpurLength);
  trace.candidates = bifurcation_candidates(trace.skeleton);
  trace.clustered = cluster_candidates(trace.candidates);
  trace.dense_filtered = density_filter(trace.clustered);
  for (const Pixel p : trace.dense_filtered) {
    Validation v = validate_bifurcation(enhanced, p);
    if (v.feature) trace.features.push_back(std::move(*v.feature));
  }
  std::sort(trace.features.begin(), trace.features.end(),
            [](const BifurcationFeature& a, const BifurcationFeature& b) { return a.center < b.center; });
  return trace;
}

}  // namespace retreg
