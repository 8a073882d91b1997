#pragma once

// Feature descriptors and initial correspondences: entropy and mutual
// information of bifurcation regions, branch slope classes and widths, the
// four-component invariant descriptor, and nearest-neighbour matching.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string_view>
#include <vector>

#include "retreg/error.hpp"
#include "retreg/features.hpp"
#include "retreg/segmentation.hpp"
#include "retreg/raster.hpp"

namespace retreg {

// ---------------------------------------------------------------------------
// Entropy and mutual information

inline double global_entropy(const GrayImage& image) {
  std::array<std::size_t, 256> hist{};
  for (auto v : image) ++hist[v];
  const double n = static_cast<double>(image.size());
  double h = 0.0;
  for (auto count : hist) h += entropy_term(static_cast<double>(count) / n);
  return h;
}

/// H(A) + H(B) - H(A, B) over full 256-level marginal and joint histograms of
/// co-located pixels.
inline double mutual_information(const GrayImage& a, const GrayImage& b) {
  if (a.dims() != b.dims()) throw Error(ErrorCode::input, "mutual information of differently shaped images");
  std::array<std::size_t, 256> ha{};
  std::array<std::size_t, 256> hb{};
  std::vector<std::size_t> joint(256 * 256, 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++ha[a[i]];
    ++hb[b[i]];
    ++joint[static_cast<std::size_t>(a[i]) * 256 + b[i]];
  }
  const double n = static_cast<double>(a.size());
  double h_a = 0.0;
  double h_b = 0.0;
  double h_ab = 0.0;
  for (std::size_t k = 0; k < 256; ++k) {
    h_a += entropy_term(static_cast<double>(ha[k]) / n);
    h_b += entropy_term(static_cast<double>(hb[k]) / n);
  }
  for (auto count : joint)
    if (count) h_ab += entropy_term(static_cast<double>(count) / n);
  return std::max(0.0, h_a + h_b - h_ab);
}

// ---------------------------------------------------------------------------
// Match sets

struct PointXY {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const PointXY&, const PointXY&) = default;
};

inline PointXY to_xy(Pixel p) { return {static_cast<double>(p.col), static_cast<double>(p.row)}; }

struct Match {
  std::size_t index_a = 0;
  std::size_t index_b = 0;
  /// Feature center in image01 (reference).
  PointXY a;
  /// Feature center in image02 (sensed).
  PointXY b;
  /// Mutual information (approach 1) or descriptor distance (approach 2).
  double score = 0.0;
  friend bool operator==(const Match&, const Match&) = default;
};

using MatchSet = std::vector<Match>;

enum class MatchFilter { baseline, mutual };
enum class InvariantMetric { raw, zscore };

inline std::string_view to_string(MatchFilter f) { return f == MatchFilter::baseline ? "baseline" : "mutual"; }
inline std::string_view to_string(InvariantMetric m) { return m == InvariantMetric::raw ? "raw" : "zscore"; }

namespace detail {

/// Best target per source under `better(i, j, k)` (is k better than j for i),
/// optionally keeping only mutually-best pairs.
template <typename Score, typename Better>
MatchSet best_matches(std::size_t na, std::size_t nb, Score score, Better better, MatchFilter filter,
                      const std::vector<PointXY>& pa, const std::vector<PointXY>& pb) {
  std::vector<std::size_t> best_b(na, 0);
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 1; j < nb; ++j)
      if (better(i, best_b[i], j)) best_b[i] = j;

  std::vector<std::size_t> best_a;
  if (filter == MatchFilter::mutual) {
    best_a.assign(nb, 0);
    // Reverse direction: best source for each target, same criterion with
    // roles swapped.
    for (std::size_t j = 0; j < nb; ++j)
      for (std::size_t i = 1; i < na; ++i)
        if (better.reverse(j, best_a[j], i)) best_a[j] = i;
  }

  MatchSet out;
  for (std::size_t i = 0; i < na; ++i) {
    const std::size_t j = best_b[i];
    if (filter == MatchFilter::mutual && best_a[j] != i) continue;
    out.push_back({i, j, pa[i], pb[j], score(i, j)});
  }
  return out;
}

}  // namespace detail

/// Approach 1: pair each image01 feature with the image02 feature whose
/// bifurcation region shares the most mutual information. Equal scores
/// prefer the lower joint entropy, then the lower index.
inline MatchSet match_by_mi(const std::vector<BifurcationFeature>& feats_a, const std::vector<BifurcationFeature>& feats_b,
                            MatchFilter filter = MatchFilter::baseline) {
  if (feats_a.empty() || feats_b.empty()) throw Error(ErrorCode::no_features, "mutual-information matching needs features on both sides");
  const std::size_t na = feats_a.size();
  const std::size_t nb = feats_b.size();
  std::vector<double> ea(na);
  std::vector<double> eb(nb);
  for (std::size_t i = 0; i < na; ++i) ea[i] = global_entropy(feats_a[i].region);
  for (std::size_t j = 0; j < nb; ++j) eb[j] = global_entropy(feats_b[j].region);
  std::vector<double> mi(na * nb);
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < nb; ++j) mi[i * nb + j] = mutual_information(feats_a[i].region, feats_b[j].region);

  constexpr double tie = 1e-12;
  const auto mi_at = [&](std::size_t i, std::size_t j) { return mi[i * nb + j]; };
  const auto joint = [&](std::size_t i, std::size_t j) { return ea[i] + eb[j] - mi_at(i, j); };
  struct Better {
    decltype(mi_at)& m;
    decltype(joint)& h;
    bool operator()(std::size_t i, std::size_t cur, std::size_t cand) const {
      if (m(i, cand) > m(i, cur) + tie) return true;
      if (m(i, cand) < m(i, cur) - tie) return false;
      return h(i, cand) < h(i, cur) - tie;
    }
    bool reverse(std::size_t j, std::size_t cur, std::size_t cand) const {
      if (m(cand, j) > m(cur, j) + tie) return true;
      if (m(cand, j) < m(cur, j) - tie) return false;
      return h(cand, j) < h(cur, j) - tie;
    }
  };

  std::vector<PointXY> pa;
  std::vector<PointXY> pb;
  for (const auto& f : feats_a) pa.push_back(to_xy(f.center));
  for (const auto& f : feats_b) pb.push_back(to_xy(f.center));
  return detail::best_matches(na, nb, mi_at, Better{mi_at, joint}, filter, pa, pb);
}

// ---------------------------------------------------------------------------
// Branch geometry

/// Eight 45-degree bins; class 1 is centered on 0 degrees and bins are
/// half-open (lo, hi].
inline int slope_class_of(double angle_deg) {
  const double a = normalize_degrees(angle_deg);
  if (a > 337.5 || a <= 22.5) return 1;
  return static_cast<int>(std::ceil((a - 22.5) / 45.0)) + 1;
}

struct SlopeClass {
  int cls = 1;
  double angle = 0.0;
};

inline bool on_region_ring(Pixel p) {
  const auto& ring = region_ring();
  return std::find(ring.begin(), ring.end(), p) != ring.end();
}

inline std::array<SlopeClass, 3> slope_classes(const std::array<Pixel, 3>& branches, int region_dimension = kRegionDimension) {
  if (region_dimension != kRegionDimension) throw Error(ErrorCode::argument, "only 41 x 41 bifurcation regions are supported");
  const Pixel center{kRegionRadius, kRegionRadius};
  std::array<SlopeClass, 3> out{};
  for (std::size_t k = 0; k < 3; ++k) {
    if (!on_region_ring(branches[k])) throw Error(ErrorCode::input, "branch position is not on the region ring");
    const double angle = line_slope_angle(center, branches[k]).angle;
    out[k] = {slope_class_of(angle), angle};
  }
  return out;
}

/// Center-to-branch line pixels skipped before cross-sections are sampled.
inline constexpr std::size_t kWidthSkippedPixels = 5;
inline constexpr int kProfileLength = 10;

/// Cross-section step, in (row, col), perpendicular to a branch of the given
/// slope class. Diagonal classes step diagonally, one step being sqrt(2) px.
inline std::pair<int, int> perpendicular_step(int slope_class) {
  switch (slope_class) {
    case 1:
    case 5: return {1, 0};
    case 3:
    case 7: return {0, 1};
    case 2:
    case 6: return {1, 1};
    default: return {1, -1};
  }
}

/// Branch width from cross-section profiles of the bifurcation region. Each
/// profile spans 10 pixels perpendicular to the branch; its width is the
/// distance from the strongest rising edge to the strongest falling edge.
/// The rounded mean over profiles is scaled by sqrt(2) for diagonal classes.
inline int branch_width(const GrayImage& region, Pixel branch, int slope_class) {
  if (region.rows() != kRegionDimension || region.cols() != kRegionDimension)
    throw Error(ErrorCode::input, "bifurcation region must be 41 x 41");
  if (!on_region_ring(branch)) throw Error(ErrorCode::input, "branch position is not on the region ring");

  const auto line = index_line({kRegionRadius, kRegionRadius}, branch, region.dims());
  const auto [sr, sc] = perpendicular_step(slope_class);
  double sum = 0.0;
  int valid = 0;
  std::array<int, kProfileLength> profile{};
  for (std::size_t i = kWidthSkippedPixels; i < line.size(); ++i) {
    for (int k = 0; k < kProfileLength; ++k) {
      const int off = k - kProfileLength / 2;
      const int r = std::clamp(line[i].row + off * sr, 0, kRegionDimension - 1);
      const int c = std::clamp(line[i].col + off * sc, 0, kRegionDimension - 1);
      profile[static_cast<std::size_t>(k)] = region(r, c);
    }
    int max_pos = 0;
    int min_pos = 0;
    int max_d = std::numeric_limits<int>::min();
    int min_d = std::numeric_limits<int>::max();
    for (int k = 0; k + 1 < kProfileLength; ++k) {
      const int d = profile[static_cast<std::size_t>(k + 1)] - profile[static_cast<std::size_t>(k)];
      if (d > max_d) {
        max_d = d;
        max_pos = k;
      }
      if (d < min_d) {
        min_d = d;
        min_pos = k;
      }
    }
    const int width = min_pos - max_pos;
    if (width > 0 && max_d > 0 && min_d < 0) {
      sum += width;
      ++valid;
    }
  }
  if (valid == 0) throw Error(ErrorCode::width_undetermined, "no cross-section with a rising and a falling edge");
  double width = std::floor(sum / valid + 0.5);
  if (slope_class % 2 == 0) width *= std::numbers::sqrt2;
  return static_cast<int>(std::floor(width + 0.5));
}

// ---------------------------------------------------------------------------
// Invariant descriptor

struct InvariantDescriptor {
  /// Smallest inter-branch angle, degrees.
  double p1 = 0.0;
  /// Angle adjacent to p1 on the side of its wider branch, folded to [0, 180].
  double p2 = 0.0;
  /// Wider over narrower width of the branches bounding p1.
  double p3 = 0.0;
  /// Far branch of p2 over the shared (wider) branch.
  double p4 = 0.0;

  std::array<double, 4> values() const { return {p1, p2, p3, p4}; }
  friend bool operator==(const InvariantDescriptor&, const InvariantDescriptor&) = default;
};

/// Consecutive counterclockwise gaps between three branch directions; they
/// always sum to 360.
struct BranchGaps {
  /// Branch indices sorted by increasing angle.
  std::array<std::size_t, 3> order{};
  /// gap[k] runs counterclockwise from order[k] to order[(k + 1) % 3].
  std::array<double, 3> gap{};
};

inline BranchGaps branch_gaps(const std::array<double, 3>& angles) {
  BranchGaps g;
  g.order = {0, 1, 2};
  std::array<double, 3> a{};
  for (std::size_t k = 0; k < 3; ++k) a[k] = normalize_degrees(angles[k]);
  std::stable_sort(g.order.begin(), g.order.end(), [&](std::size_t i, std::size_t j) { return a[i] < a[j]; });
  g.gap[0] = a[g.order[1]] - a[g.order[0]];
  g.gap[1] = a[g.order[2]] - a[g.order[1]];
  g.gap[2] = 360.0 - a[g.order[2]] + a[g.order[0]];
  return g;
}

/// Descriptor from three branch directions and widths.
///
/// The smallest gap gives p1. Of its two bounding branches the wider one (or,
/// on equal widths, the one reached counterclockwise) is shared with p2, the
/// next gap beyond it. p3 is wider/narrower across p1 and p4 is the far
/// branch of p2 over the shared branch.
inline InvariantDescriptor invariants(const std::array<double, 3>& angles, const std::array<double, 3>& widths) {
  for (double w : widths)
    if (!(w > 0.0) || !std::isfinite(w)) throw Error(ErrorCode::width_undetermined, "branch widths must be positive");
  const BranchGaps g = branch_gaps(angles);
  std::size_t k = 0;
  for (std::size_t i = 1; i < 3; ++i)
    if (g.gap[i] < g.gap[k]) k = i;

  const std::size_t lo = g.order[k];
  const std::size_t hi = g.order[(k + 1) % 3];
  const std::size_t other = g.order[(k + 2) % 3];
  InvariantDescriptor d;
  d.p1 = g.gap[k];
  double second = 0.0;
  std::size_t shared = 0;
  if (widths[hi] >= widths[lo]) {
    shared = hi;
    second = g.gap[(k + 1) % 3];
    d.p3 = widths[hi] / widths[lo];
  } else {
    shared = lo;
    second = g.gap[(k + 2) % 3];
    d.p3 = widths[lo] / widths[hi];
  }
  d.p2 = std::min(second, 360.0 - second);
  d.p4 = widths[other] / widths[shared];
  return d;
}

/// Angles, classes and widths of one feature's branches; widths are empty
/// when any cross-section estimate fails.
struct BranchMeasures {
  std::array<SlopeClass, 3> classes{};
  std::array<std::optional<int>, 3> widths{};
  std::optional<InvariantDescriptor> descriptor;
};

inline BranchMeasures measure_branches(const BifurcationFeature& feature) {
  BranchMeasures m;
  m.classes = slope_classes(feature.branches);
  bool complete = true;
  for (std::size_t k = 0; k < 3; ++k) {
    try {
      m.widths[k] = branch_width(feature.region, feature.branches[k], m.classes[k].cls);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::width_undetermined) throw;
      complete = false;
    }
  }
  if (complete) {
    std::array<double, 3> angles{};
    std::array<double, 3> widths{};
    for (std::size_t k = 0; k < 3; ++k) {
      angles[k] = m.classes[k].angle;
      widths[k] = *m.widths[k];
    }
    m.descriptor = invariants(angles, widths);
  }
  return m;
}

/// Approach 2: nearest neighbour in invariant space. Features without a
/// descriptor are skipped; match indices still refer to the full lists.
inline MatchSet match_by_invariants(const std::vector<BifurcationFeature>& feats_a,
                                    const std::vector<std::optional<InvariantDescriptor>>& desc_a,
                                    const std::vector<BifurcationFeature>& feats_b,
                                    const std::vector<std::optional<InvariantDescriptor>>& desc_b,
                                    MatchFilter filter = MatchFilter::baseline, InvariantMetric metric = InvariantMetric::raw) {
  if (feats_a.size() != desc_a.size() || feats_b.size() != desc_b.size())
    throw Error(ErrorCode::argument, "feature and descriptor lists differ in length");
  std::vector<std::size_t> ia;
  std::vector<std::size_t> ib;
  for (std::size_t i = 0; i < desc_a.size(); ++i)
    if (desc_a[i]) ia.push_back(i);
  for (std::size_t j = 0; j < desc_b.size(); ++j)
    if (desc_b[j]) ib.push_back(j);
  if (ia.empty() || ib.empty()) throw Error(ErrorCode::no_features, "no features with a computable descriptor");

  std::array<double, 4> mean{};
  std::array<double, 4> scale{1.0, 1.0, 1.0, 1.0};
  if (metric == InvariantMetric::zscore) {
    std::vector<std::array<double, 4>> all;
    for (auto i : ia) all.push_back(desc_a[i]->values());
    for (auto j : ib) all.push_back(desc_b[j]->values());
    const double n = static_cast<double>(all.size());
    for (std::size_t d = 0; d < 4; ++d) {
      double s = 0.0;
      for (const auto& v : all) s += v[d];
      mean[d] = s / n;
      double ss = 0.0;
      for (const auto& v : all) ss += (v[d] - mean[d]) * (v[d] - mean[d]);
      const double sd = std::sqrt(ss / n);
      scale[d] = sd > 1e-12 ? sd : 1.0;
    }
  }

  const auto dist = [&](std::size_t i, std::size_t j) {
    const auto va = desc_a[ia[i]]->values();
    const auto vb = desc_b[ib[j]]->values();
    double s = 0.0;
    for (std::size_t d = 0; d < 4; ++d) {
      const double x = (va[d] - vb[d]) / scale[d];
      s += x * x;
    }
    return std::sqrt(s);
  };
  struct Better {
    decltype(dist)& f;
    bool operator()(std::size_t i, std::size_t cur, std::size_t cand) const { return f(i, cand) < f(i, cur); }
    bool reverse(std::size_t j, std::size_t cur, std::size_t cand) const { return f(cand, j) < f(cur, j); }
  };

  std::vector<PointXY> pa;
  std::vector<PointXY> pb;
  for (auto i : ia) pa.push_back(to_xy(feats_a[i].center));
  for (auto j : ib) pb.push_back(to_xy(feats_b[j].center));
  MatchSet out = detail::best_matches(ia.size(), ib.size(), dist, Better{dist}, filter, pa, pb);
  for (auto& m : out) {
    m.index_a = ia[m.index_a];
    m.index_b = ib[m.index_b];
  }
  return out;
}

}  // namespace retreg
