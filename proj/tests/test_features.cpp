#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "retreg/retreg.hpp"
#include "support.hpp"

using namespace retreg;

namespace {

BinaryMask bar(int rows, int cols, int r0, int c0, int h, int w) {
  BinaryMask m(rows, cols, 0);
  for (int r = r0; r < r0 + h; ++r)
    for (int c = c0; c < c0 + w; ++c) m(r, c) = 1;
  return m;
}

/// No 2x2 block of skeleton pixels anywhere.
bool one_pixel_wide(const BinaryMask& s) {
  for (int r = 0; r + 1 < s.rows(); ++r)
    for (int c = 0; c + 1 < s.cols(); ++c)
      if (s(r, c) && s(r + 1, c) && s(r, c + 1) && s(r + 1, c + 1)) return false;
  return true;
}

GrayImage enhanced_of(const VesselTreeSpec& spec) {
  const auto ph = render(spec);
  return enhance(ph.image, fixtures::modality_for(spec.polarity)).image;
}

}  // namespace

TEST(Skeletonize, ThinLineUnchanged) {
  BinaryMask m(20, 30, 0);
  for (int c = 3; c < 27; ++c) m(10, c) = 1;
  EXPECT_EQ(skeletonize(m), m);
}

TEST(Skeletonize, BarBecomesOneConnectedThinPath) {
  const auto m = bar(20, 70, 8, 10, 5, 50);
  const auto s = skeletonize(m);
  EXPECT_EQ(label_components(s).count(), 1u);
  EXPECT_TRUE(one_pixel_wide(s));
  int c0 = 1000;
  int c1 = -1;
  for (int r = 0; r < s.rows(); ++r)
    for (int c = 0; c < s.cols(); ++c)
      if (s(r, c)) {
        EXPECT_TRUE(m(r, c));
        c0 = std::min(c0, c);
        c1 = std::max(c1, c);
      }
  EXPECT_GE(c1 - c0, 40);
  // Interior skeleton pixels have exactly two neighbours: a simple path.
  int ends = 0;
  for (int r = 0; r < s.rows(); ++r)
    for (int c = 0; c < s.cols(); ++c)
      if (s(r, c)) {
        const int n = skeleton_neighbours(s, r, c);
        EXPECT_LE(n, 2);
        if (n == 1) ++ends;
      }
  EXPECT_EQ(ends, 2);
}

TEST(Skeletonize, EmptyStaysEmpty) {
  const BinaryMask m(10, 10, 0);
  EXPECT_EQ(skeletonize(m), m);
}

TEST(Skeletonize, PreservesComponentsAndHoles) {
  BinaryMask m = bar(60, 60, 5, 5, 20, 20);
  const auto ring = bar(60, 60, 30, 30, 25, 25);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] |= ring[i];
  for (int r = 38; r < 47; ++r)
    for (int c = 38; c < 47; ++c) m(r, c) = 0;
  const auto s = skeletonize(m);
  EXPECT_EQ(label_components(s).count(), 2u);
  // Background is 4-connected, the dual of 8-connected foreground.
  const auto holes = [](const BinaryMask& x) {
    LabelMap seen(x.dims(), 0);
    int n = 0;
    for (int r = 0; r < x.rows(); ++r)
      for (int c = 0; c < x.cols(); ++c) {
        if (x(r, c) || seen(r, c)) continue;
        ++n;
        std::vector<Pixel> stack{{r, c}};
        seen(r, c) = 1;
        while (!stack.empty()) {
          const Pixel p = stack.back();
          stack.pop_back();
          for (const Pixel q : {Pixel{p.row + 1, p.col}, Pixel{p.row - 1, p.col}, Pixel{p.row, p.col + 1}, Pixel{p.row, p.col - 1}})
            if (x.contains(q.row, q.col) && !x(q.row, q.col) && !seen(q.row, q.col)) {
              seen(q.row, q.col) = 1;
              stack.push_back(q);
            }
        }
      }
    return n;
  };
  EXPECT_EQ(holes(s), holes(m));
}

TEST(PruneSpurs, ShortSpurOnALineRemoved) {
  BinaryMask s(20, 40, 0);
  for (int c = 2; c < 38; ++c) s(10, c) = 1;
  for (int r = 7; r < 10; ++r) s(r, 20) = 1;
  BinaryMask line(20, 40, 0);
  for (int c = 2; c < 38; ++c) line(10, c) = 1;
  EXPECT_EQ(prune_spurs(s, kMaxSpurLength), line);
}

TEST(PruneSpurs, LongBranchAndFreeLineKept) {
  BinaryMask t(40, 40, 0);
  for (int c = 2; c < 38; ++c) t(30, c) = 1;
  for (int r = 10; r < 30; ++r) t(r, 20) = 1;
  const auto s = skeletonize(t);
  BinaryMask lone(40, 40, 0);
  for (int c = 5; c < 9; ++c) lone(3, c) = 1;
  EXPECT_EQ(prune_spurs(s, kMaxSpurLength), s);
  EXPECT_EQ(prune_spurs(lone, kMaxSpurLength), lone);
}

TEST(Candidates, StraightLineHasNone) {
  BinaryMask s(10, 20, 0);
  for (int c = 2; c < 18; ++c) s(5, c) = 1;
  EXPECT_EQ(count_true(bifurcation_candidates(s)), 0u);
}

TEST(Candidates, PlusSignCenter) {
  BinaryMask s(11, 11, 0);
  for (int k = 1; k < 10; ++k) {
    s(5, k) = 1;
    s(k, 5) = 1;
  }
  const auto c = bifurcation_candidates(s);
  EXPECT_TRUE(c(5, 5));
  EXPECT_EQ(skeleton_neighbours(s, 5, 5), 4);
}

TEST(Cluster, SingleCandidate) {
  BinaryMask c(10, 10, 0);
  c(3, 7) = 1;
  EXPECT_EQ(cluster_candidates(c), (std::vector<Pixel>{{3, 7}}));
}

TEST(Cluster, CentroidRoundsHalfUp) {
  BinaryMask c(20, 20, 0);
  c(10, 10) = 1;
  c(10, 11) = 1;
  EXPECT_EQ(cluster_candidates(c), (std::vector<Pixel>{{10, 11}}));
}

TEST(Density, ThreeInOneWindowAllDropped) {
  const std::vector<Pixel> pts{{100, 100}, {105, 100}, {100, 110}};
  EXPECT_TRUE(density_filter(pts).empty());
}

TEST(Density, TwoNearbyKept) {
  const std::vector<Pixel> pts{{100, 100}, {100, 110}};
  EXPECT_EQ(density_filter(pts), pts);
}

TEST(Density, DenseClusterRemovedIsolatedPointSurvives) {
  std::vector<Pixel> pts;
  for (int k = 0; k < 20; ++k) pts.push_back({100 + (k % 5) * 3, 100 + (k / 5) * 3});
  pts.push_back({100, 300});
  EXPECT_EQ(density_filter(pts), (std::vector<Pixel>{{100, 300}}));
}

TEST(Density, WindowBoundaryIsInclusive) {
  // Points 20 px apart share a 41 x 41 window; 21 px apart do not.
  EXPECT_TRUE(density_filter({{100, 100}, {100, 120}, {100, 140}}).empty());
  EXPECT_EQ(density_filter({{100, 100}, {100, 121}, {100, 142}}).size(), 3u);
}

TEST(Validate, HomogeneousRegionHasNoArcs) {
  const auto e = enhanced_of(fixtures::straight_vessel(160, 0.0));
  // A point far from the vessel: the ring sees flat background.
  const auto v = validate_bifurcation(e, {30, 79});
  EXPECT_FALSE(v.accepted());
  EXPECT_EQ(v.arcs, 0u);
  EXPECT_EQ(v.cause, RejectCause::too_few_arcs);
}

TEST(Validate, StraightVesselHasTwoArcs) {
  const auto e = enhanced_of(fixtures::straight_vessel(160, 30.0));
  const auto v = validate_bifurcation(e, {80, 80});
  EXPECT_FALSE(v.accepted());
  EXPECT_EQ(v.arcs, 2u);
}

TEST(Validate, EquilateralYAccepted) {
  const auto spec = fixtures::equilateral_y(160);
  const auto e = enhanced_of(spec);
  const auto ph = render(spec);
  const Pixel center = fixtures::nearest_pixel(ph.truth.bifurcations.at(0).center);
  const auto v = validate_bifurcation(e, center);
  ASSERT_TRUE(v.accepted());
  EXPECT_EQ(v.arcs, 3u);
  const auto classes = slope_classes(v.feature->branches);
  std::multiset<double> got;
  for (const auto& c : classes) got.insert(c.angle);
  const std::array<double, 3> truth{0.0, 120.0, 240.0};
  for (double t : truth) {
    const bool near = std::any_of(got.begin(), got.end(), [&](double a) { return angular_distance(a, t) <= 10.0; });
    EXPECT_TRUE(near) << t;
  }
}

TEST(Validate, CrossingKeepsThreeWidestArms) {
  // Four arms; the 135-degree arm is the narrowest and must be the one dropped.
  const auto spec = fixtures::star_spec(160, {79.5, 79.5}, {20.0, 100.0, 135.0, 250.0}, {5.0, 5.0, 3.0, 5.0}, 70.0);
  const auto e = enhanced_of(spec);
  const auto v = validate_bifurcation(e, {80, 80});
  ASSERT_TRUE(v.accepted());
  EXPECT_EQ(v.arcs, 4u);
  EXPECT_EQ(v.separated, 4u);
  for (const auto& c : slope_classes(v.feature->branches)) EXPECT_GT(angular_distance(c.angle, 135.0), 12.0);
}

TEST(Validate, BorderCandidateRejected) {
  const GrayImage e(100, 100, 0);
  EXPECT_EQ(validate_bifurcation(e, {10, 50}).cause, RejectCause::border);
  EXPECT_EQ(validate_bifurcation(e, {50, 80}).cause, RejectCause::border);
}

TEST(FindBifurcations, YPhantomGivesOneFeatureAtTheNode) {
  const auto spec = fixtures::equilateral_y(200);
  const auto ph = render(spec);
  const auto d = detect(ph.image, Modality::red_free);
  ASSERT_EQ(d.features().size(), 1u);
  const PointXY truth = ph.truth.bifurcations.at(0).center;
  EXPECT_LE(std::hypot(d.features()[0].center.col - truth.x, d.features()[0].center.row - truth.y), 3.0);
}

TEST(FindBifurcations, GroundTruthNodesPassValidation) {
  // Noise-free phantom: every node with arms >= 25 deg apart and widths >= 3 px
  // validates at its (rounded) true position.
  ForestOptions opt;
  opt.rows = 512;
  opt.cols = 512;
  opt.target_bifurcations = 12;
  const auto ph = render(random_forest_spec(5, opt));
  const auto e = enhance(ph.image, Modality::red_free).image;
  ASSERT_GE(ph.truth.bifurcations.size(), 6u);
  for (const auto& b : ph.truth.bifurcations) {
    const auto v = validate_bifurcation(e, fixtures::nearest_pixel(b.center));
    EXPECT_TRUE(v.accepted()) << b.center.x << "," << b.center.y << " arcs " << v.arcs;
  }
}

TEST(FindBifurcations, ShapeMismatchIsInputError) {
  EXPECT_THROW(find_bifurcations(BinaryMask(50, 50, 0), GrayImage(50, 40, 0)), Error);
}
