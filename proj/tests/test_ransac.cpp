#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "retreg/random.hpp"
#include "retreg/ransac.hpp"

using namespace retreg;

namespace {

Homography known_homography() {
  Homography h;
  h << 1.02, -0.05, 12.0, 0.04, 0.98, -7.0, 1e-5, -2e-5, 1.0;
  return h;
}

PointXY random_point(XorShift64Star& rng) { return {rng.uniform(0.0, 1000.0), rng.uniform(0.0, 1000.0)}; }

/// Pairs whose image02 point b maps onto image01 point a under h.
MatchSet exact_pairs(XorShift64Star& rng, const Homography& h, std::size_t n) {
  MatchSet out;
  for (std::size_t i = 0; i < n; ++i) {
    const PointXY b = random_point(rng);
    out.push_back({i, i, apply_homography(h, b), b, 0.0});
  }
  return out;
}

bool same_pairs(MatchSet a, MatchSet b) {
  const auto key = [](const Match& m) { return std::make_pair(m.index_a, m.index_b); };
  const auto less = [&](const Match& x, const Match& y) { return key(x) < key(y); };
  std::sort(a.begin(), a.end(), less);
  std::sort(b.begin(), b.end(), less);
  return a == b;
}

}  // namespace

TEST(Homography, FourPointFitIsExact) {
  XorShift64Star rng(1);
  const auto h = known_homography();
  std::vector<PointXY> from;
  std::vector<PointXY> to;
  for (int i = 0; i < 4; ++i) {
    from.push_back(random_point(rng));
    to.push_back(apply_homography(h, from.back()));
  }
  const auto fit = fit_homography(from, to);
  ASSERT_TRUE(fit);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) EXPECT_NEAR((*fit)(r, c), h(r, c), 1e-6 * std::max(1.0, std::fabs(h(r, c))));
}

TEST(Homography, TooFewPointsGiveNothing) {
  const std::vector<PointXY> p{{0, 0}, {1, 0}, {0, 1}};
  EXPECT_FALSE(fit_homography(p, p));
}

TEST(Ransac, PerfectConsensusKeepsEverything) {
  XorShift64Star rng(2);
  const auto m = exact_pairs(rng, known_homography(), 10);
  const auto r = ransac_inliers(m);
  EXPECT_TRUE(same_pairs(r.inliers, m));
}

TEST(Ransac, FiveCorrectFiveWrong) {
  XorShift64Star rng(3);
  const auto h = known_homography();
  MatchSet m = exact_pairs(rng, h, 5);
  for (std::size_t i = 5; i < 10; ++i) m.push_back({i, i, random_point(rng), random_point(rng), 0.0});
  const auto r = ransac_inliers(m);
  EXPECT_TRUE(same_pairs(r.inliers, MatchSet(m.begin(), m.begin() + 5)));
}

TEST(Ransac, SharedTargetIsDegenerate) {
  XorShift64Star rng(4);
  MatchSet m;
  for (std::size_t i = 0; i < 8; ++i) m.push_back({i, 0, random_point(rng), {500.0, 500.0}, 0.0});
  try {
    ransac_inliers(m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::degenerate_matches);
  }
}

TEST(Ransac, FewerThanFourIsInsufficient) {
  XorShift64Star rng(5);
  try {
    ransac_inliers(exact_pairs(rng, known_homography(), 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::insufficient_matches);
  }
}

TEST(Ransac, SameSeedSameResult) {
  XorShift64Star rng(6);
  MatchSet m = exact_pairs(rng, known_homography(), 8);
  for (std::size_t i = 8; i < 20; ++i) m.push_back({i, i, random_point(rng), random_point(rng), 0.0});
  const auto a = ransac_inliers(m, {3.0, 500, 77});
  const auto b = ransac_inliers(m, {3.0, 500, 77});
  EXPECT_EQ(a.inliers, b.inliers);
  EXPECT_EQ(a.best_iteration, b.best_iteration);
  EXPECT_TRUE(a.model.isApprox(b.model));
}

TEST(Ransac, ZeroIterationsIsArgumentError) {
  XorShift64Star rng(7);
  EXPECT_THROW(ransac_inliers(exact_pairs(rng, known_homography(), 6), {3.0, 0, 1}), Error);
}

TEST(XorShift, ReferenceSequence) {
  // Independent evaluation of the recurrence for seed 1.
  std::uint64_t s = 1;
  XorShift64Star rng(1);
  for (int i = 0; i < 5; ++i) {
    s ^= s >> 12;
    s ^= s << 25;
    s ^= s >> 27;
    EXPECT_EQ(rng.next(), s * 0x2545F4914F6CDD1DULL);
  }
  XorShift64Star zero(0);
  XorShift64Star golden(0x9E3779B97F4A7C15ULL);
  EXPECT_EQ(zero.next(), golden.next());
}

TEST(XorShift, BelowStaysInRange) {
  XorShift64Star rng(8);
  std::array<int, 7> hist{};
  for (int i = 0; i < 7000; ++i) ++hist[rng.below(7)];
  for (int h : hist) EXPECT_GT(h, 800);
}
