// Renders a random phantom, warps it by a small similarity, registers the
// pair and prints the landmark error against the ground truth.

#include <cmath>
#include <cstdlib>
#include <iostream>

#include "retreg/retreg.hpp"

int main(int argc, char** argv) {
  const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 7;
  const auto spec = retreg::random_forest_spec(seed);
  const auto original = retreg::render(spec);
  const auto model = retreg::centered_similarity(original.image.dims(), 3.0, 1.01, 12.0, -8.0);
  const auto warped = retreg::warp(original.image, original.truth, model);

  retreg::PipelineConfig cfg;
  cfg.match_filter = retreg::MatchFilter::mutual;
  const auto reg = retreg::register_images(warped.image, original.image, cfg);
  const auto& r = reg.report;
  std::cout << "features " << r.feature_counts[0] << "/" << r.feature_counts[1] << ", matches " << r.initial_matches << ", inliers "
            << r.inliers << "\n";
  if (!r.registered) {
    std::cout << "failed: " << r.message << "\n";
    return 2;
  }
  double ss = 0.0;
  for (std::size_t i = 0; i < original.truth.bifurcations.size(); ++i) {
    const auto p = retreg::apply(reg.estimate->model, original.truth.bifurcations[i].center);
    const auto q = warped.truth.bifurcations[i].center;
    ss += (p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y);
  }
  std::cout << "model " << retreg::to_string(r.model_kind.value()) << ", landmark RMS "
            << std::sqrt(ss / static_cast<double>(original.truth.bifurcations.size())) << " px\n";
  return 0;
}
