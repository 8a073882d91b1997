#pragma once

// Phantom fixtures shared by the test suites.

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "retreg/retreg.hpp"

namespace retreg::fixtures {

/// Vessel star: every arm leaves `center` in its own direction. The first arm
/// is the tree root drawn towards the center; the others are its children.
inline VesselTreeSpec star_spec(int size, PointXY center, const std::vector<double>& angles, const std::vector<double>& widths,
                                double length, Polarity polarity = Polarity::dark_vessel) {
  VesselTreeSpec s;
  s.rows = size;
  s.cols = size;
  s.polarity = polarity;
  s.background = polarity == Polarity::dark_vessel ? 150.0 : 50.0;
  s.contrast = polarity == Polarity::dark_vessel ? 70.0 : 110.0;
  BranchSpec root;
  const double t = angles[0] * std::numbers::pi / 180.0;
  root.start = {center.x + length * std::cos(t), center.y - length * std::sin(t)};
  root.angle = normalize_degrees(angles[0] + 180.0);
  root.length = length;
  root.width = widths[0];
  for (std::size_t k = 1; k < angles.size(); ++k) {
    BranchSpec arm;
    arm.angle = angles[k];
    arm.length = length;
    arm.width = widths[k];
    root.children.push_back(arm);
  }
  s.trees.push_back(root);
  return s;
}

/// Equilateral Y with arms at 0, 120 and 240 degrees.
inline VesselTreeSpec equilateral_y(int size = 160, double width = 4.0, Polarity polarity = Polarity::dark_vessel) {
  const double mid = (size - 1) / 2.0;
  return star_spec(size, {mid, mid}, {0.0, 120.0, 240.0}, {width, width, width}, 0.45 * size, polarity);
}

/// Single straight vessel through the image center at `angle_deg`.
inline VesselTreeSpec straight_vessel(int size = 160, double angle_deg = 30.0, double width = 4.0,
                                      Polarity polarity = Polarity::dark_vessel) {
  VesselTreeSpec s;
  s.rows = size;
  s.cols = size;
  s.polarity = polarity;
  s.background = polarity == Polarity::dark_vessel ? 150.0 : 50.0;
  s.contrast = polarity == Polarity::dark_vessel ? 70.0 : 110.0;
  const double mid = (size - 1) / 2.0;
  const double half = 0.45 * size;
  const double t = angle_deg * std::numbers::pi / 180.0;
  BranchSpec b;
  b.start = {mid - half * std::cos(t), mid + half * std::sin(t)};
  b.angle = angle_deg;
  b.length = 2.0 * half;
  b.width = width;
  s.trees.push_back(b);
  return s;
}

inline Modality modality_for(Polarity p) { return p == Polarity::dark_vessel ? Modality::red_free : Modality::angiography; }

inline Pixel nearest_pixel(const PointXY& p) {
  return {static_cast<int>(std::floor(p.y + 0.5)), static_cast<int>(std::floor(p.x + 0.5))};
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("retreg_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace retreg::fixtures
