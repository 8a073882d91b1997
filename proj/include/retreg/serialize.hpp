#pragma once

// JSON forms of features, matches, transforms and phantom specs. Every
// document that carries coordinates states "coords": "xy0" (x = column,
// y = row, 0-based).

#include <json.hpp>

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "retreg/error.hpp"
#include "retreg/features.hpp"
#include "retreg/matching.hpp"
#include "retreg/phantom.hpp"
#include "retreg/transform.hpp"

namespace retreg {

using Json = nlohmann::json;

inline constexpr const char* kCoords = "xy0";

inline Json to_json(const PointXY& p) { return {{"x", p.x}, {"y", p.y}}; }
inline Json to_json(Pixel p) { return to_json(to_xy(p)); }
inline Json to_json(Dims d) { return {{"rows", d.rows}, {"cols", d.cols}}; }

inline Json to_json(const InvariantDescriptor& d) { return {{"p1", d.p1}, {"p2", d.p2}, {"p3", d.p3}, {"p4", d.p4}}; }

inline Json feature_to_json(const BifurcationFeature& f, const BranchMeasures& m) {
  Json branches = Json::array();
  for (std::size_t k = 0; k < 3; ++k) {
    const PointXY p = to_xy(f.branch_in_image(k));
    branches.push_back({{"x", p.x},
                        {"y", p.y},
                        {"angle", m.classes[k].angle},
                        {"slope_class", m.classes[k].cls},
                        {"width", m.widths[k] ? Json(*m.widths[k]) : Json(nullptr)}});
  }
  return {{"center", to_json(f.center)},
          {"branches", std::move(branches)},
          {"descriptor", m.descriptor ? to_json(*m.descriptor) : Json(nullptr)}};
}

inline Json features_to_json(Dims dims, std::string_view modality, const std::vector<BifurcationFeature>& features,
                             const std::vector<BranchMeasures>& measures) {
  Json list = Json::array();
  for (std::size_t i = 0; i < features.size(); ++i) list.push_back(feature_to_json(features[i], measures[i]));
  return {{"coords", kCoords}, {"image", to_json(dims)}, {"modality", modality}, {"count", features.size()}, {"features", std::move(list)}};
}

inline Json matches_to_json(const MatchSet& matches, std::string_view mode) {
  Json list = Json::array();
  for (const auto& m : matches)
    list.push_back({{"a", to_json(m.a)}, {"b", to_json(m.b)}, {"score", m.score}, {"index_a", m.index_a}, {"index_b", m.index_b}});
  return {{"coords", kCoords}, {"mode", mode}, {"count", matches.size()}, {"matches", std::move(list)}};
}

inline Json transform_to_json(const TransformModel& model, const Canvas& canvas) {
  Json j{{"coords", kCoords},
         {"maps", "image02->image01"},
         {"kind", to_string(model.kind)},
         {"coefficients", model.coefficients()},
         {"canvas", {{"rows", canvas.dims.rows}, {"cols", canvas.dims.cols}, {"ref_offset", {{"x", -canvas.offset_x}, {"y", -canvas.offset_y}}}}}};
  j["layout"] = model.is_linear() ? Json("3x3 row-major") : Json("2x6 row-major over x^2, xy, y^2, x, y, 1");
  return j;
}

/// Inverse of transform_to_json for the model part.
inline TransformModel transform_from_json(const Json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  const auto c = j.at("coefficients").get<std::vector<double>>();
  if (kind == "quadratic") {
    if (c.size() != 12) throw Error(ErrorCode::input, "quadratic transform needs 12 coefficients");
    Eigen::Matrix<double, 2, 6> p;
    for (int r = 0; r < 2; ++r)
      for (int k = 0; k < 6; ++k) p(r, k) = c[static_cast<std::size_t>(r * 6 + k)];
    return TransformModel::quadratic(p);
  }
  if (c.size() != 9) throw Error(ErrorCode::input, "linear transform needs 9 coefficients");
  TransformModel m;
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < 3; ++k) m.matrix(r, k) = c[static_cast<std::size_t>(r * 3 + k)];
  if (kind == "translation") m.kind = TransformKind::translation;
  else if (kind == "rigid") m.kind = TransformKind::rigid;
  else if (kind == "affine") m.kind = TransformKind::affine;
  else throw Error(ErrorCode::input, "unknown transform kind '" + kind + "'");
  return m;
}

// ---------------------------------------------------------------------------
// Phantom specs

namespace detail {

inline void reject_unknown_keys(const Json& j, const std::set<std::string>& allowed, std::string_view where) {
  if (!j.is_object()) throw Error(ErrorCode::spec, std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!allowed.contains(key)) throw Error(ErrorCode::spec, "unknown key '" + key + "' in " + std::string(where));
}

template <typename T>
T spec_value(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw Error(ErrorCode::spec, std::string("invalid value for '") + key + "'");
  }
}

inline BranchSpec branch_from_json(const Json& j) {
  reject_unknown_keys(j, {"start", "angle", "length", "width", "children"}, "branch");
  BranchSpec b;
  if (j.contains("start")) {
    reject_unknown_keys(j["start"], {"x", "y"}, "branch start");
    b.start = {spec_value(j["start"], "x", 0.0), spec_value(j["start"], "y", 0.0)};
  }
  b.angle = spec_value(j, "angle", 0.0);
  b.length = spec_value(j, "length", 0.0);
  b.width = spec_value(j, "width", b.width);
  if (j.contains("children"))
    for (const auto& c : j["children"]) b.children.push_back(branch_from_json(c));
  return b;
}

inline Json branch_to_json(const BranchSpec& b, bool root) {
  Json j{{"angle", b.angle}, {"length", b.length}, {"width", b.width}};
  if (root) j["start"] = to_json(b.start);
  if (!b.children.empty()) {
    Json children = Json::array();
    for (const auto& c : b.children) children.push_back(branch_to_json(c, false));
    j["children"] = std::move(children);
  }
  return j;
}

inline Polarity polarity_from_string(const std::string& s) {
  if (s == "dark") return Polarity::dark_vessel;
  if (s == "bright") return Polarity::bright_vessel;
  throw Error(ErrorCode::spec, "invalid value for 'polarity': " + s);
}

}  // namespace detail

/// Phantom spec document. Either "trees" lists explicit vessel trees or
/// "forest" asks for random_forest_spec with the given options. An optional
/// "warp" {rotation_deg, scale, tx, ty} requests a centered similarity.
struct PhantomDocument {
  VesselTreeSpec spec;
  std::optional<TransformModel> warp;
};

inline PhantomDocument phantom_from_json(const Json& j) {
  detail::reject_unknown_keys(j,
                              {"seed", "rows", "cols", "polarity", "background", "contrast", "noise_sigma", "illumination_gradient",
                               "mask_radius", "trees", "forest", "warp"},
                              "phantom spec");
  PhantomDocument doc;
  VesselTreeSpec& s = doc.spec;
  const auto seed = detail::spec_value<std::uint64_t>(j, "seed", s.seed);
  const int rows = detail::spec_value(j, "rows", s.rows);
  const int cols = detail::spec_value(j, "cols", s.cols);
  const Polarity polarity = detail::polarity_from_string(detail::spec_value<std::string>(j, "polarity", "dark"));
  if (rows < 1 || cols < 1) throw Error(ErrorCode::spec, "invalid value for 'rows'/'cols'");
  if (j.contains("forest")) {
    if (j.contains("trees")) throw Error(ErrorCode::spec, "'trees' and 'forest' are mutually exclusive");
    const Json& f = j["forest"];
    detail::reject_unknown_keys(f, {"target_bifurcations"}, "forest");
    ForestOptions opt;
    opt.rows = rows;
    opt.cols = cols;
    opt.polarity = polarity;
    opt.noise_sigma = detail::spec_value(j, "noise_sigma", opt.noise_sigma);
    opt.illumination_gradient = detail::spec_value(j, "illumination_gradient", opt.illumination_gradient);
    opt.target_bifurcations = detail::spec_value(f, "target_bifurcations", opt.target_bifurcations);
    s = random_forest_spec(seed, opt);
  } else {
    s.seed = seed;
    s.rows = rows;
    s.cols = cols;
    s.polarity = polarity;
    s.noise_sigma = detail::spec_value(j, "noise_sigma", s.noise_sigma);
    s.illumination_gradient = detail::spec_value(j, "illumination_gradient", s.illumination_gradient);
    if (j.contains("trees"))
      for (const auto& t : j["trees"]) s.trees.push_back(detail::branch_from_json(t));
  }
  s.background = detail::spec_value(j, "background", s.background);
  s.contrast = detail::spec_value(j, "contrast", s.contrast);
  s.mask_radius = detail::spec_value(j, "mask_radius", s.mask_radius);
  if (j.contains("warp")) {
    const Json& w = j["warp"];
    detail::reject_unknown_keys(w, {"rotation_deg", "scale", "tx", "ty"}, "warp");
    doc.warp = centered_similarity({s.rows, s.cols}, detail::spec_value(w, "rotation_deg", 0.0), detail::spec_value(w, "scale", 1.0),
                                   detail::spec_value(w, "tx", 0.0), detail::spec_value(w, "ty", 0.0));
  }
  return doc;
}

inline Json spec_to_json(const VesselTreeSpec& s) {
  Json trees = Json::array();
  for (const auto& t : s.trees) trees.push_back(detail::branch_to_json(t, true));
  return {{"seed", s.seed},
          {"rows", s.rows},
          {"cols", s.cols},
          {"polarity", s.polarity == Polarity::dark_vessel ? "dark" : "bright"},
          {"background", s.background},
          {"contrast", s.contrast},
          {"noise_sigma", s.noise_sigma},
          {"illumination_gradient", s.illumination_gradient},
          {"mask_radius", s.mask_radius},
          {"trees", std::move(trees)}};
}

inline Json truth_to_json(const GroundTruth& truth, Dims dims) {
  Json list = Json::array();
  for (const auto& b : truth.bifurcations)
    list.push_back({{"center", to_json(b.center)}, {"angles", b.angles}, {"widths", b.widths}});
  Json j{{"coords", kCoords}, {"image", to_json(dims)}, {"bifurcations", std::move(list)}};
  if (truth.transform) {
    j["transform"] = {{"maps", "original->warped"}, {"kind", to_string(truth.transform->kind)}, {"coefficients", truth.transform->coefficients()}};
  } else {
    j["transform"] = nullptr;
  }
  return j;
}

}  // namespace retreg
