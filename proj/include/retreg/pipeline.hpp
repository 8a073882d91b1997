#pragma once

// End-to-end orchestration: feature detection on both images, matching,
// consensus filtering, model estimation and resampling, plus the artifact
// files that describe each run.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "retreg/enhancement.hpp"
#include "retreg/error.hpp"
#include "retreg/features.hpp"
#include "retreg/io.hpp"
#include "retreg/matching.hpp"
#include "retreg/ransac.hpp"
#include "retreg/segmentation.hpp"
#include "retreg/serialize.hpp"
#include "retreg/transform.hpp"

namespace retreg {

// ---------------------------------------------------------------------------
// Configuration

inline constexpr const char* kDefaultOutDir = "retreg_out";
inline constexpr const char* kOutEnvVar = "RETREG_OUT";

struct PipelineConfig {
  Modality modality1 = Modality::red_free;
  Modality modality2 = Modality::red_free;
  /// 1 = mutual information, 2 = invariant descriptors.
  int approach = 2;
  MatchFilter match_filter = MatchFilter::baseline;
  InvariantMetric metric = InvariantMetric::raw;
  Interpolation interpolation = Interpolation::bilinear;
  RansacParams ransac;
  bool debug = false;
  std::filesystem::path out = kDefaultOutDir;
};

/// Keys accepted in config files; command-line flags use the same names.
inline const std::set<std::string>& config_keys() {
  static const std::set<std::string> keys{"modality1", "modality2",        "approach",     "match-filter", "metric", "interpolation",
                                          "ransac-threshold", "ransac-iters", "seed", "debug", "out"};
  return keys;
}

namespace detail {

[[noreturn]] inline void bad_config(const std::string& key, const Json& value) {
  throw Error(ErrorCode::config, "invalid value for '" + key + "': " + value.dump());
}

inline Modality parse_modality(const std::string& key, const Json& v) {
  if (v.is_number_integer()) {
    const auto n = v.get<long long>();
    if (n >= 1 && n <= 3) return static_cast<Modality>(n);
  } else if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "1" || s == "color-retinography" || s == "color") return Modality::color_retinography;
    if (s == "2" || s == "red-free") return Modality::red_free;
    if (s == "3" || s == "angiography") return Modality::angiography;
  }
  bad_config(key, v);
}

inline std::string text_of(const std::string& key, const Json& v) {
  if (!v.is_string()) bad_config(key, v);
  return v.get<std::string>();
}

/// Integers may arrive as JSON numbers or, from the command line, as text.
inline long long integer_of(const std::string& key, const Json& v) {
  if (v.is_number_integer()) return v.get<long long>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    std::size_t used = 0;
    try {
      const long long n = std::stoll(s, &used);
      if (used == s.size()) return n;
    } catch (const std::exception&) {
    }
  }
  bad_config(key, v);
}

inline double real_of(const std::string& key, const Json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    std::size_t used = 0;
    try {
      const double x = std::stod(s, &used);
      if (used == s.size()) return x;
    } catch (const std::exception&) {
    }
  }
  bad_config(key, v);
}

}  // namespace detail

/// Overlays the keys of `j` onto `base`. Unknown keys and invalid values
/// raise a config error that names the key.
inline PipelineConfig apply_config(PipelineConfig base, const Json& j) {
  if (j.is_null()) return base;
  if (!j.is_object()) throw Error(ErrorCode::config, "configuration must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (!config_keys().contains(key)) throw Error(ErrorCode::config, "unknown configuration key '" + key + "'");
    if (key == "modality1") {
      base.modality1 = detail::parse_modality(key, v);
    } else if (key == "modality2") {
      base.modality2 = detail::parse_modality(key, v);
    } else if (key == "approach") {
      const auto n = detail::integer_of(key, v);
      if (n != 1 && n != 2) detail::bad_config(key, v);
      base.approach = static_cast<int>(n);
    } else if (key == "match-filter") {
      const auto s = detail::text_of(key, v);
      if (s == "baseline") base.match_filter = MatchFilter::baseline;
      else if (s == "mutual") base.match_filter = MatchFilter::mutual;
      else detail::bad_config(key, v);
    } else if (key == "metric") {
      const auto s = detail::text_of(key, v);
      if (s == "raw") base.metric = InvariantMetric::raw;
      else if (s == "zscore") base.metric = InvariantMetric::zscore;
      else detail::bad_config(key, v);
    } else if (key == "interpolation") {
      const auto s = detail::text_of(key, v);
      if (s == "nearest") base.interpolation = Interpolation::nearest;
      else if (s == "bilinear") base.interpolation = Interpolation::bilinear;
      else if (s == "bicubic") base.interpolation = Interpolation::bicubic;
      else detail::bad_config(key, v);
    } else if (key == "ransac-threshold") {
      const double t = detail::real_of(key, v);
      if (!(t > 0.0) || !std::isfinite(t)) detail::bad_config(key, v);
      base.ransac.inlier_threshold = t;
    } else if (key == "ransac-iters") {
      const auto n = detail::integer_of(key, v);
      if (n < 1 || n > 100'000'000) detail::bad_config(key, v);
      base.ransac.iterations = static_cast<int>(n);
    } else if (key == "seed") {
      const auto n = detail::integer_of(key, v);
      if (n < 0) detail::bad_config(key, v);
      base.ransac.seed = static_cast<std::uint64_t>(n);
    } else if (key == "debug") {
      if (!v.is_boolean()) detail::bad_config(key, v);
      base.debug = v.get<bool>();
    } else if (key == "out") {
      base.out = detail::text_of(key, v);
    }
  }
  return base;
}

/// Defaults, then RETREG_OUT for the output directory, then the config file,
/// then command-line flags (given as a JSON object of the same keys).
inline PipelineConfig load_config(const std::optional<std::filesystem::path>& file, const Json& flags = Json::object(),
                                  const char* env_out = std::getenv(kOutEnvVar)) {
  PipelineConfig cfg;
  if (env_out != nullptr && *env_out != '\0') cfg.out = env_out;
  if (file) {
    Json j;
    try {
      j = Json::parse(read_text(*file));
    } catch (const Json::parse_error& e) {
      throw Error(ErrorCode::config, "cannot parse " + file->string() + ": " + e.what());
    }
    cfg = apply_config(cfg, j);
  }
  return apply_config(cfg, flags);
}

inline Json config_to_json(const PipelineConfig& c) {
  return {{"modality1", static_cast<int>(c.modality1)},
          {"modality2", static_cast<int>(c.modality2)},
          {"approach", c.approach},
          {"match-filter", to_string(c.match_filter)},
          {"metric", to_string(c.metric)},
          {"interpolation", to_string(c.interpolation)},
          {"ransac-threshold", c.ransac.inlier_threshold},
          {"ransac-iters", c.ransac.iterations},
          {"seed", c.ransac.seed},
          {"debug", c.debug}};
}

// ---------------------------------------------------------------------------
// Feature detection

struct StageTiming {
  std::string stage;
  double milliseconds = 0.0;
};

class StageClock {
 public:
  explicit StageClock(std::vector<StageTiming>& sink) : sink_(sink) {}

  template <typename F>
  decltype(auto) run(std::string stage, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    struct Record {
      StageClock& self;
      std::string stage;
      std::chrono::steady_clock::time_point t0;
      ~Record() {
        const std::chrono::duration<double, std::milli> d = std::chrono::steady_clock::now() - t0;
        self.sink_.push_back({std::move(stage), d.count()});
      }
    } record{*this, std::move(stage), t0};
    return f();
  }

 private:
  std::vector<StageTiming>& sink_;
};

/// Every intermediate of the detection chain for one image.
struct Detection {
  Modality modality = Modality::red_free;
  Dims dims;
  GrayImage working;
  EnhancedImage enhanced;
  ThresholdResult threshold;
  BinaryMask segmented;
  BinaryMask size_filtered;
  BinaryMask filled;
  BinaryMask camera_mask;
  BinaryMask vessels;
  FeatureTrace trace;
  std::vector<BranchMeasures> measures;

  const std::vector<BifurcationFeature>& features() const { return trace.features; }

  std::vector<std::optional<InvariantDescriptor>> descriptors() const {
    std::vector<std::optional<InvariantDescriptor>> out;
    out.reserve(measures.size());
    for (const auto& m : measures) out.push_back(m.descriptor);
    return out;
  }

  Json to_json() const { return features_to_json(dims, to_string(modality), trace.features, measures); }
};

inline Detection detect(const InputImage& image, Modality modality) {
  Detection d;
  d.modality = modality;
  d.working = extract_working_channel(image, modality);
  d.dims = d.working.dims();
  d.enhanced = enhance(d.working, modality);
  d.threshold = entropy_threshold(d.enhanced.image);
  d.segmented = segment(d.enhanced.image, d.threshold.level);
  d.size_filtered = size_filter(d.segmented);
  d.filled = fill_hollow_vessels(d.size_filtered);
  d.camera_mask = detect_camera_mask(d.working);
  d.vessels = remove_mask(d.filled, d.camera_mask);
  d.trace = find_bifurcations(d.vessels, d.enhanced.image);
  d.measures.reserve(d.trace.features.size());
  for (const auto& f : d.trace.features) d.measures.push_back(measure_branches(f));
  return d;
}

/// Enhanced image in gray, skeleton in blue, candidate clusters in yellow and
/// accepted features as red squares.
inline RgbImage debug_overlay(const Detection& d) {
  RgbImage out(d.dims, Rgb{});
  for (int r = 0; r < d.dims.rows; ++r)
    for (int c = 0; c < d.dims.cols; ++c) {
      const auto g = static_cast<std::uint8_t>(d.enhanced.image(r, c) / 2);
      out(r, c) = {g, g, g};
      if (d.trace.skeleton(r, c)) out(r, c) = {64, 160, 255};
    }
  const auto mark = [&](Pixel p, int half, Rgb color, bool hollow) {
    for (int dr = -half; dr <= half; ++dr)
      for (int dc = -half; dc <= half; ++dc) {
        if (hollow && std::abs(dr) != half && std::abs(dc) != half) continue;
        const Pixel q{p.row + dr, p.col + dc};
        if (out.contains(q)) out(q) = color;
      }
  };
  for (const Pixel p : d.trace.clustered) mark(p, 1, {255, 230, 0}, false);
  for (const auto& f : d.trace.features) mark(f.center, 4, {255, 40, 40}, true);
  return out;
}

inline void write_detection_debug(const Detection& d, const std::filesystem::path& dir, const std::string& tag) {
  write_png(dir / ("debug_" + tag + "_enhanced.png"), d.enhanced.image);
  write_pbm(dir / ("debug_" + tag + "_segmented.pbm"), d.segmented);
  write_pbm(dir / ("debug_" + tag + "_size_filtered.pbm"), d.size_filtered);
  write_pbm(dir / ("debug_" + tag + "_filled.pbm"), d.filled);
  write_pbm(dir / ("debug_" + tag + "_vessels.pbm"), d.vessels);
  write_png(dir / ("debug_" + tag + "_overlay.png"), debug_overlay(d));
}

// ---------------------------------------------------------------------------
// Registration

struct RegistrationReport {
  std::array<std::size_t, 2> feature_counts{};
  std::size_t initial_matches = 0;
  std::size_t inliers = 0;
  std::optional<TransformKind> model_kind;
  /// |apply(model, b) - a| for every inlier, in inliers.json order.
  std::vector<double> residuals;
  double mean_residual = 0.0;
  double max_residual = 0.0;
  std::vector<StageTiming> timings;
  bool registered = false;
  std::optional<ErrorCode> cause;
  std::string message;
};

inline Json report_to_json(const RegistrationReport& r, const PipelineConfig& cfg) {
  Json j{{"coords", kCoords},
         {"outcome", r.registered ? "registered" : "failed"},
         {"cause", r.cause ? Json(std::string(to_string(*r.cause))) : Json(nullptr)},
         {"message", r.message},
         {"features", {{"image01", r.feature_counts[0]}, {"image02", r.feature_counts[1]}}},
         {"initial_matches", r.initial_matches},
         {"inliers", r.inliers},
         {"model", r.model_kind ? Json(std::string(to_string(*r.model_kind))) : Json(nullptr)},
         {"residuals", {{"mean", r.mean_residual}, {"max", r.max_residual}, {"per_inlier", r.residuals}}},
         {"config", config_to_json(cfg)}};
  return j;
}

/// Everything a run produced, held in memory until it is written out.
struct Registration {
  RegistrationReport report;
  std::array<std::optional<Detection>, 2> detections;
  MatchSet matches;
  MatchSet inliers;
  std::optional<Estimate> estimate;
  std::optional<InputImage> registered;
  std::optional<RgbImage> overlay;
  std::optional<Canvas> canvas;
};

inline std::string match_mode(const PipelineConfig& cfg) {
  std::string mode = cfg.approach == 1 ? "mutual-information" : "invariants";
  mode += "/" + std::string(to_string(cfg.match_filter));
  if (cfg.approach == 2) mode += "/" + std::string(to_string(cfg.metric));
  return mode;
}

namespace detail {

inline Rgb as_rgb(const InputImage& image, int r, int c) {
  if (const auto* g = std::get_if<GrayImage>(&image)) return {(*g)(r, c), (*g)(r, c), (*g)(r, c)};
  return std::get<RgbImage>(image)(r, c);
}

/// Reference and registered images on the shared canvas, averaged where both
/// are present.
inline RgbImage compose_overlay(const InputImage& reference, const InputImage& registered, const BinaryMask& valid, const Canvas& canvas) {
  RgbImage out(canvas.dims, Rgb{});
  const Dims ref = std::visit([](const auto& img) { return img.dims(); }, reference);
  for (int r = 0; r < canvas.dims.rows; ++r) {
    for (int c = 0; c < canvas.dims.cols; ++c) {
      const int rr = r + canvas.offset_y;
      const int rc = c + canvas.offset_x;
      const bool has_ref = ref.contains(rr, rc);
      const bool has_reg = valid(r, c) != 0;
      if (has_ref && has_reg) {
        const Rgb a = as_rgb(reference, rr, rc);
        const Rgb b = as_rgb(registered, r, c);
        for (int k = 0; k < 3; ++k) out(r, c)[k] = static_cast<std::uint8_t>((a[k] + b[k] + 1) / 2);
      } else if (has_ref) {
        out(r, c) = as_rgb(reference, rr, rc);
      } else if (has_reg) {
        out(r, c) = as_rgb(registered, r, c);
      }
    }
  }
  return out;
}

}  // namespace detail

/// Registers image02 (sensed) onto image01 (reference). Stage failures are
/// recorded in the report instead of thrown.
inline Registration register_images(const InputImage& image01, const InputImage& image02, const PipelineConfig& cfg) {
  Registration reg;
  RegistrationReport& rep = reg.report;
  StageClock clock(rep.timings);
  try {
    reg.detections[0] = clock.run("features_01", [&] { return detect(image01, cfg.modality1); });
    rep.feature_counts[0] = reg.detections[0]->features().size();
    reg.detections[1] = clock.run("features_02", [&] { return detect(image02, cfg.modality2); });
    rep.feature_counts[1] = reg.detections[1]->features().size();
    const Detection& da = *reg.detections[0];
    const Detection& db = *reg.detections[1];

    reg.matches = clock.run("matching", [&] {
      if (cfg.approach == 1) return match_by_mi(da.features(), db.features(), cfg.match_filter);
      return match_by_invariants(da.features(), da.descriptors(), db.features(), db.descriptors(), cfg.match_filter, cfg.metric);
    });
    rep.initial_matches = reg.matches.size();

    reg.inliers = clock.run("consensus", [&] { return ransac_inliers(reg.matches, cfg.ransac).inliers; });
    rep.inliers = reg.inliers.size();

    const auto pairs = correspondences_of(reg.inliers);
    reg.estimate = clock.run("estimation", [&] { return estimate(pairs); });
    rep.model_kind = reg.estimate->model.kind;
    rep.residuals = reg.estimate->residuals;
    rep.mean_residual = reg.estimate->mean_residual();
    rep.max_residual = reg.estimate->max_residual();

    clock.run("resampling", [&] {
      const Dims ref = da.dims;
      std::visit(
          [&](const auto& sensed) {
            auto res = resample(sensed, reg.estimate->model, cfg.interpolation, ref, CanvasPolicy::union_box);
            reg.canvas = res.canvas;
            reg.registered = InputImage(std::move(res.image));
            reg.overlay = detail::compose_overlay(image01, *reg.registered, res.valid, res.canvas);
          },
          image02);
    });
    rep.registered = true;
  } catch (const Error& e) {
    rep.registered = false;
    rep.cause = e.code();
    rep.message = e.what();
  }
  return reg;
}

/// Process exit status for a finished run: 0 registered, 1 for input or
/// configuration problems, 2 when registration itself failed.
inline int exit_status(const RegistrationReport& r) {
  if (r.registered) return 0;
  switch (*r.cause) {
    case ErrorCode::io:
    case ErrorCode::config:
    case ErrorCode::input:
    case ErrorCode::argument:
    case ErrorCode::spec: return 1;
    default: return 2;
  }
}

/// Artifact file names written on success, in writing order.
inline const std::vector<std::string>& artifact_names() {
  static const std::vector<std::string> names{"registered.png", "overlay.png",  "features_01.json", "features_02.json",
                                              "matches.json",   "inliers.json", "transform.json",   "report.json"};
  return names;
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

/// Writes the artifacts of a finished run. A failed run leaves report.json
/// as the only artifact; stale artifacts from earlier runs are removed.
inline void write_artifacts(const Registration& reg, const PipelineConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& name : artifact_names()) std::filesystem::remove(dir / name);
  const Json report = report_to_json(reg.report, cfg);
  if (!reg.report.registered) {
    write_text(dir / "report.json", dump(report));
    return;
  }
  const std::string mode = match_mode(cfg);
  write_png(dir / "registered.png", *reg.registered);
  write_png(dir / "overlay.png", *reg.overlay);
  write_text(dir / "features_01.json", dump(reg.detections[0]->to_json()));
  write_text(dir / "features_02.json", dump(reg.detections[1]->to_json()));
  write_text(dir / "matches.json", dump(matches_to_json(reg.matches, mode)));
  write_text(dir / "inliers.json", dump(matches_to_json(reg.inliers, mode)));
  write_text(dir / "transform.json", dump(transform_to_json(reg.estimate->model, *reg.canvas)));
  if (cfg.debug) {
    write_detection_debug(*reg.detections[0], dir, "01");
    write_detection_debug(*reg.detections[1], dir, "02");
  }
  write_text(dir / "report.json", dump(report));
}

/// Reads both images, registers them and writes the artifacts into cfg.out.
/// Unreadable inputs produce a failed report with an I/O cause.
inline Registration register_pair(const std::filesystem::path& image01, const std::filesystem::path& image02, const PipelineConfig& cfg) {
  Registration reg;
  std::optional<InputImage> a;
  std::optional<InputImage> b;
  try {
    a = read_image(image01);
    b = read_image(image02);
  } catch (const Error& e) {
    reg.report.cause = e.code();
    reg.report.message = e.what();
  }
  if (a && b) reg = register_images(*a, *b, cfg);
  write_artifacts(reg, cfg, cfg.out);
  return reg;
}

/// Feature JSON for one image file, with debug rasters written to `debug_dir`
/// when given.
inline Json detect_features(const std::filesystem::path& image, Modality modality,
                            const std::optional<std::filesystem::path>& debug_dir = std::nullopt) {
  const Detection d = detect(read_image(image), modality);
  if (debug_dir) {
    std::filesystem::create_directories(*debug_dir);
    write_detection_debug(d, *debug_dir, "features");
  }
  return d.to_json();
}

}  // namespace retreg
