// retreg: register retinal image pairs, dump features, render phantoms.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "retreg/retreg.hpp"

namespace fs = std::filesystem;
using retreg::Json;

namespace {

/// Copies each option that was given on the command line into `flags`.
void collect(const CLI::App& app, Json& flags) {
  for (const CLI::Option* opt : app.get_options()) {
    if (opt->count() == 0) continue;
    const std::string key = opt->get_lnames().empty() ? "" : opt->get_lnames().front();
    if (!retreg::config_keys().contains(key)) continue;
    if (key == "debug") {
      flags[key] = true;
    } else {
      flags[key] = opt->as<std::string>();
    }
  }
}

void print_timings(const retreg::RegistrationReport& r) {
  for (const auto& t : r.timings) std::cerr << "  " << t.stage << ": " << t.milliseconds << " ms\n";
}

int run_register(const CLI::App& sub, const std::string& img1, const std::string& img2, const std::optional<std::string>& config) {
  Json flags = Json::object();
  collect(sub, flags);
  const auto cfg = retreg::load_config(config ? std::optional<fs::path>(*config) : std::nullopt, flags);
  const auto reg = retreg::register_pair(img1, img2, cfg);
  const auto& r = reg.report;
  if (r.registered) {
    std::cout << "registered: " << r.inliers << " inliers of " << r.initial_matches << " matches, " << retreg::to_string(*r.model_kind)
              << " model, mean residual " << r.mean_residual << " px\n";
  } else {
    std::cerr << "registration failed (" << retreg::to_string(*r.cause) << "): " << r.message << "\n";
  }
  print_timings(r);
  std::cout << "artifacts in " << cfg.out.string() << "\n";
  return retreg::exit_status(r);
}

int run_features(const std::string& image, const std::string& modality, bool debug, const std::optional<std::string>& out) {
  const auto cfg = retreg::apply_config(retreg::load_config(std::nullopt), Json{{"modality1", modality}});
  std::optional<fs::path> debug_dir;
  if (debug) debug_dir = out ? fs::path(*out) : cfg.out;
  std::cout << retreg::dump(retreg::detect_features(image, cfg.modality1, debug_dir));
  return 0;
}

int run_phantom(const std::string& spec_path, const std::string& out) {
  const Json j = Json::parse(retreg::read_text(spec_path));
  const auto doc = retreg::phantom_from_json(j);
  const auto ph = retreg::render(doc.spec);
  const fs::path dir(out);
  fs::create_directories(dir);
  retreg::write_png(dir / "phantom.png", ph.image);
  retreg::write_text(dir / "truth.json", retreg::dump(retreg::truth_to_json(ph.truth, ph.image.dims())));
  retreg::write_text(dir / "spec.json", retreg::dump(retreg::spec_to_json(doc.spec)));
  std::cout << "phantom: " << ph.truth.bifurcations.size() << " bifurcations\n";
  if (doc.warp) {
    const auto warped = retreg::warp(ph.image, ph.truth, *doc.warp);
    retreg::write_png(dir / "warped.png", warped.image);
    retreg::write_text(dir / "warped_truth.json", retreg::dump(retreg::truth_to_json(warped.truth, warped.image.dims())));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retinal image pair registration from vessel bifurcations"};
  app.require_subcommand(1);

  std::string img1;
  std::string img2;
  std::optional<std::string> config;
  CLI::App* reg = app.add_subcommand("register", "Register <img2> onto <img1>");
  reg->add_option("img1", img1, "Reference image")->required();
  reg->add_option("img2", img2, "Sensed image")->required();
  reg->add_option("--config", config, "JSON configuration file");
  reg->add_option("--modality1", "Modality of img1: 1 color, 2 red-free, 3 angiography");
  reg->add_option("--modality2", "Modality of img2");
  reg->add_option("--approach", "1 mutual information, 2 invariants");
  reg->add_option("--match-filter", "baseline or mutual");
  reg->add_option("--metric", "raw or zscore");
  reg->add_option("--interpolation", "nearest, bilinear or bicubic");
  reg->add_option("--ransac-threshold", "Inlier distance, px");
  reg->add_option("--ransac-iters", "RANSAC iterations");
  reg->add_option("--seed", "RANSAC seed");
  reg->add_flag("--debug", "Write intermediate rasters");
  reg->add_option("--out", "Output directory");

  std::string fimage;
  std::string fmodality;
  bool fdebug = false;
  std::optional<std::string> fout;
  CLI::App* feat = app.add_subcommand("features", "Print the bifurcation features of one image as JSON");
  feat->add_option("img", fimage, "Input image")->required();
  feat->add_option("--modality", fmodality, "1 color, 2 red-free, 3 angiography")->required();
  feat->add_flag("--debug", fdebug, "Write intermediate rasters");
  feat->add_option("--out", fout, "Directory for debug rasters");

  std::string spec;
  std::string pout;
  CLI::App* ph = app.add_subcommand("phantom", "Render a synthetic vessel phantom and its ground truth");
  ph->add_option("spec", spec, "Phantom spec JSON")->required();
  ph->add_option("--out", pout, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (reg->parsed()) return run_register(*reg, img1, img2, config);
    if (feat->parsed()) return run_features(fimage, fmodality, fdebug, fout);
    if (ph->parsed()) return run_phantom(spec, pout);
  } catch (const retreg::Error& e) {
    std::cerr << "error (" << retreg::to_string(e.code()) << "): " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
