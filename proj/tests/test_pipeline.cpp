#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>

#include "retreg/retreg.hpp"
#include "support.hpp"

using namespace retreg;
namespace fs = std::filesystem;

namespace {

/// Exit status of the CLI run with `args`; stdout and stderr go to `log`.
int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(RETREG_CLI) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

GrayImage forest_image(std::uint64_t seed) {
  ForestOptions opt;
  opt.rows = 512;
  opt.cols = 512;
  opt.target_bifurcations = 12;
  return render(random_forest_spec(seed, opt)).image;
}

PipelineConfig config_in(const fs::path& out) {
  PipelineConfig cfg = load_config(std::nullopt, Json::object(), nullptr);
  cfg.out = out;
  return cfg;
}

}  // namespace

TEST(Config, DefaultsWithoutAnySource) {
  const auto c = load_config(std::nullopt, Json::object(), nullptr);
  EXPECT_EQ(c.modality1, Modality::red_free);
  EXPECT_EQ(c.modality2, Modality::red_free);
  EXPECT_EQ(c.approach, 2);
  EXPECT_EQ(c.match_filter, MatchFilter::baseline);
  EXPECT_EQ(c.metric, InvariantMetric::raw);
  EXPECT_EQ(c.interpolation, Interpolation::bilinear);
  EXPECT_DOUBLE_EQ(c.ransac.inlier_threshold, 3.0);
  EXPECT_EQ(c.ransac.iterations, 2000);
  EXPECT_EQ(c.ransac.seed, 42u);
  EXPECT_FALSE(c.debug);
  EXPECT_EQ(c.out, fs::path(kDefaultOutDir));
}

TEST(Config, FlagsOverrideFileOverrideEnvironment) {
  const auto dir = fixtures::scratch_dir("config");
  write_text(dir / "cfg.json", R"({"interpolation": "bilinear", "out": "from_file", "approach": 1})");
  const auto c = load_config(dir / "cfg.json", Json{{"interpolation", "nearest"}}, "from_env");
  EXPECT_EQ(c.interpolation, Interpolation::nearest);
  EXPECT_EQ(c.approach, 1);
  EXPECT_EQ(c.out, fs::path("from_file"));
  EXPECT_EQ(load_config(std::nullopt, Json::object(), "from_env").out, fs::path("from_env"));
  EXPECT_EQ(load_config(dir / "cfg.json", Json{{"out", "from_flag"}}, "from_env").out, fs::path("from_flag"));
}

TEST(Config, FlagStringsAreParsed) {
  const auto c = apply_config({}, Json{{"ransac-iters", "50"}, {"ransac-threshold", "2.5"}, {"seed", "7"}, {"modality1", "3"}});
  EXPECT_EQ(c.ransac.iterations, 50);
  EXPECT_DOUBLE_EQ(c.ransac.inlier_threshold, 2.5);
  EXPECT_EQ(c.ransac.seed, 7u);
  EXPECT_EQ(c.modality1, Modality::angiography);
}

TEST(Config, InvalidModalityNamesTheKey) {
  try {
    apply_config({}, Json{{"modality1", 4}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::config);
    EXPECT_NE(std::string(e.what()).find("modality"), std::string::npos);
  }
}

TEST(Config, UnknownKeyNamed) {
  try {
    apply_config({}, Json{{"colour", 1}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("colour"), std::string::npos);
  }
  EXPECT_THROW(apply_config({}, Json{{"ransac-iters", 0}}), Error);
  EXPECT_THROW(apply_config({}, Json{{"approach", 3}}), Error);
}

TEST(Features, AllBlackImageHasNone) {
  const auto d = detect(GrayImage(128, 128, 0), Modality::red_free);
  EXPECT_TRUE(d.features().empty());
  EXPECT_EQ(d.to_json()["count"], 0);
}

TEST(Features, EquilateralYHasOneFeatureWithThreeBranches) {
  const auto ph = render(fixtures::equilateral_y(200));
  const Json j = detect(ph.image, Modality::red_free).to_json();
  ASSERT_EQ(j["count"], 1);
  EXPECT_EQ(j["coords"], "xy0");
  EXPECT_EQ(j["features"][0]["branches"].size(), 3u);
}

TEST(Features, TwelveNodePhantomRecall) {
  ForestOptions opt;
  opt.rows = 512;
  opt.cols = 512;
  opt.target_bifurcations = 12;
  // First seed whose forest reaches the full node count.
  std::uint64_t seed = 1;
  while (seed < 50 && random_forest_spec(seed, opt).trees.size() > 0 &&
         render(random_forest_spec(seed, opt)).truth.bifurcations.size() != 12u)
    ++seed;
  ASSERT_LT(seed, 50u);
  const auto ph = render(random_forest_spec(seed, opt));
  const auto d = detect(ph.image, Modality::red_free);
  int found = 0;
  for (const auto& b : ph.truth.bifurcations) {
    const bool hit = std::any_of(d.features().begin(), d.features().end(), [&](const BifurcationFeature& f) {
      return std::hypot(f.center.col - b.center.x, f.center.row - b.center.y) <= 3.0;
    });
    if (hit) ++found;
  }
  EXPECT_GE(found, 10);
}

TEST(Register, SelfRegistrationWritesEveryArtifact) {
  const auto dir = fixtures::scratch_dir("self");
  write_png(dir / "a.png", forest_image(2));
  auto cfg = config_in(dir / "out");
  cfg.debug = true;
  const auto reg = register_pair(dir / "a.png", dir / "a.png", cfg);
  ASSERT_TRUE(reg.report.registered) << reg.report.message;
  for (const auto& name : artifact_names()) EXPECT_TRUE(fs::exists(dir / "out" / name)) << name;
  EXPECT_TRUE(fs::exists(dir / "out" / "debug_01_overlay.png"));
  EXPECT_TRUE(fs::exists(dir / "out" / "debug_02_vessels.pbm"));
  EXPECT_LE(reg.report.inliers, reg.report.initial_matches);
  EXPECT_LT(reg.report.max_residual, 1e-6);
}

TEST(Register, ReportResidualsRecomputeFromInliersAndTransform) {
  const auto dir = fixtures::scratch_dir("residuals");
  const auto base = forest_image(2);
  const auto moved = warp(base, {}, centered_similarity(base.dims(), 2.0, 1.0, 6.0, -4.0)).image;
  write_png(dir / "a.png", base);
  write_png(dir / "b.png", moved);
  auto cfg = config_in(dir / "out");
  cfg.match_filter = MatchFilter::mutual;
  const auto reg = register_pair(dir / "a.png", dir / "b.png", cfg);
  ASSERT_TRUE(reg.report.registered) << reg.report.message;

  const Json inliers = Json::parse(read_text(dir / "out" / "inliers.json"));
  const Json transform = Json::parse(read_text(dir / "out" / "transform.json"));
  const Json report = Json::parse(read_text(dir / "out" / "report.json"));
  const auto model = transform_from_json(transform);
  const auto& per = report["residuals"]["per_inlier"];
  ASSERT_EQ(per.size(), inliers["matches"].size());
  for (std::size_t i = 0; i < per.size(); ++i) {
    const auto& m = inliers["matches"][i];
    const PointXY b{m["b"]["x"].get<double>(), m["b"]["y"].get<double>()};
    const PointXY p = apply(model, b);
    const double r = std::hypot(p.x - m["a"]["x"].get<double>(), p.y - m["a"]["y"].get<double>());
    EXPECT_NEAR(per[i].get<double>(), r, 1e-9);
  }
  EXPECT_EQ(report["outcome"], "registered");
  EXPECT_EQ(transform["maps"], "image02->image01");
}

TEST(Register, RepeatedRunsAreByteIdentical) {
  const auto dir = fixtures::scratch_dir("determinism");
  write_png(dir / "a.png", forest_image(4));
  write_png(dir / "b.png", warp(forest_image(4), {}, TransformModel::translation(5, 3)).image);
  for (const char* run : {"run1", "run2"}) register_pair(dir / "a.png", dir / "b.png", config_in(dir / run));
  for (const auto& name : artifact_names()) {
    if (name.ends_with(".png")) continue;
    ASSERT_TRUE(fs::exists(dir / "run1" / name)) << name;
    EXPECT_EQ(read_text(dir / "run1" / name), read_text(dir / "run2" / name)) << name;
  }
}

TEST(Register, SharedTargetFailureLeavesOnlyTheReport) {
  // image02 holds a single bifurcation, so every baseline match points at it.
  const auto dir = fixtures::scratch_dir("disjoint");
  write_png(dir / "a.png", forest_image(2));
  write_png(dir / "b.png", render(fixtures::equilateral_y(512)).image);
  fs::create_directories(dir / "out");
  write_text(dir / "out" / "matches.json", "stale");
  const auto reg = register_pair(dir / "a.png", dir / "b.png", config_in(dir / "out"));
  ASSERT_FALSE(reg.report.registered);
  ASSERT_TRUE(reg.report.cause);
  EXPECT_TRUE(*reg.report.cause == ErrorCode::degenerate_matches || *reg.report.cause == ErrorCode::insufficient_matches)
      << to_string(*reg.report.cause);
  EXPECT_EQ(exit_status(reg.report), 2);
  std::vector<std::string> present;
  for (const auto& e : fs::directory_iterator(dir / "out")) present.push_back(e.path().filename().string());
  EXPECT_EQ(present, std::vector<std::string>{"report.json"});
  const Json report = Json::parse(read_text(dir / "out" / "report.json"));
  EXPECT_EQ(report["outcome"], "failed");
}

TEST(Register, UnreadableInputIsIoFailure) {
  const auto dir = fixtures::scratch_dir("missing");
  const auto reg = register_pair(dir / "nope.png", dir / "nope.png", config_in(dir / "out"));
  ASSERT_TRUE(reg.report.cause);
  EXPECT_EQ(*reg.report.cause, ErrorCode::io);
  EXPECT_EQ(exit_status(reg.report), 1);
  EXPECT_TRUE(fs::exists(dir / "out" / "report.json"));
}

TEST(Io, PngRoundTripAndPbmHeader) {
  const auto dir = fixtures::scratch_dir("io");
  GrayImage g(5, 9, 0);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<std::uint8_t>(i * 5);
  write_png(dir / "g.png", g);
  EXPECT_EQ(std::get<GrayImage>(read_image(dir / "g.png")), g);
  RgbImage c(3, 3, Rgb{1, 2, 3});
  write_png(dir / "c.png", c);
  EXPECT_EQ(std::get<RgbImage>(read_image(dir / "c.png")), c);
  BinaryMask m(2, 9, 0);
  m(0, 0) = 1;
  m(1, 8) = 1;
  write_pbm(dir / "m.pbm", m);
  const std::string pbm = read_text(dir / "m.pbm");
  EXPECT_EQ(pbm.substr(0, 7), "P4\n9 2\n");
  ASSERT_EQ(pbm.size(), 7u + 4u);
  EXPECT_EQ(static_cast<unsigned char>(pbm[7]), 0x80);
  EXPECT_EQ(static_cast<unsigned char>(pbm[10]), 0x80);
}

TEST(Cli, InvalidModalityExitsOneNamingModality) {
  const auto dir = fixtures::scratch_dir("cli_modality");
  write_png(dir / "a.png", GrayImage(64, 64, 100));
  const int code = run_cli("register " + (dir / "a.png").string() + " " + (dir / "a.png").string() + " --modality1 4 --out " +
                               (dir / "out").string(),
                           dir / "log.txt");
  EXPECT_EQ(code, 1);
  EXPECT_NE(read_text(dir / "log.txt").find("modality"), std::string::npos);
}

TEST(Cli, UnknownConfigKeyExitsOne) {
  const auto dir = fixtures::scratch_dir("cli_config");
  write_png(dir / "a.png", GrayImage(64, 64, 100));
  write_text(dir / "cfg.json", R"({"wobble": true})");
  const int code = run_cli("register " + (dir / "a.png").string() + " " + (dir / "a.png").string() + " --config " +
                               (dir / "cfg.json").string(),
                           dir / "log.txt");
  EXPECT_EQ(code, 1);
  EXPECT_NE(read_text(dir / "log.txt").find("wobble"), std::string::npos);
}

TEST(Cli, RegistrationFailureExitsTwo) {
  const auto dir = fixtures::scratch_dir("cli_fail");
  write_png(dir / "a.png", GrayImage(64, 64, 100));
  const int code = run_cli("register " + (dir / "a.png").string() + " " + (dir / "a.png").string() + " --out " + (dir / "out").string(),
                           dir / "log.txt");
  EXPECT_EQ(code, 2);
  EXPECT_TRUE(fs::exists(dir / "out" / "report.json"));
}

TEST(Cli, FeaturesAndPhantomSubcommands) {
  const auto dir = fixtures::scratch_dir("cli_features");
  write_text(dir / "y.json", spec_to_json(fixtures::equilateral_y(200)).dump());
  ASSERT_EQ(run_cli("phantom " + (dir / "y.json").string() + " --out " + (dir / "ph").string(), dir / "log.txt"), 0);
  EXPECT_TRUE(fs::exists(dir / "ph" / "truth.json"));
  ASSERT_EQ(run_cli("features " + (dir / "ph" / "phantom.png").string() + " --modality 2", dir / "features.json"), 0);
  const Json j = Json::parse(read_text(dir / "features.json"));
  EXPECT_EQ(j["count"], 1);
  EXPECT_EQ(run_cli("features " + (dir / "missing.png").string() + " --modality 2", dir / "log.txt"), 1);
}
