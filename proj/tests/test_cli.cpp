#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "fgs/cli.hpp"
#include "support.hpp"

using namespace fgs;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string value_of(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(key + "=", 0) == 0) return line.substr(key.size() + 1);
  }
  return "";
}

int run_binary(const std::string& args) {
  const std::string cmd = std::string(FGS_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Image blob(std::size_t w, std::size_t h, double cx, double cy, double sigma) {
  Image img(w, h, 1);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      img.set(x, y, 0, std::exp(-r2 / (2 * sigma * sigma)));
    }
  return img;
}

// A 3x3 fixture with an adversarial example within L0 distance 3, stored as
// files so that the CLI and the test see identical inputs.
struct AttackFixture {
  fixtures::TempDir dir;
  RunConfig cfg;
  std::optional<BruteForceResult> brute;

  AttackFixture() {
    std::mt19937_64 rng(1234);
    for (;;) {
      auto inst = fixtures::tiny_instance(3, 3, 1, rng);
      save_image(inst.alpha, dir / "alpha.pgm");
      save_model(inst.model, dir / "model.txt");
      const Image alpha = load_image(dir / "alpha.pgm");
      const BuiltInModel model = load_model(dir / "model.txt");
      brute = brute_force_min_severity(alpha, model, inst.config, inst.grid);
      if (brute && brute->severity >= 2) break;
    }
    cfg.input = dir / "alpha.pgm";
    cfg.model_file = dir / "model.txt";
    cfg.d = 3;
    cfg.max_depth = 4;
    cfg.tc1_iters = 3000;
    cfg.tc2_iters = 3000;
    cfg.seed = 5;
    cfg.out_dir = dir / "out";
  }
};

}  // namespace

TEST(CliAttack, ToyFixtureMatchesBruteForce) {
  AttackFixture fx;
  std::ostringstream out, err;
  ASSERT_EQ(cmd_attack(fx.cfg, out, err), kExitOk) << err.str();
  const std::string summary = slurp(fx.cfg.out_dir / "summary.txt");
  EXPECT_EQ(summary, out.str());
  EXPECT_EQ(value_of(summary, "severity_L0"), detail::format_double(fx.brute->severity));
  EXPECT_EQ(value_of(summary, "found"), "true");
  EXPECT_EQ(value_of(summary, "terminated_by"), "TC1");
  EXPECT_TRUE(std::filesystem::exists(fx.cfg.out_dir / "adversarial.pgm"));
  const std::string trace = slurp(fx.cfg.out_dir / "trace.csv");
  EXPECT_EQ(trace.rfind("iteration,best,current,window\n", 0), 0u);
  EXPECT_EQ(std::count(trace.begin(), trace.end(), '\n'), 3001);
}

TEST(CliAttack, ByteIdenticalAcrossRuns) {
  AttackFixture fx;
  fx.cfg.tc1_iters = 300;
  fx.cfg.tc2_iters = 30;
  std::ostringstream out, err;
  const int a = cmd_attack(fx.cfg, out, err);
  const auto trace_a = slurp(fx.cfg.out_dir / "trace.csv");
  const auto img_a = slurp(fx.cfg.out_dir / "adversarial.pgm");
  std::filesystem::remove_all(fx.cfg.out_dir);
  const int b = cmd_attack(fx.cfg, out, err);
  EXPECT_EQ(a, b);
  EXPECT_EQ(trace_a, slurp(fx.cfg.out_dir / "trace.csv"));
  EXPECT_EQ(img_a, slurp(fx.cfg.out_dir / "adversarial.pgm"));
}

TEST(CliAttack, ZeroDistanceFindsNothing) {
  AttackFixture fx;
  fx.cfg.d = 0;
  fx.cfg.tc1_iters = 200;
  fx.cfg.tc2_iters = 10;
  std::ostringstream out, err;
  EXPECT_EQ(cmd_attack(fx.cfg, out, err), kExitNotFound) << err.str();
  EXPECT_EQ(value_of(out.str(), "found"), "false");
  EXPECT_FALSE(std::filesystem::exists(fx.cfg.out_dir / "adversarial.pgm"));
}

TEST(CliAttack, BadModelPathIsAnError) {
  AttackFixture fx;
  fx.cfg.model_file = fx.dir / "missing.txt";
  std::ostringstream out, err;
  EXPECT_EQ(cmd_attack(fx.cfg, out, err), kExitError);
  EXPECT_NE(err.str().find("missing.txt"), std::string::npos);
  const std::string msg = err.str();
  EXPECT_EQ(std::count(msg.begin(), msg.end(), '\n'), 1);
}

TEST(CliAttack, ExternalOracleGivesSameResultAsBuiltIn) {
  AttackFixture fx;
  fx.cfg.tc1_iters = 100;
  fx.cfg.tc2_iters = 100;
  std::ostringstream out1, out2, err;
  ASSERT_EQ(cmd_attack(fx.cfg, out1, err), kExitOk) << err.str();
  const auto trace = slurp(fx.cfg.out_dir / "trace.csv");
  fx.cfg.oracle_cmd = std::string(FGS_REFERENCE_ORACLE) + " --model " + fx.cfg.model_file->string();
  fx.cfg.model_file.reset();
  ASSERT_EQ(cmd_attack(fx.cfg, out2, err), kExitOk) << err.str();
  EXPECT_EQ(out1.str(), out2.str());
  EXPECT_EQ(trace, slurp(fx.cfg.out_dir / "trace.csv"));
}

TEST(CliCertify, SafeUnsafeInconclusive) {
  fixtures::TempDir dir;
  save_model(fixtures::mean_threshold_model(9, 0.5, 4.0), dir / "m.txt");
  save_image(Image(3, 3, 1, 204 / 255.0), dir / "far.pgm");
  save_image(Image(3, 3, 1, 131 / 255.0), dir / "near.pgm");
  save_image(Image(3, 3, 1, 230 / 255.0), dir / "d0.pgm");
  save_image(Image(3, 3, 1, 25 / 255.0), dir / "d1.pgm");
  RunConfig cfg;
  cfg.model_file = dir / "m.txt";
  cfg.norm = Norm::L1;
  cfg.mode = ManipulationMode::Step;
  cfg.tau = 0.1;
  cfg.d = 0.3;
  cfg.dataset = {dir / "d0.pgm", dir / "d1.pgm"};
  cfg.out_dir = dir / "out";

  cfg.input = dir / "far.pgm";
  std::ostringstream out, err;
  EXPECT_EQ(cmd_certify(cfg, out, err), kExitOk) << err.str() << out.str();
  EXPECT_EQ(value_of(out.str(), "verdict"), "SAFE");
  EXPECT_EQ(value_of(out.str(), "witness"), "none");
  EXPECT_FALSE(value_of(out.str(), "grid_count").empty());

  cfg.input = dir / "near.pgm";
  std::ostringstream out2;
  EXPECT_EQ(cmd_certify(cfg, out2, err), kExitNotFound);
  EXPECT_EQ(value_of(out2.str(), "verdict"), "UNSAFE");
  EXPECT_TRUE(std::filesystem::exists(value_of(out2.str(), "witness")));

  cfg.dataset.clear();
  cfg.ell = 0.001;
  std::ostringstream out3;
  EXPECT_EQ(cmd_certify(cfg, out3, err), kExitInconclusive);
  EXPECT_EQ(value_of(out3.str(), "verdict"), "INCONCLUSIVE");

  cfg.ell.reset();
  std::ostringstream out4, err4;
  EXPECT_EQ(cmd_certify(cfg, out4, err4), kExitError);
  EXPECT_NE(err4.str().find("--ell"), std::string::npos);
}

TEST(CliFeatures, BlobAndConstant) {
  fixtures::TempDir dir;
  save_image(blob(32, 32, 16, 16, 3), dir / "blob.pgm");
  save_image(Image(32, 32, 1, 0.5), dir / "flat.pgm");
  RunConfig cfg;
  cfg.input = dir / "blob.pgm";
  cfg.out_dir = dir / "blob";
  cfg.heatmap = dir / "heat.pgm";
  std::ostringstream out, err;
  ASSERT_EQ(cmd_features(cfg, out, err), kExitOk) << err.str();
  std::istringstream csv(slurp(dir / "blob" / "keypoints.csv"));
  std::string header, first;
  std::getline(csv, header);
  std::getline(csv, first);
  EXPECT_EQ(header, "x,y,size,response");
  double x = 0, y = 0;
  ASSERT_EQ(std::sscanf(first.c_str(), "%lf,%lf", &x, &y), 2);
  EXPECT_LE(std::hypot(x - 16, y - 16), 1.5);
  const Image heat = load_image(dir / "heat.pgm");
  const auto kps = detect_keypoints(load_image(dir / "blob.pgm"));
  const auto sal = build_saliency(kps, 32, 32);
  const auto m = sal.masses();
  const double top = *std::max_element(m.begin(), m.end());
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_NEAR(heat.values()[i], m[i] / top, 0.5 / 255 + 1e-12);

  cfg.input = dir / "flat.pgm";
  cfg.out_dir = dir / "flat";
  cfg.heatmap.reset();
  ASSERT_EQ(cmd_features(cfg, out, err), kExitOk);
  const std::string flat = slurp(dir / "flat" / "keypoints.csv");
  EXPECT_EQ(std::count(flat.begin(), flat.end(), '\n'), 17);
}

TEST(CliOracleCheck, ReferenceAndFaults) {
  RunConfig cfg;
  cfg.timeout_secs = 5;
  auto check = [&](const std::string& args, std::string& diag) {
    cfg.oracle_cmd = std::string(FGS_REFERENCE_ORACLE) + " " + args;
    std::ostringstream out, err;
    const int code = cmd_oracle_check(cfg, out, err);
    diag = err.str();
    return code;
  };
  std::string diag;
  EXPECT_EQ(check("--classes 3", diag), kExitOk) << diag;
  EXPECT_EQ(check("--fault bad-sum", diag), kExitError);
  EXPECT_NE(diag.find("sum to 1.1"), std::string::npos) << diag;
  EXPECT_EQ(check("--fault wrong-count", diag), kExitError);
  EXPECT_NE(diag.find("expected 2 probabilities, got 3"), std::string::npos) << diag;
  EXPECT_EQ(check("--fault bad-token", diag), kExitError);
  EXPECT_NE(diag.find("unexpected token 'RESULT'"), std::string::npos) << diag;
  cfg.dims = "3x1";
  EXPECT_EQ(check("", diag), kExitError);
}

TEST(CliBinary, ExitCodes) {
  fixtures::TempDir dir;
  save_image(Image(16, 16, 1, 0.5), dir / "flat.pgm");
  EXPECT_EQ(run_binary("features " + (dir / "flat.pgm").string() + " --out " + dir.path().string()), 0);
  EXPECT_EQ(run_binary("attack"), 1);
  EXPECT_EQ(run_binary("bogus"), 1);
  EXPECT_EQ(run_binary("attack " + (dir / "flat.pgm").string() + " --model " +
                       (dir / "none.txt").string()),
            1);
  EXPECT_EQ(run_binary("oracle-check --oracle-cmd '" + std::string(FGS_REFERENCE_ORACLE) + "'"), 0);
  EXPECT_EQ(run_binary("--help"), 0);
}
