#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "fgs/cli.hpp"

namespace {

void add_oracle_options(CLI::App& sub, fgs::RunConfig& cfg) {
  auto* group = sub.add_option_group("classifier");
  group->add_option("--model", cfg.model_file, "Built-in weight file (linear or mlp1)");
  group->add_option("--oracle-cmd", cfg.oracle_cmd, "Shell command speaking the oracle protocol");
  group->add_option("--oracle-tcp", cfg.oracle_tcp, "HOST:PORT of an oracle server");
  group->require_option(1);
  sub.add_option("--timeout", cfg.timeout_secs, "Seconds to wait for each oracle reply");
}

void add_region_options(CLI::App& sub, fgs::RunConfig& cfg, std::string& norm, std::string& mode,
                        std::optional<std::size_t>& target, bool& non_targeted) {
  sub.add_option("--norm", norm, "Distance norm: 0, 1, 2 or inf")
      ->check(CLI::IsMember({"0", "1", "2", "inf"}));
  sub.add_option("--d", cfg.d, "Distance bound")->check(CLI::NonNegativeNumber);
  sub.add_option("--tau", cfg.tau, "Manipulation step size")->check(CLI::PositiveNumber);
  sub.add_option("--mode", mode, "Manipulation mode")->check(CLI::IsMember({"step", "saturate"}));
  auto* t = sub.add_option("--target", target, "Target class (targeted attack)");
  sub.add_flag("--non-targeted", non_targeted, "Any class change counts (default)")->excludes(t);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feature-guided black-box robustness testing for image classifiers"};
  app.require_subcommand(1);
  fgs::RunConfig cfg;
  std::string norm = "0";
  std::string mode = "saturate";
  std::string player2 = "coop";
  std::optional<std::size_t> target;
  bool non_targeted = false;

  auto* attack = app.add_subcommand("attack", "Search for a minimal adversarial example");
  attack->add_option("image", cfg.input, "Input PGM/PPM image")->required();
  add_oracle_options(*attack, cfg);
  add_region_options(*attack, cfg, norm, mode, target, non_targeted);
  attack->add_option("--player2", player2, "Role of player II")
      ->check(CLI::IsMember({"coop", "adv", "nature"}));
  attack->add_option("--tc1-iters", cfg.tc1_iters, "Total iteration budget");
  attack->add_option("--tc1-secs", cfg.tc1_secs, "Total wall-clock budget");
  attack->add_option("--tc2-iters", cfg.tc2_iters, "Iterations before committing each move");
  attack->add_option("--tc2-secs", cfg.tc2_secs, "Seconds before committing each move");
  attack->add_option("--epsilon", cfg.epsilon, "Stop after ceil(1/epsilon) unimproved iterations");
  attack->add_option("--seed", cfg.seed, "Master random seed");
  attack->add_option("--threads", cfg.threads, "Leaf-parallel playout threads")->check(CLI::PositiveNumber);
  attack->add_option("--max-depth", cfg.max_depth, "Cap on moves per line of play")->check(CLI::PositiveNumber);
  attack->add_option("--feature-radius", cfg.feature_radius, "Keypoint disc radius in sizes")
      ->check(CLI::PositiveNumber);
  attack->add_option("--out", cfg.out_dir, "Output directory");

  auto* certify = app.add_subcommand("certify", "Certify an L1 region around an image");
  certify->add_option("image", cfg.input, "Input PGM/PPM image")->required();
  add_oracle_options(*certify, cfg);
  add_region_options(*certify, cfg, norm, mode, target, non_targeted);
  certify->add_option("--hbar", cfg.hbar, "Lipschitz constant (default: analytic bound)");
  certify->add_option("--ell", cfg.ell, "Minimum confidence gap");
  certify->add_option("--dataset", cfg.dataset, "Images used to estimate ell");
  certify->add_option("--out", cfg.out_dir, "Directory for the witness image");

  auto* features = app.add_subcommand("features", "Dump keypoints and a saliency heatmap");
  features->add_option("image", cfg.input, "Input PGM/PPM image")->required();
  features->add_option("--out", cfg.out_dir, "Output directory");
  features->add_option("--heatmap", cfg.heatmap, "Write the saliency heatmap to this PGM");

  auto* check = app.add_subcommand("oracle-check", "Check an external oracle for protocol compliance");
  auto* src = check->add_option_group("oracle");
  src->add_option("--oracle-cmd", cfg.oracle_cmd, "Shell command speaking the oracle protocol");
  src->add_option("--oracle-tcp", cfg.oracle_tcp, "HOST:PORT of an oracle server");
  src->require_option(1);
  check->add_option("--dims", cfg.dims, "Probe image dimensions WxHxC");
  check->add_option("--timeout", cfg.timeout_secs, "Seconds to wait for each reply");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : fgs::kExitError;
  }

  try {
    cfg.norm = fgs::parse_norm(norm);
  } catch (const fgs::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return fgs::kExitError;
  }
  cfg.mode = mode == "step" ? fgs::ManipulationMode::Step : fgs::ManipulationMode::Saturate;
  cfg.target = target;
  static const std::map<std::string, fgs::Player2Role> roles{
      {"coop", fgs::Player2Role::Cooperative},
      {"adv", fgs::Player2Role::Adversarial},
      {"nature", fgs::Player2Role::Nature}};
  cfg.player2 = roles.at(player2);

  if (attack->parsed()) return fgs::cmd_attack(cfg, std::cout, std::cerr);
  if (certify->parsed()) return fgs::cmd_certify(cfg, std::cout, std::cerr);
  if (features->parsed()) return fgs::cmd_features(cfg, std::cout, std::cerr);
  return fgs::cmd_oracle_check(cfg, std::cout, std::cerr);
}
