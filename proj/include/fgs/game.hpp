#pragma once

// The two-player turn-based game over images. Player I picks a keypoint,
// player II picks one pixel inside that keypoint's disc and an instruction;
// the pixel (all channels) is manipulated and the image reclassified.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fgs/error.hpp"
#include "fgs/features.hpp"
#include "fgs/image.hpp"
#include "fgs/oracle.hpp"
#include "fgs/rng.hpp"

namespace fgs {

enum class Player2Role { Cooperative, Adversarial, Nature };

struct Goal {
  bool targeted = false;
  std::size_t target = 0;

  static Goal non_targeted() { return {}; }
  static Goal toward(std::size_t c) { return {true, c}; }
};

struct GameConfig {
  Norm norm = Norm::L0;
  double distance_bound = 10.0;
  double tau = 1.0;
  ManipulationMode mode = ManipulationMode::Saturate;
  Goal goal;
  Player2Role player2_role = Player2Role::Cooperative;
  double feature_radius_sigmas = 2.0;
  std::size_t max_depth = 1000;

  void validate() const {
    if (!(distance_bound >= 0.0)) throw InvalidArgument("distance bound d must be >= 0");
    if (!(tau > 0.0)) throw InvalidArgument("tau must be > 0");
    if (!(feature_radius_sigmas > 0.0)) throw InvalidArgument("feature radius must be > 0");
    if (max_depth < 1) throw InvalidArgument("max_depth must be >= 1");
  }
};

enum class Turn { Player1, Player2 };

struct GameState {
  std::shared_ptr<const Image> image;
  std::size_t depth = 0;
  ClassProbs probs;
  Turn turn = Turn::Player1;
  std::size_t feature = 0;  // selected keypoint, meaningful on Player2 turns
};

struct FeatureMove {
  std::size_t feature = 0;
  friend bool operator==(const FeatureMove&, const FeatureMove&) = default;
};

struct PixelMove {
  Pixel pixel;
  Instruction instruction = Instruction::Plus;
  friend bool operator==(const PixelMove&, const PixelMove&) = default;
};

using Move = std::variant<FeatureMove, PixelMove>;

struct TerminalStatus {
  enum class Kind { NonTerminal, AdversarialFound, OutOfBounds, DepthCapped };
  Kind kind = Kind::NonTerminal;
  double severity = 0.0;  // set for AdversarialFound

  bool terminal() const { return kind != Kind::NonTerminal; }
  bool adversarial() const { return kind == Kind::AdversarialFound; }
};

inline double reward_of_terminal(const TerminalStatus& s) {
  switch (s.kind) {
    case TerminalStatus::Kind::NonTerminal:
      throw InvalidArgument("reward_of_terminal: status is not terminal");
    case TerminalStatus::Kind::AdversarialFound:
      return 1.0 / s.severity;
    case TerminalStatus::Kind::OutOfBounds:
    case TerminalStatus::Kind::DepthCapped:
      return 0.0;
  }
  return 0.0;
}

// Pixels within radius_sigmas * size of the keypoint centre, clipped to the
// image, in (y, x) order. The pixel nearest the centre is always included.
inline std::vector<Pixel> feature_disc(const Keypoint& kp, std::size_t width, std::size_t height,
                                       double radius_sigmas) {
  const double r = radius_sigmas * kp.size;
  const auto lo = [](double v) { return static_cast<std::ptrdiff_t>(std::floor(v)); };
  const auto hi = [](double v) { return static_cast<std::ptrdiff_t>(std::ceil(v)); };
  const auto x0 = std::max<std::ptrdiff_t>(0, lo(kp.x - r));
  const auto x1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(width) - 1, hi(kp.x + r));
  const auto y0 = std::max<std::ptrdiff_t>(0, lo(kp.y - r));
  const auto y1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(height) - 1, hi(kp.y + r));
  const auto nx = static_cast<std::size_t>(
      std::clamp<double>(std::floor(kp.x + 0.5), 0.0, static_cast<double>(width - 1)));
  const auto ny = static_cast<std::size_t>(
      std::clamp<double>(std::floor(kp.y + 0.5), 0.0, static_cast<double>(height - 1)));

  std::vector<Pixel> out;
  for (auto y = y0; y <= y1; ++y) {
    for (auto x = x0; x <= x1; ++x) {
      const double dx = static_cast<double>(x) - kp.x;
      const double dy = static_cast<double>(y) - kp.y;
      const Pixel p{static_cast<std::size_t>(x), static_cast<std::size_t>(y)};
      if (std::sqrt(dx * dx + dy * dy) <= r || (p.x == nx && p.y == ny)) out.push_back(p);
    }
  }
  if (out.empty()) out.push_back(Pixel{nx, ny});
  return out;
}

// Keypoint disc with the component's Gaussian density renormalised over it.
struct FeatureDisc {
  std::vector<Pixel> pixels;
  std::vector<double> weights;  // sums to 1
  std::vector<double> cdf;

  std::size_t sample(Rng& rng) const {
    const double u = uniform01(rng) * cdf.back();
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
  }
};

inline FeatureDisc make_feature_disc(const Keypoint& kp, std::size_t width, std::size_t height,
                                     double radius_sigmas) {
  FeatureDisc d;
  d.pixels = feature_disc(kp, width, height, radius_sigmas);
  std::vector<double> logw;
  for (const Pixel& p : d.pixels) {
    const double dx = static_cast<double>(p.x) - kp.x;
    const double dy = static_cast<double>(p.y) - kp.y;
    logw.push_back(-(dx * dx + dy * dy) / (2.0 * kp.size * kp.size));
  }
  const double top = *std::max_element(logw.begin(), logw.end());
  double sum = 0.0;
  for (double lw : logw) {
    d.weights.push_back(std::exp(lw - top));
    sum += d.weights.back();
  }
  double acc = 0.0;
  for (double& w : d.weights) {
    w /= sum;
    acc += w;
    d.cdf.push_back(acc);
  }
  return d;
}

// M(alpha, k, d): the original image, the black-box oracle, the keypoints and
// the rules. States are immutable values; the game object is shared read-only.
class Game {
 public:
  Game(Image original, const Oracle& oracle, std::vector<Keypoint> keypoints, GameConfig config)
      : original_(std::make_shared<const Image>(std::move(original))),
        oracle_(&oracle),
        keypoints_(std::move(keypoints)),
        config_(config) {
    config_.validate();
    if (keypoints_.empty()) throw InvalidArgument("game: keypoint list is empty");
    original_probs_ = oracle_->classify(*original_);
    original_label_ = original_probs_.argmax();
    if (config_.goal.targeted && config_.goal.target >= oracle_->class_count()) {
      throw InvalidArgument("game: target class " + std::to_string(config_.goal.target) +
                            " >= class count " + std::to_string(oracle_->class_count()));
    }
    double total = 0.0;
    for (const auto& kp : keypoints_) {
      discs_.push_back(
          make_feature_disc(kp, original_->width(), original_->height(), config_.feature_radius_sigmas));
      total += kp.response;
      feature_cdf_.push_back(total);
    }
  }

  const Image& original() const { return *original_; }
  const Oracle& oracle() const { return *oracle_; }
  const std::vector<Keypoint>& keypoints() const { return keypoints_; }
  const GameConfig& config() const { return config_; }
  std::size_t original_label() const { return original_label_; }
  const FeatureDisc& disc(std::size_t feature) const { return discs_.at(feature); }

  // sigma_I(lambda) = response / sum(responses)
  double feature_probability(std::size_t feature) const {
    return keypoints_.at(feature).response / feature_cdf_.back();
  }

  GameState initial_state() const {
    return GameState{original_, 0, original_probs_, Turn::Player1, 0};
  }

  bool goal_reached(const ClassProbs& probs) const {
    const std::size_t label = probs.argmax();
    return config_.goal.targeted ? label == config_.goal.target : label != original_label_;
  }

  std::vector<std::size_t> player1_moves(const GameState& s) const {
    if (s.turn != Turn::Player1) throw InvalidArgument("player1_moves: not player I's turn");
    std::vector<std::size_t> out(keypoints_.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
    return out;
  }

  std::vector<PixelMove> player2_moves(const GameState& s) const {
    if (s.turn != Turn::Player2) throw InvalidArgument("player2_moves: not player II's turn");
    std::vector<PixelMove> out;
    for (const Pixel& p : discs_[s.feature].pixels) {
      out.push_back({p, Instruction::Plus});
      out.push_back({p, Instruction::Minus});
    }
    return out;
  }

  GameState step(const GameState& s, const Move& move) const {
    if (const auto* fm = std::get_if<FeatureMove>(&move)) {
      if (s.turn != Turn::Player1) throw InvalidArgument("step: feature move on player II's turn");
      if (fm->feature >= keypoints_.size()) throw InvalidArgument("step: feature index out of range");
      GameState next = s;
      next.turn = Turn::Player2;
      next.feature = fm->feature;
      return next;
    }
    const auto& pm = std::get<PixelMove>(move);
    if (s.turn != Turn::Player2) throw InvalidArgument("step: pixel move on player I's turn");
    const auto& pixels = discs_[s.feature].pixels;
    if (std::find(pixels.begin(), pixels.end(), pm.pixel) == pixels.end()) {
      throw InvalidArgument("step: pixel outside the selected feature");
    }
    ManipulationSpec spec{{pm.pixel}, pm.instruction, config_.tau, config_.mode};
    auto image = std::make_shared<const Image>(apply_manipulation(*s.image, spec));
    ClassProbs probs = oracle_->classify(*image);
    return GameState{std::move(image), s.depth + 1, std::move(probs), Turn::Player1, 0};
  }

  TerminalStatus terminal_status(const GameState& s) const {
    if (s.turn != Turn::Player1) {
      throw InvalidArgument("terminal_status: only player I states can terminate");
    }
    const double dist = distance(*s.image, *original_, config_.norm);
    // An adversarial example must also lie within the distance bound.
    if (goal_reached(s.probs) && dist <= config_.distance_bound) {
      return {TerminalStatus::Kind::AdversarialFound, dist};
    }
    if (dist > config_.distance_bound) return {TerminalStatus::Kind::OutOfBounds, dist};
    if (s.depth >= config_.max_depth) return {TerminalStatus::Kind::DepthCapped, dist};
    return {TerminalStatus::Kind::NonTerminal, dist};
  }

  std::size_t sample_feature(Rng& rng) const {
    const double u = uniform01(rng) * feature_cdf_.back();
    auto it = std::upper_bound(feature_cdf_.begin(), feature_cdf_.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - feature_cdf_.begin()),
                                 feature_cdf_.size() - 1);
  }

  PixelMove sample_pixel_move(std::size_t feature, Rng& rng) const {
    const auto& d = discs_.at(feature);
    const Pixel p = d.pixels[d.sample(rng)];
    const Instruction ins = uniform01(rng) < 0.5 ? Instruction::Plus : Instruction::Minus;
    return {p, ins};
  }

 private:
  std::shared_ptr<const Image> original_;
  const Oracle* oracle_;
  std::vector<Keypoint> keypoints_;
  GameConfig config_;
  ClassProbs original_probs_;
  std::size_t original_label_ = 0;
  std::vector<FeatureDisc> discs_;
  std::vector<double> feature_cdf_;
};

}  // namespace fgs
