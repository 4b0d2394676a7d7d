#include <gtest/gtest.h>

#include "fgs/features.hpp"
#include "fgs/game.hpp"
#include "support.hpp"

using namespace fgs;

namespace {

GameConfig l0_config(double d) {
  GameConfig c;
  c.norm = Norm::L0;
  c.distance_bound = d;
  c.mode = ManipulationMode::Saturate;
  return c;
}

}  // namespace

TEST(Game, FallbackGridGivesSixteenFeatureMoves) {
  auto model = fixtures::mean_threshold_model(64, 0.1);
  Game g(Image(8, 8, 1, 0.5), model, fallback_keypoints(8, 8), l0_config(3));
  auto moves = g.player1_moves(g.initial_state());
  ASSERT_EQ(moves.size(), 16u);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(moves[i], i);
}

TEST(Game, SingleKeypointAndEmptyList) {
  auto model = fixtures::mean_threshold_model(25, 0.1);
  Game g(Image(5, 5, 1, 0.5), model, {{2, 2, 1, 1}}, l0_config(3));
  EXPECT_EQ(g.player1_moves(g.initial_state()), std::vector<std::size_t>{0});
  EXPECT_THROW(Game(Image(5, 5, 1, 0.5), model, {}, l0_config(3)), InvalidArgument);
}

TEST(Game, SmallDiscHasOnlyCentrePixel) {
  auto model = fixtures::mean_threshold_model(25, 0.1);
  GameConfig c = l0_config(3);
  c.feature_radius_sigmas = 2.0;
  Game g(Image(5, 5, 1, 0.5), model, {{2, 2, 0.4, 1}}, c);
  auto s = g.step(g.initial_state(), FeatureMove{0});
  auto moves = g.player2_moves(s);
  ASSERT_EQ(moves.size(), 2u);
  EXPECT_EQ(moves[0].pixel, (Pixel{2, 2}));
  EXPECT_EQ(moves[0].instruction, Instruction::Plus);
  EXPECT_EQ(moves[1].instruction, Instruction::Minus);
}

TEST(Game, CornerDiscIsClipped) {
  auto disc = feature_disc({0, 0, 1, 1}, 5, 5, 2.0);
  // Pixels with x^2 + y^2 <= 4 inside the image.
  EXPECT_EQ(disc.size(), 6u);
  for (const auto& p : disc) EXPECT_LE(p.x * p.x + p.y * p.y, 4u);
}

TEST(Game, MoveCountIsTwicePixelCount) {
  auto model = fixtures::mean_threshold_model(64, 0.1);
  Game g(Image(8, 8, 1, 0.5), model, {{3.5, 4, 1.1, 1}}, l0_config(3));
  auto s = g.step(g.initial_state(), FeatureMove{0});
  EXPECT_EQ(g.player2_moves(s).size(), 2 * g.disc(0).pixels.size());
  double w = 0.0;
  for (double v : g.disc(0).weights) w += v;
  EXPECT_NEAR(w, 1.0, 1e-12);
}

TEST(Game, StepSemantics) {
  auto model = fixtures::mean_threshold_model(12, 0.1);
  Game g(Image(2, 2, 3, 0.5), model, {{0, 0, 1, 1}}, l0_config(10));
  const GameState s0 = g.initial_state();
  const GameState s1 = g.step(s0, FeatureMove{0});
  EXPECT_EQ(*s1.image, *s0.image);
  EXPECT_EQ(s1.depth, 0u);
  EXPECT_EQ(s1.turn, Turn::Player2);
  const GameState s2 = g.step(s1, PixelMove{{1, 0}, Instruction::Plus});
  for (std::size_t z = 0; z < 3; ++z) EXPECT_EQ(s2.image->at(1, 0, z), 1.0);
  EXPECT_EQ(s2.depth, 1u);
  EXPECT_EQ(s2.probs.probs, model.classify(*s2.image).probs);
  EXPECT_THROW(g.step(s2, PixelMove{{0, 0}, Instruction::Plus}), InvalidArgument);
  EXPECT_THROW(g.step(s1, FeatureMove{0}), InvalidArgument);
  EXPECT_THROW(g.step(s0, FeatureMove{1}), InvalidArgument);
}

TEST(Game, PixelOutsideDiscRejected) {
  auto model = fixtures::mean_threshold_model(25, 0.1);
  Game g(Image(5, 5, 1, 0.5), model, {{0, 0, 0.4, 1}}, l0_config(3));
  auto s = g.step(g.initial_state(), FeatureMove{0});
  EXPECT_THROW(g.step(s, PixelMove{{4, 4}, Instruction::Plus}), InvalidArgument);
}

TEST(Game, TerminalStatuses) {
  // Class 0 while mean > 0.3; four pixels at 0.5.
  auto model = fixtures::mean_threshold_model(4, 0.3, 5.0);
  GameConfig c = l0_config(2);
  c.goal = Goal::toward(1);
  c.max_depth = 5;
  Game g(Image(2, 2, 1, 0.5), model, {{0.5, 0.5, 2, 1}}, c);
  EXPECT_EQ(g.terminal_status(g.initial_state()).kind, TerminalStatus::Kind::NonTerminal);

  auto play = [&](GameState s, Pixel p, Instruction ins) {
    return g.step(g.step(s, FeatureMove{0}), PixelMove{p, ins});
  };
  // One pixel to 0: mean 0.375, still class 0.
  auto s1 = play(g.initial_state(), {0, 0}, Instruction::Minus);
  EXPECT_EQ(g.terminal_status(s1).kind, TerminalStatus::Kind::NonTerminal);
  // Two pixels to 0: mean 0.25, class 1 at L0 distance 2.
  auto s2 = play(s1, {1, 0}, Instruction::Minus);
  auto t2 = g.terminal_status(s2);
  EXPECT_EQ(t2.kind, TerminalStatus::Kind::AdversarialFound);
  EXPECT_EQ(t2.severity, 2.0);
  EXPECT_DOUBLE_EQ(reward_of_terminal(t2), 0.5);

  // Three pixels raised to 1: distance d+1, still class 0.
  auto u = play(play(play(g.initial_state(), {0, 0}, Instruction::Plus), {1, 0}, Instruction::Plus),
                {0, 1}, Instruction::Plus);
  auto tu = g.terminal_status(u);
  EXPECT_EQ(tu.kind, TerminalStatus::Kind::OutOfBounds);
  EXPECT_EQ(reward_of_terminal(tu), 0.0);
}

TEST(Game, DepthCap) {
  auto model = fixtures::mean_threshold_model(4, 0.3, 5.0);
  GameConfig c = l0_config(10);
  c.max_depth = 1;
  Game g(Image(2, 2, 1, 0.5), model, {{0.5, 0.5, 2, 1}}, c);
  auto s = g.step(g.step(g.initial_state(), FeatureMove{0}), PixelMove{{0, 0}, Instruction::Plus});
  EXPECT_EQ(g.terminal_status(s).kind, TerminalStatus::Kind::DepthCapped);
}

TEST(Reward, Reciprocal) {
  EXPECT_DOUBLE_EQ(reward_of_terminal({TerminalStatus::Kind::AdversarialFound, 4.0}), 0.25);
  EXPECT_DOUBLE_EQ(reward_of_terminal({TerminalStatus::Kind::AdversarialFound, 0.5}), 2.0);
  EXPECT_EQ(reward_of_terminal({TerminalStatus::Kind::OutOfBounds, 7.0}), 0.0);
  EXPECT_THROW(reward_of_terminal({}), InvalidArgument);
}

TEST(Game, FeatureProbabilityFollowsResponse) {
  auto model = fixtures::mean_threshold_model(25, 0.1);
  Game g(Image(5, 5, 1, 0.5), model, {{1, 1, 1, 3}, {3, 3, 1, 1}}, l0_config(3));
  EXPECT_DOUBLE_EQ(g.feature_probability(0), 0.75);
  Rng rng = make_rng(1, 0);
  int zero = 0;
  for (int i = 0; i < 20000; ++i) zero += g.sample_feature(rng) == 0;
  EXPECT_NEAR(zero / 20000.0, 0.75, 0.02);
}

TEST(Game, InvalidConfigAndTarget) {
  auto model = fixtures::mean_threshold_model(4, 0.3);
  GameConfig c = l0_config(-1);
  EXPECT_THROW(Game(Image(2, 2, 1, 0.5), model, {{0, 0, 1, 1}}, c), InvalidArgument);
  c = l0_config(1);
  c.goal = Goal::toward(5);
  EXPECT_THROW(Game(Image(2, 2, 1, 0.5), model, {{0, 0, 1, 1}}, c), InvalidArgument);
}
