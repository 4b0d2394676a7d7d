#pragma once

// Monte Carlo tree search over the feature game: UCB selection, full
// expansion of the selected leaf, one random playout per new child,
// (r + v, n + 1) backpropagation, and role-dependent move commitment once
// the per-move budget is spent.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <thread>
#include <vector>

#include "fgs/error.hpp"
#include "fgs/game.hpp"
#include "fgs/image.hpp"
#include "fgs/rng.hpp"
#include "fgs/saliency.hpp"

namespace fgs {

inline double ucb_score(double child_mean, std::size_t parent_visits, std::size_t child_visits) {
  if (child_visits == 0) return std::numeric_limits<double>::infinity();
  return child_mean + std::sqrt(2.0 * std::log(static_cast<double>(parent_visits)) /
                                static_cast<double>(child_visits));
}

struct SearchNode {
  SearchNode* parent = nullptr;
  Move move{FeatureMove{}};  // move that led here from parent
  Turn owner = Turn::Player1;
  std::shared_ptr<const GameState> state;  // released after simulation, rebuilt on expansion
  TerminalStatus status;                    // Player1 nodes only
  double r = 0.0;
  std::size_t n = 0;
  bool expanded = false;
  std::vector<std::unique_ptr<SearchNode>> children;

  double mean() const { return n == 0 ? 0.0 : r / static_cast<double>(n); }
  bool terminal() const { return owner == Turn::Player1 && status.terminal(); }
};

inline void backpropagate(std::span<SearchNode* const> path, double value) {
  for (SearchNode* node : path) {
    node->r += value;
    node->n += 1;
  }
}

// n >= sum of child visits and r finite and non-negative, recursively.
inline bool tree_invariants_hold(const SearchNode& node) {
  if (!(node.r >= 0.0) || !std::isfinite(node.r)) return false;
  std::size_t child_sum = 0;
  for (const auto& c : node.children) {
    child_sum += c->n;
    if (!tree_invariants_hold(*c)) return false;
  }
  return node.n >= child_sum;
}

struct TerminationConditions {
  std::optional<std::size_t> tc1_iterations;
  std::optional<double> tc1_seconds;
  std::optional<std::size_t> tc2_iterations;
  std::optional<double> tc2_seconds;
  std::optional<double> epsilon;

  static TerminationConditions iterations(std::size_t total, std::size_t per_move) {
    TerminationConditions t;
    t.tc1_iterations = total;
    t.tc2_iterations = per_move;
    return t;
  }

  void validate() const {
    if (!tc1_iterations && !tc1_seconds) throw InvalidArgument("tc1 needs an iteration or time budget");
    if (!tc2_iterations && !tc2_seconds) throw InvalidArgument("tc2 needs an iteration or time budget");
    if ((tc1_iterations && *tc1_iterations < 1) || (tc2_iterations && *tc2_iterations < 1)) {
      throw InvalidArgument("iteration budgets must be >= 1");
    }
    if ((tc1_seconds && !(*tc1_seconds > 0.0)) || (tc2_seconds && !(*tc2_seconds > 0.0))) {
      throw InvalidArgument("time budgets must be > 0");
    }
    if (epsilon && !(*epsilon > 0.0)) throw InvalidArgument("epsilon must be > 0");
  }

  // ceil(1/epsilon), guarded against 1/0.1 style rounding.
  std::optional<std::size_t> patience() const {
    if (!epsilon) return std::nullopt;
    return static_cast<std::size_t>(std::ceil(1.0 / *epsilon - 1e-9));
  }
};

struct TraceRow {
  std::size_t iteration = 0;
  double best = std::numeric_limits<double>::infinity();
  double current = std::numeric_limits<double>::infinity();
  double window = std::numeric_limits<double>::infinity();
};

enum class TerminatedBy { Tc1, EpsilonConverged, Exhausted };

inline std::string_view terminated_by_name(TerminatedBy t) {
  switch (t) {
    case TerminatedBy::Tc1: return "TC1";
    case TerminatedBy::EpsilonConverged: return "EPSILON_CONVERGED";
    case TerminatedBy::Exhausted: return "EXHAUSTED";
  }
  return "?";
}

struct AttackResult {
  std::optional<Image> best_image;
  std::optional<double> best_severity;
  std::vector<TraceRow> trace;
  std::size_t iterations_used = 0;
  TerminatedBy terminated_by = TerminatedBy::Tc1;
  std::size_t simulations = 0;
  std::vector<Move> committed;
};

inline void write_trace_csv(std::ostream& out, std::span<const TraceRow> trace) {
  out << "iteration,best,current,window\n";
  for (const auto& row : trace) {
    out << row.iteration << ',' << detail::format_double(row.best) << ','
        << detail::format_double(row.current) << ',' << detail::format_double(row.window) << '\n';
  }
}

struct PlayoutResult {
  TerminalStatus status;
  double reward = 0.0;
  std::shared_ptr<const Image> image;
};

// Random play to termination: player I picks keypoints by response strength,
// player II samples a pixel from the chosen component's disc and a uniform
// instruction.
inline PlayoutResult simulate_playout(const Game& game, GameState state, Rng& rng) {
  for (;;) {
    if (state.turn == Turn::Player1) {
      const TerminalStatus st = game.terminal_status(state);
      if (st.terminal()) return {st, reward_of_terminal(st), state.image};
      state = game.step(state, FeatureMove{game.sample_feature(rng)});
    } else {
      state = game.step(state, game.sample_pixel_move(state.feature, rng));
    }
  }
}

// Index of the child to commit to. Player I turns and cooperative player II
// take argmax r/n; adversarial player II takes argmin; nature samples visited
// children by saliency mass of their pixel.
inline std::size_t commit_move(const SearchNode& root, Player2Role role,
                               const SaliencyModel* saliency, Rng& rng) {
  std::vector<std::size_t> visited;
  for (std::size_t i = 0; i < root.children.size(); ++i) {
    if (root.children[i]->n > 0) visited.push_back(i);
  }
  if (visited.empty()) throw InvalidArgument("commit_move: root has no visited children");

  const bool player2 = root.owner == Turn::Player2;
  if (player2 && role == Player2Role::Nature) {
    std::vector<double> w;
    for (std::size_t i : visited) {
      const auto& pm = std::get<PixelMove>(root.children[i]->move);
      w.push_back(saliency ? saliency->pixel_mass(pm.pixel.x, pm.pixel.y) : 1.0);
    }
    double total = std::accumulate(w.begin(), w.end(), 0.0);
    if (!(total > 0.0)) {
      std::fill(w.begin(), w.end(), 1.0);
      total = static_cast<double>(w.size());
    }
    double u = uniform01(rng) * total;
    for (std::size_t k = 0; k < visited.size(); ++k) {
      if (u < w[k]) return visited[k];
      u -= w[k];
    }
    return visited.back();
  }
  const bool minimise = player2 && role == Player2Role::Adversarial;
  std::size_t best = visited.front();
  for (std::size_t i : visited) {
    const double m = root.children[i]->mean();
    const double b = root.children[best]->mean();
    if (minimise ? m < b : m > b) best = i;
  }
  return best;
}

struct SearchOptions {
  std::uint64_t seed = 0;
  std::size_t child_cap = 64;
  std::size_t threads = 1;
};

class MctsSearch {
 public:
  MctsSearch(const Game& game, const SaliencyModel& saliency, SearchOptions options = {})
      : game_(game), saliency_(saliency), options_(options) {
    if (options_.child_cap < 1) throw InvalidArgument("child cap must be >= 1");
    if (options_.threads < 1) options_.threads = 1;
    root_ = std::make_unique<SearchNode>();
    root_->state = std::make_shared<const GameState>(game_.initial_state());
    root_->owner = Turn::Player1;
    root_->status = game_.terminal_status(*root_->state);
    chain_.push_back(root_.get());
  }

  const SearchNode& tree_root() const { return *root_; }
  const SearchNode& current_root() const { return *chain_.back(); }
  std::size_t simulations() const { return simulations_; }

  AttackResult run(const TerminationConditions& tcs) {
    tcs.validate();
    using Clock = std::chrono::steady_clock;
    const auto start = Clock::now();
    auto move_start = start;
    auto seconds_since = [](Clock::time_point t) {
      return std::chrono::duration<double>(Clock::now() - t).count();
    };
    const auto patience = tcs.patience();

    AttackResult result;
    double best = std::numeric_limits<double>::infinity();
    std::deque<double> window;
    std::size_t unimproved = 0;
    std::size_t move_iterations = 0;
    result.terminated_by = TerminatedBy::Tc1;

    for (;;) {
      if ((tcs.tc1_iterations && result.iterations_used >= *tcs.tc1_iterations) ||
          (tcs.tc1_seconds && seconds_since(start) >= *tcs.tc1_seconds)) {
        result.terminated_by = TerminatedBy::Tc1;
        break;
      }
      if (move_iterations > 0 &&
          ((tcs.tc2_iterations && move_iterations >= *tcs.tc2_iterations) ||
           (tcs.tc2_seconds && seconds_since(move_start) >= *tcs.tc2_seconds))) {
        if (!commit()) {
          result.terminated_by = TerminatedBy::Exhausted;
          break;
        }
        move_iterations = 0;
        move_start = Clock::now();
      }

      const IterationOutcome out = iterate();
      ++result.iterations_used;
      ++move_iterations;

      bool improved = false;
      if (out.best_severity < best) {
        best = out.best_severity;
        result.best_severity = best;
        result.best_image = *out.best_image;
        improved = true;
      }
      const double current = std::isfinite(out.best_severity) ? out.best_severity : best;
      window.push_back(current);
      if (window.size() > 10) window.pop_front();
      TraceRow row;
      row.iteration = result.iterations_used;
      row.best = best;
      row.current = current;
      row.window = std::accumulate(window.begin(), window.end(), 0.0) / static_cast<double>(window.size());
      result.trace.push_back(row);

      unimproved = improved ? 0 : unimproved + 1;
      if (patience && unimproved >= *patience) {
        result.terminated_by = TerminatedBy::EpsilonConverged;
        break;
      }
    }
    result.simulations = simulations_;
    for (std::size_t i = 1; i < chain_.size(); ++i) result.committed.push_back(chain_[i]->move);
    return result;
  }

 private:
  struct IterationOutcome {
    double best_severity = std::numeric_limits<double>::infinity();
    std::shared_ptr<const Image> best_image;

    void offer(const PlayoutResult& p) {
      if (p.status.adversarial() && p.status.severity < best_severity) {
        best_severity = p.status.severity;
        best_image = p.image;
      }
    }
  };

  const GameState& materialize(SearchNode& node) {
    if (!node.state) {
      node.state = std::make_shared<const GameState>(game_.step(materialize(*node.parent), node.move));
    }
    return *node.state;
  }

  std::shared_ptr<const GameState> materialize_ptr(SearchNode& node) {
    materialize(node);
    return node.state;
  }

  IterationOutcome iterate() {
    IterationOutcome outcome;
    std::vector<SearchNode*> path(chain_.begin(), chain_.end());
    SearchNode* node = chain_.back();
    while (node->expanded && !node->terminal() && !node->children.empty()) {
      SearchNode* pick = nullptr;
      double pick_score = -std::numeric_limits<double>::infinity();
      for (const auto& c : node->children) {
        const double s = ucb_score(c->mean(), node->n, c->n);
        if (pick == nullptr || s > pick_score) {
          pick = c.get();
          pick_score = s;
        }
      }
      node = pick;
      path.push_back(node);
    }

    if (node->terminal()) {
      const double v = reward_of_terminal(node->status);
      ++simulations_;
      backpropagate(path, v);
      if (node->status.adversarial()) {
        materialize(*node);
        outcome.offer({node->status, v, node->state->image});
        release(*node);
      }
      return outcome;
    }

    expand(*node);
    const auto& kids = node->children;
    std::vector<PlayoutResult> results(kids.size());
    const std::uint64_t first = simulations_;
    auto run_one = [&](std::size_t i) {
      Rng rng = make_rng(mix_seed(options_.seed, kPlayoutStream), first + i);
      const SearchNode& child = *kids[i];
      if (child.terminal()) {
        results[i] = {child.status, reward_of_terminal(child.status), child.state->image};
      } else {
        results[i] = simulate_playout(game_, *child.state, rng);
      }
    };
    const std::size_t workers = std::min(options_.threads, kids.size());
    if (workers <= 1) {
      for (std::size_t i = 0; i < kids.size(); ++i) run_one(i);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          for (std::size_t i = w; i < kids.size(); i += workers) run_one(i);
        });
      }
      for (auto& t : pool) t.join();
    }
    path.push_back(nullptr);
    for (std::size_t i = 0; i < kids.size(); ++i) {
      path.back() = kids[i].get();
      ++simulations_;
      backpropagate(path, results[i].reward);
      outcome.offer(results[i]);
      release(*kids[i]);
    }
    return outcome;
  }

  void release(SearchNode& node) {
    if (!node.expanded && &node != chain_.back()) node.state.reset();
  }

  void expand(SearchNode& node) {
    const auto state = materialize_ptr(node);
    node.expanded = true;
    if (node.owner == Turn::Player1) {
      for (std::size_t f : game_.player1_moves(*state)) {
        auto child = std::make_unique<SearchNode>();
        child->parent = &node;
        child->move = FeatureMove{f};
        child->owner = Turn::Player2;
        child->state = std::make_shared<const GameState>(game_.step(*state, child->move));
        node.children.push_back(std::move(child));
      }
      return;
    }
    auto moves = game_.player2_moves(*state);
    if (moves.size() > options_.child_cap) moves = capped_moves(moves);
    for (const auto& m : moves) {
      auto child = std::make_unique<SearchNode>();
      child->parent = &node;
      child->move = m;
      child->owner = Turn::Player1;
      child->state = std::make_shared<const GameState>(game_.step(*state, m));
      child->status = game_.terminal_status(*child->state);
      node.children.push_back(std::move(child));
    }
  }

  // Sample child_cap moves without replacement, weighted by the saliency
  // mass of their pixel, keeping the original move order.
  std::vector<PixelMove> capped_moves(const std::vector<PixelMove>& moves) {
    Rng rng = make_rng(mix_seed(options_.seed, kExpansionStream), expansions_++);
    std::vector<double> w(moves.size());
    for (std::size_t i = 0; i < moves.size(); ++i) {
      w[i] = saliency_.pixel_mass(moves[i].pixel.x, moves[i].pixel.y) + 1e-300;
    }
    std::vector<std::size_t> picked;
    for (std::size_t k = 0; k < options_.child_cap; ++k) {
      const double total = std::accumulate(w.begin(), w.end(), 0.0);
      double u = uniform01(rng) * total;
      std::size_t i = 0;
      for (; i + 1 < w.size(); ++i) {
        if (w[i] > 0.0 && u < w[i]) break;
        u -= w[i];
      }
      while (w[i] == 0.0) --i;
      picked.push_back(i);
      w[i] = 0.0;
    }
    std::sort(picked.begin(), picked.end());
    std::vector<PixelMove> out;
    for (std::size_t i : picked) out.push_back(moves[i]);
    return out;
  }

  bool commit() {
    SearchNode& root = *chain_.back();
    if (root.terminal() || !root.expanded) return false;
    Rng rng = make_rng(mix_seed(options_.seed, kCommitStream), commits_++);
    std::size_t idx = 0;
    try {
      idx = commit_move(root, game_.config().player2_role, &saliency_, rng);
    } catch (const InvalidArgument&) {
      return false;
    }
    auto keep = std::move(root.children[idx]);
    root.children.clear();
    root.children.push_back(std::move(keep));
    SearchNode* next = root.children.front().get();
    materialize(*next);
    chain_.push_back(next);
    return !next->terminal();
  }

  static constexpr std::uint64_t kPlayoutStream = 1;
  static constexpr std::uint64_t kExpansionStream = 2;
  static constexpr std::uint64_t kCommitStream = 3;

  const Game& game_;
  const SaliencyModel& saliency_;
  SearchOptions options_;
  std::unique_ptr<SearchNode> root_;
  std::vector<SearchNode*> chain_;
  std::uint64_t simulations_ = 0;
  std::uint64_t expansions_ = 0;
  std::uint64_t commits_ = 0;
};

// Full attack pipeline on a prepared keypoint set and saliency model.
inline AttackResult run_attack(const Image& alpha, const Oracle& oracle,
                               const std::vector<Keypoint>& keypoints,
                               const SaliencyModel& saliency, const GameConfig& config,
                               const TerminationConditions& tcs, SearchOptions options = {}) {
  Game game(alpha, oracle, keypoints, config);
  if (game.goal_reached(game.initial_state().probs)) {
    throw InvalidArgument("run_attack: the original image already satisfies the goal");
  }
  MctsSearch search(game, saliency, options);
  return search.run(tcs);
}

struct SeverityInterval {
  std::optional<double> lo;      // cooperative player II
  std::optional<double> hi;      // adversarial player II
  std::optional<double> nature;  // nature player II
};

inline SeverityInterval severity_interval(const Image& alpha, const Oracle& oracle,
                                          const std::vector<Keypoint>& keypoints,
                                          const SaliencyModel& saliency, GameConfig config,
                                          const TerminationConditions& tcs,
                                          SearchOptions options = {}) {
  auto run_role = [&](Player2Role role, std::uint64_t stream) {
    config.player2_role = role;
    SearchOptions o = options;
    o.seed = mix_seed(options.seed, stream);
    return run_attack(alpha, oracle, keypoints, saliency, config, tcs, o).best_severity;
  };
  SeverityInterval si;
  si.lo = run_role(Player2Role::Cooperative, 101);
  si.hi = run_role(Player2Role::Adversarial, 102);
  si.nature = run_role(Player2Role::Nature, 103);
  return si;
}

}  // namespace fgs
