#pragma once

// Ground-truth oracles for small instances: exhaustive tau-grid enumeration
// and backward induction over the full game tree.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <unordered_map>
#include <vector>

#include "fgs/error.hpp"
#include "fgs/game.hpp"
#include "fgs/image.hpp"
#include "fgs/oracle.hpp"

namespace fgs {

inline constexpr double kEnumerationGuard = 1e7;
inline constexpr std::size_t kGameStateGuard = 1'000'000;

struct GridEnumSpec {
  enum class Mode { StepLevels, Saturate };
  double tau = 1.0;
  std::size_t max_changed = 1;  // pixels, or dimensions when per_dimension
  Mode mode = Mode::Saturate;
  std::size_t levels = 1;  // StepLevels: offsets n*tau for 1 <= |n| <= levels
  // false: a unit is a pixel and all its channels move together (game
  // semantics; step values clamp to [0,1]). true: a unit is one dimension and
  // values outside [0,1] are dropped, which yields exactly the tau-grid.
  bool per_dimension = false;
  // Optional cap on the summed |n| * dims-per-unit, i.e. an L1 budget of
  // level_budget * tau.
  std::optional<std::size_t> level_budget;

  void validate() const {
    if (!(tau > 0.0)) throw InvalidArgument("grid tau must be > 0");
    if (max_changed < 1) throw InvalidArgument("grid max_changed must be >= 1");
    if (mode == Mode::StepLevels) {
      if (levels < 1) throw InvalidArgument("grid levels must be >= 1");
      if (static_cast<double>(levels) * tau > 1.0 + 1e-12) {
        throw InvalidArgument("grid levels * tau must be <= 1");
      }
    }
  }
};

namespace detail {

inline double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

}  // namespace detail

// Upper bound on the number of candidates enumerate_grid will visit.
inline double grid_candidate_count(const Image& alpha, const GridEnumSpec& spec) {
  const std::size_t dims_per_unit = spec.per_dimension ? 1 : alpha.channels();
  const std::size_t units = spec.per_dimension ? alpha.size() : alpha.pixel_count();
  const std::size_t kmax = std::min(spec.max_changed, units);
  if (spec.mode == GridEnumSpec::Mode::Saturate) {
    double total = 0.0;
    for (std::size_t k = 0; k <= kmax; ++k) total += detail::binomial(units, k) * std::pow(2.0, k);
    return total;
  }
  // ways[k][b]: k positive level magnitudes <= levels with summed cost b.
  const std::size_t budget = spec.level_budget.value_or(std::numeric_limits<std::size_t>::max());
  if (!spec.level_budget) {
    double total = 0.0;
    for (std::size_t k = 0; k <= kmax; ++k) {
      total += detail::binomial(units, k) * std::pow(2.0 * static_cast<double>(spec.levels), k);
    }
    return total;
  }
  std::vector<std::vector<double>> ways(kmax + 1, std::vector<double>(budget + 1, 0.0));
  ways[0][0] = 1.0;
  for (std::size_t k = 1; k <= kmax; ++k) {
    for (std::size_t b = 0; b <= budget; ++b) {
      for (std::size_t n = 1; n <= spec.levels && n * dims_per_unit <= b; ++n) {
        ways[k][b] += ways[k - 1][b - n * dims_per_unit];
      }
    }
  }
  double total = 0.0;
  for (std::size_t k = 0; k <= kmax; ++k) {
    double w = 0.0;
    for (double v : ways[k]) w += v;
    total += detail::binomial(units, k) * std::pow(2.0, k) * w;
  }
  return total;
}

// Visits alpha and every candidate image reachable by changing at most
// max_changed units, in lexicographic unit order. Returns the number visited.
// Throws BudgetExceeded when the candidate bound exceeds the guard.
inline std::size_t enumerate_grid(const Image& alpha, const GridEnumSpec& spec,
                                  const std::function<void(const Image&)>& visit,
                                  double guard = kEnumerationGuard) {
  spec.validate();
  const double bound = grid_candidate_count(alpha, spec);
  if (bound > guard) {
    throw BudgetExceeded("grid enumeration needs up to " + std::to_string(bound) +
                             " candidates, guard is " + std::to_string(guard),
                         bound);
  }
  const std::size_t dims_per_unit = spec.per_dimension ? 1 : alpha.channels();
  const std::size_t units = spec.per_dimension ? alpha.size() : alpha.pixel_count();
  const std::size_t budget = spec.level_budget.value_or(std::numeric_limits<std::size_t>::max());

  // Candidate (value-per-dimension, cost) assignments for one unit.
  struct Option {
    std::vector<double> values;
    std::size_t cost = 0;
  };
  auto options_for = [&](std::size_t unit) {
    std::vector<Option> out;
    const std::size_t base = unit * dims_per_unit;
    if (spec.mode == GridEnumSpec::Mode::Saturate) {
      out.push_back({std::vector<double>(dims_per_unit, 0.0), 0});
      out.push_back({std::vector<double>(dims_per_unit, 1.0), 0});
      return out;
    }
    const auto L = static_cast<std::ptrdiff_t>(spec.levels);
    for (std::ptrdiff_t n = -L; n <= L; ++n) {
      if (n == 0) continue;
      const std::size_t cost = static_cast<std::size_t>(n < 0 ? -n : n) * dims_per_unit;
      if (cost > budget) continue;
      Option o{{}, cost};
      bool ok = true;
      for (std::size_t z = 0; z < dims_per_unit; ++z) {
        double v = alpha.values()[base + z] + static_cast<double>(n) * spec.tau;
        if (spec.per_dimension) {
          if (v < -1e-12 || v > 1.0 + 1e-12) ok = false;
        }
        o.values.push_back(std::clamp(v, 0.0, 1.0));
      }
      if (ok) out.push_back(std::move(o));
    }
    return out;
  };
  std::vector<std::vector<Option>> unit_options(units);
  for (std::size_t u = 0; u < units; ++u) unit_options[u] = options_for(u);

  Image work = alpha;
  std::size_t visited = 0;
  std::function<void(std::size_t, std::size_t, std::size_t)> rec =
      [&](std::size_t start, std::size_t changed, std::size_t spent) {
        visit(work);
        ++visited;
        if (changed == spec.max_changed) return;
        for (std::size_t u = start; u < units; ++u) {
          const std::size_t base = u * dims_per_unit;
          for (const Option& o : unit_options[u]) {
            if (spent + o.cost > budget) continue;
            for (std::size_t z = 0; z < dims_per_unit; ++z) work.set_flat(base + z, o.values[z]);
            rec(u + 1, changed + 1, spent + o.cost);
          }
          for (std::size_t z = 0; z < dims_per_unit; ++z) {
            work.set_flat(base + z, alpha.values()[base + z]);
          }
        }
      };
  rec(0, 0, 0);
  return visited;
}

struct BruteForceResult {
  Image image;
  double severity = 0.0;
};

inline bool satisfies_goal(const Goal& goal, std::size_t original_label, std::size_t label) {
  return goal.targeted ? label == goal.target : label != original_label;
}

// Minimal-severity adversarial example among enumerated candidates inside
// eta(alpha, k, d); ties keep the first in enumeration order.
inline std::optional<BruteForceResult> brute_force_min_severity(const Image& alpha,
                                                                const Oracle& oracle,
                                                                const GameConfig& config,
                                                                const GridEnumSpec& spec,
                                                                std::size_t* grid_count = nullptr) {
  config.validate();
  const std::size_t original_label = oracle.label(alpha);
  std::optional<BruteForceResult> best;
  const std::size_t n = enumerate_grid(alpha, spec, [&](const Image& cand) {
    const double sev = distance(cand, alpha, config.norm);
    if (sev > config.distance_bound) return;
    if (best && sev >= best->severity) return;
    if (!satisfies_goal(config.goal, original_label, oracle.label(cand))) return;
    if (sev <= 0.0) return;
    best = BruteForceResult{cand, sev};
  });
  if (grid_count) *grid_count = n;
  return best;
}

enum class Opt { Max, Min, Nat };

// Backward induction with memoisation on (image, depth, turn/feature).
// Player I maximises; player II maximises, minimises or takes the
// expectation under the keypoint-disc distribution and uniform instruction.
class ExactSolver {
 public:
  ExactSolver(const Game& game, Opt opt, std::size_t state_guard = kGameStateGuard)
      : game_(game), opt_(opt), guard_(state_guard) {}

  double value(const GameState& s) {
    Key key{std::vector<double>(s.image->values().begin(), s.image->values().end()), s.depth,
            s.turn == Turn::Player1 ? 0 : s.feature + 1};
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    const double v = s.turn == Turn::Player1 ? player1_value(s) : player2_value(s);
    if (memo_.size() >= guard_) {
      throw BudgetExceeded("exact game solve exceeds " + std::to_string(guard_) + " states",
                           static_cast<double>(memo_.size() + 1));
    }
    memo_.emplace(std::move(key), v);
    return v;
  }

  double root_value() { return value(game_.initial_state()); }

  std::size_t states() const { return memo_.size(); }

  // Greedy choice of player I at a non-terminal state (lowest index on ties).
  std::size_t best_feature(const GameState& s) {
    std::size_t best = 0;
    double best_v = -1.0;
    for (std::size_t f : game_.player1_moves(s)) {
      const double v = value(game_.step(s, FeatureMove{f}));
      if (v > best_v) {
        best_v = v;
        best = f;
      }
    }
    return best;
  }

 private:
  struct Key {
    std::vector<double> v;
    std::size_t depth;
    std::size_t tag;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      std::uint64_t h = 1469598103934665603ULL ^ (k.depth * 0x9E3779B97F4A7C15ULL) ^ (k.tag << 32);
      for (double d : k.v) {
        h ^= std::bit_cast<std::uint64_t>(d);
        h *= 1099511628211ULL;
      }
      return static_cast<std::size_t>(h);
    }
  };

  double player1_value(const GameState& s) {
    const TerminalStatus st = game_.terminal_status(s);
    if (st.terminal()) return reward_of_terminal(st);
    double best = 0.0;
    for (std::size_t f : game_.player1_moves(s)) {
      best = std::max(best, value(game_.step(s, FeatureMove{f})));
    }
    return best;
  }

  double player2_value(const GameState& s) {
    const FeatureDisc& disc = game_.disc(s.feature);
    double acc = opt_ == Opt::Min ? std::numeric_limits<double>::infinity() : 0.0;
    for (std::size_t i = 0; i < disc.pixels.size(); ++i) {
      for (Instruction ins : {Instruction::Plus, Instruction::Minus}) {
        const double v = value(game_.step(s, PixelMove{disc.pixels[i], ins}));
        switch (opt_) {
          case Opt::Max: acc = std::max(acc, v); break;
          case Opt::Min: acc = std::min(acc, v); break;
          case Opt::Nat: acc += 0.5 * disc.weights[i] * v; break;
        }
      }
    }
    return acc;
  }

  const Game& game_;
  Opt opt_;
  std::size_t guard_;
  std::unordered_map<Key, double, KeyHash> memo_;
};

// Root value of the game, or nothing when no adversarial example is reachable
// (value 0).
inline std::optional<double> solve_game_exact(const Game& game, Opt opt,
                                              std::size_t state_guard = kGameStateGuard) {
  ExactSolver solver(game, opt, state_guard);
  const double v = solver.root_value();
  if (v <= 0.0) return std::nullopt;
  return v;
}

inline std::optional<double> solve_game_exact(const Image& alpha, const Oracle& oracle,
                                              const std::vector<Keypoint>& keypoints,
                                              const GameConfig& config, Opt opt) {
  Game game(alpha, oracle, keypoints, config);
  return solve_game_exact(game, opt);
}

}  // namespace fgs
