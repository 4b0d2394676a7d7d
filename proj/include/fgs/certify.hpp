#pragma once

// Safety certification of an L1 region around an image. Every tau-grid image
// of the region is classified; with tau <= 2*ell/hbar a clean grid implies no
// adversarial example in the region at all.

#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <string>

#include "fgs/error.hpp"
#include "fgs/exact.hpp"
#include "fgs/game.hpp"
#include "fgs/image.hpp"
#include "fgs/oracle.hpp"
#include "fgs/rng.hpp"

namespace fgs {

enum class Verdict { Safe, Unsafe, Inconclusive };

inline std::string_view verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Safe: return "SAFE";
    case Verdict::Unsafe: return "UNSAFE";
    case Verdict::Inconclusive: return "INCONCLUSIVE";
  }
  return "?";
}

struct Certificate {
  Verdict verdict = Verdict::Inconclusive;
  std::optional<Image> witness;
  std::optional<double> witness_severity;
  double tau_used = 0.0;
  double tau_max = 0.0;
  std::size_t grid_count = 0;
  std::string rationale;
};

inline double max_safe_tau(double hbar, double ell) {
  if (!(hbar > 0.0)) throw InvalidArgument("hbar must be > 0");
  if (!(ell >= 0.0 && ell <= 1.0)) throw InvalidArgument("ell must lie in [0, 1]");
  return 2.0 * ell / hbar;
}

// The tau-grid of the L1 ball of radius d: every dimension moves by a whole
// number of tau steps, staying inside [0, 1], with total movement <= d.
inline GridEnumSpec l1_grid_spec(double tau, double d) {
  if (!(tau > 0.0)) throw InvalidArgument("tau must be > 0");
  if (!(d >= 0.0)) throw InvalidArgument("distance bound d must be >= 0");
  const auto budget = static_cast<std::size_t>(std::floor(d / tau + 1e-9));
  const auto per_dim = static_cast<std::size_t>(std::floor(1.0 / tau + 1e-9));
  GridEnumSpec spec;
  spec.tau = tau;
  spec.mode = GridEnumSpec::Mode::StepLevels;
  spec.per_dimension = true;
  spec.levels = std::max<std::size_t>(1, std::min(budget, per_dim));
  spec.max_changed = std::max<std::size_t>(1, budget);
  spec.level_budget = budget;
  return spec;
}

inline Certificate certify_safety(const Image& alpha, const Oracle& oracle, const GameConfig& config,
                                  double hbar, double ell, double guard = kEnumerationGuard) {
  config.validate();
  Certificate cert;
  cert.tau_used = config.tau;
  cert.tau_max = max_safe_tau(hbar, ell);
  if (config.norm != Norm::L1) {
    cert.rationale = "certification is only available for the L1 norm";
    return cert;
  }
  if (config.tau > cert.tau_max) {
    cert.rationale = "Lipschitz condition unmet: tau " + detail::format_double(config.tau) +
                     " > 2*ell/hbar = " + detail::format_double(cert.tau_max);
    return cert;
  }
  const GridEnumSpec spec = l1_grid_spec(config.tau, config.distance_bound);
  const std::size_t original_label = oracle.label(alpha);
  std::optional<BruteForceResult> best;
  try {
    cert.grid_count = enumerate_grid(
        alpha, spec,
        [&](const Image& cand) {
          const double sev = distance(cand, alpha, Norm::L1);
          if (sev > config.distance_bound || sev <= 0.0) return;
          if (best && sev >= best->severity) return;
          if (!satisfies_goal(config.goal, original_label, oracle.label(cand))) return;
          best = BruteForceResult{cand, sev};
        },
        guard);
  } catch (const BudgetExceeded& e) {
    cert.rationale = std::string("budget: ") + e.what();
    return cert;
  }
  if (best) {
    cert.verdict = Verdict::Unsafe;
    cert.witness = best->image;
    cert.witness_severity = best->severity;
    cert.rationale = "adversarial tau-grid image found";
    return cert;
  }
  cert.verdict = Verdict::Safe;
  cert.rationale =
      "no tau-grid image is adversarial and tau <= 2*ell/hbar, so each grid image aggregates "
      "its tau/2 ball";
  return cert;
}

// Uniform sample from the L1 ball of the given radius around center, with
// each coordinate clamped to [0, 1] (clamping only shrinks the distance).
inline Image sample_l1_ball(const Image& center, double radius, Rng& rng) {
  std::exponential_distribution<double> expo(1.0);
  const std::size_t n = center.size();
  std::vector<double> e(n + 1);
  double total = 0.0;
  for (double& v : e) {
    v = expo(rng);
    total += v;
  }
  Image out = center;
  for (std::size_t i = 0; i < n; ++i) {
    const double sign = uniform01(rng) < 0.5 ? -1.0 : 1.0;
    out.set_flat(i, std::clamp(center.values()[i] + sign * radius * e[i] / total, 0.0, 1.0));
  }
  return out;
}

struct AggregatorCheck {
  bool counterexample_found = false;
  std::optional<Image> counterexample;
};

// Sampling falsifier for "alpha1 aggregates its beta ball": looks for a point
// within L1 distance beta of alpha1 whose class differs from alpha's while
// alpha1 keeps alpha's class. Finding none proves nothing.
inline AggregatorCheck check_aggregator(const Image& alpha1, const Oracle& oracle,
                                        const Image& alpha, double beta, std::size_t samples,
                                        Rng& rng) {
  if (!(beta > 0.0)) throw InvalidArgument("beta must be > 0");
  if (!alpha1.same_shape(alpha)) throw InvalidArgument("check_aggregator: shape mismatch");
  const std::size_t label = oracle.label(alpha);
  if (oracle.label(alpha1) != label) return {};
  for (std::size_t i = 0; i < samples; ++i) {
    Image a2 = sample_l1_ball(alpha1, beta, rng);
    if (oracle.label(a2) != label) return {true, std::move(a2)};
  }
  return {};
}

}  // namespace fgs
