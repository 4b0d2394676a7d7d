// Attack a tiny built-in classifier end to end: keypoints, saliency, search.

#include <iostream>

#include "fgs/features.hpp"
#include "fgs/mcts.hpp"
#include "fgs/oracle.hpp"
#include "fgs/saliency.hpp"

int main() {
  using namespace fgs;

  // Class 0 while the mean brightness of a 4x4 image exceeds 0.5.
  const std::size_t n = 16;
  std::vector<double> w(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 8.0 / n;
    w[n + i] = -8.0 / n;
  }
  const BuiltInModel model = BuiltInModel::linear(n, 2, w, {-4.0, 4.0});

  Image alpha(4, 4, 1, 0.6);
  alpha.set(1, 2, 0, 0.9);

  const auto keypoints = detect_keypoints(alpha);
  const auto saliency = build_saliency(keypoints, alpha.width(), alpha.height());

  GameConfig config;
  config.norm = Norm::L0;
  config.distance_bound = 6;
  config.mode = ManipulationMode::Saturate;

  const auto result = run_attack(alpha, model, keypoints, saliency, config,
                                 TerminationConditions::iterations(500, 500), {42});
  std::cout << "original class " << model.label(alpha) << '\n';
  if (!result.best_image) {
    std::cout << "no adversarial example within L0 distance " << config.distance_bound << '\n';
    return 0;
  }
  std::cout << "adversarial class " << model.label(*result.best_image) << " at L0 distance "
            << *result.best_severity << " after " << result.iterations_used << " iterations\n";
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t x = 0; x < 4; ++x) std::cout << ' ' << result.best_image->at(x, y);
    std::cout << '\n';
  }
}
