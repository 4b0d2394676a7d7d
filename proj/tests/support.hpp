#pragma once

#include <cstddef>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "fgs/exact.hpp"
#include "fgs/features.hpp"
#include "fgs/game.hpp"
#include "fgs/image.hpp"
#include "fgs/oracle.hpp"
#include "fgs/saliency.hpp"

namespace fgs::fixtures {

// Two-class LINEAR model: class 0 when mean(x) > threshold, else class 1.
// Logit difference is 2 * gain * (mean - threshold).
inline BuiltInModel mean_threshold_model(std::size_t dims, double threshold, double gain = 1.0) {
  std::vector<double> w(2 * dims);
  for (std::size_t i = 0; i < dims; ++i) {
    w[i] = gain / static_cast<double>(dims);
    w[dims + i] = -gain / static_cast<double>(dims);
  }
  return BuiltInModel::linear(dims, 2, std::move(w), {-gain * threshold, gain * threshold});
}

inline BuiltInModel random_linear(std::size_t dims, std::size_t classes, std::mt19937_64& rng,
                                  double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> w(dims * classes);
  std::vector<double> b(classes);
  for (double& v : w) v = g(rng);
  for (double& v : b) v = 0.1 * g(rng);
  return BuiltInModel::linear(dims, classes, std::move(w), std::move(b));
}

inline Image random_image(std::size_t w, std::size_t h, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> data(w * h * c);
  for (double& v : data) v = u(rng);
  return Image(w, h, c, std::move(data));
}

// Small saturation game: random image and LINEAR model, fallback keypoints,
// non-targeted L0 with d = 3 and a depth cap of d + 1 rounds.
struct TinyInstance {
  Image alpha;
  BuiltInModel model;
  std::vector<Keypoint> keypoints;
  GameConfig config;
  GridEnumSpec grid;

  SaliencyModel saliency() const { return build_saliency(keypoints, alpha.width(), alpha.height()); }
};

inline TinyInstance tiny_instance(std::size_t w, std::size_t h, std::size_t c, std::mt19937_64& rng,
                                  std::size_t classes = 2) {
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::vector<double> data(w * h * c);
  for (double& v : data) v = u(rng);
  Image alpha(w, h, c, std::move(data));
  auto model = random_linear(w * h * c, classes, rng, 3.0);
  GameConfig cfg;
  cfg.norm = Norm::L0;
  cfg.distance_bound = 3.0;
  cfg.mode = ManipulationMode::Saturate;
  cfg.goal = Goal::non_targeted();
  cfg.max_depth = 4;
  GridEnumSpec grid;
  grid.mode = GridEnumSpec::Mode::Saturate;
  grid.max_changed = w * h;
  auto kps = detect_keypoints(alpha);
  return {std::move(alpha), std::move(model), std::move(kps), cfg, grid};
}

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "fgs-test-XXXXXX").string();
    path_ = ::mkdtemp(tmpl.data());
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace fgs::fixtures
