#pragma once

// Discrete Gaussian-mixture saliency distribution over the pixel grid, built
// from keypoints: component i is an isotropic Gaussian at (x_i, y_i) with
// standard deviation size_i, weighted by response_i / sum(responses).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "fgs/error.hpp"
#include "fgs/features.hpp"
#include "fgs/image.hpp"
#include "fgs/rng.hpp"

namespace fgs {

struct SaliencyComponent {
  double mean_x = 0.0;
  double mean_y = 0.0;
  double sigma = 1.0;
};

class SaliencyModel {
 public:
  SaliencyModel(std::vector<SaliencyComponent> components, std::vector<double> weights,
                std::size_t width, std::size_t height, std::vector<double> mass)
      : components_(std::move(components)), weights_(std::move(weights)),
        width_(width), height_(height), mass_(std::move(mass)) {
    cdf_.resize(mass_.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < mass_.size(); ++i) {
      acc += mass_[i];
      cdf_[i] = acc;
    }
  }

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  const std::vector<SaliencyComponent>& components() const { return components_; }
  const std::vector<double>& weights() const { return weights_; }
  // Row-major (y, x) flattened pixel probabilities.
  std::span<const double> masses() const { return mass_; }

  double pixel_mass(std::size_t x, std::size_t y) const {
    if (x >= width_ || y >= height_) {
      throw InvalidArgument("pixel_mass: (" + std::to_string(x) + "," + std::to_string(y) +
                            ") outside " + std::to_string(width_) + "x" + std::to_string(height_));
    }
    return mass_[y * width_ + x];
  }

  // Inverse CDF over the flattened grid.
  Pixel sample_pixel(Rng& rng) const {
    const double u = uniform01(rng) * cdf_.back();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    auto idx = static_cast<std::size_t>(it - cdf_.begin());
    if (idx >= cdf_.size()) idx = cdf_.size() - 1;
    return Pixel{idx % width_, idx / width_};
  }

 private:
  std::vector<SaliencyComponent> components_;
  std::vector<double> weights_;
  std::size_t width_;
  std::size_t height_;
  std::vector<double> mass_;
  std::vector<double> cdf_;
};

inline double log_gaussian_1d(double p, double mean, double sigma) {
  const double z = (p - mean) / sigma;
  return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
}

inline SaliencyModel build_saliency(std::span<const Keypoint> keypoints, std::size_t width,
                                    std::size_t height) {
  if (keypoints.empty()) throw InvalidArgument("build_saliency: empty keypoint list");
  if (width == 0 || height == 0) throw InvalidArgument("build_saliency: empty grid");

  double total_response = 0.0;
  for (const auto& kp : keypoints) {
    if (!(kp.response > 0.0) || !(kp.size > 0.0)) {
      throw InvalidArgument("build_saliency: keypoint size and response must be > 0");
    }
    if (kp.x < 0.0 || kp.y < 0.0 || kp.x >= static_cast<double>(width) ||
        kp.y >= static_cast<double>(height)) {
      throw InvalidArgument("build_saliency: keypoint outside the grid");
    }
    total_response += kp.response;
  }

  std::vector<SaliencyComponent> comps;
  std::vector<double> weights;
  std::vector<double> log_weights;
  for (const auto& kp : keypoints) {
    comps.push_back({kp.x, kp.y, kp.size});
    weights.push_back(kp.response / total_response);
    log_weights.push_back(std::log(kp.response) - std::log(total_response));
  }

  // log m(x,y) = logsumexp_i(log phi_i + log G_ix + log G_iy)
  std::vector<double> logm(width * height);
  std::vector<double> terms(comps.size());
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      double hi = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < comps.size(); ++i) {
        terms[i] = log_weights[i] +
                   log_gaussian_1d(static_cast<double>(x), comps[i].mean_x, comps[i].sigma) +
                   log_gaussian_1d(static_cast<double>(y), comps[i].mean_y, comps[i].sigma);
        hi = std::max(hi, terms[i]);
      }
      double s = 0.0;
      for (double t : terms) s += std::exp(t - hi);
      logm[y * width + x] = hi + std::log(s);
    }
  }
  const double top = *std::max_element(logm.begin(), logm.end());
  std::vector<double> mass(logm.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logm.size(); ++i) {
    mass[i] = std::exp(logm[i] - top);
    sum += mass[i];
  }
  for (double& m : mass) m /= sum;
  return SaliencyModel(std::move(comps), std::move(weights), width, height, std::move(mass));
}

inline double pixel_mass(const SaliencyModel& model, std::size_t x, std::size_t y) {
  return model.pixel_mass(x, y);
}

inline Pixel sample_pixel(const SaliencyModel& model, Rng& rng) { return model.sample_pixel(rng); }

// Heatmap analogue: masses rescaled so the most salient pixel is 1.
inline Image saliency_heatmap(const SaliencyModel& model) {
  auto m = model.masses();
  const double top = *std::max_element(m.begin(), m.end());
  std::vector<double> data(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) data[i] = std::clamp(m[i] / top, 0.0, 1.0);
  return Image(model.width(), model.height(), 1, std::move(data));
}

}  // namespace fgs
