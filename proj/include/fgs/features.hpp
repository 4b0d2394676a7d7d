#pragma once

// Simplified scale-invariant keypoint detector: Gaussian scale space per
// octave, difference-of-Gaussians, 26-neighbour extrema. Only location, size
// and response are produced; no orientation or descriptor.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <tuple>
#include <vector>

#include "fgs/error.hpp"
#include "fgs/image.hpp"

namespace fgs {

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double size = 1.0;
  double response = 1.0;
  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct ScaleSpaceConfig {
  std::size_t octaves = 3;
  std::size_t scales_per_octave = 4;
  double base_sigma = 1.6;
  double k_factor = 1.2599210498948732;  // 2^(1/3)
  double contrast_threshold = 0.01;

  void validate() const {
    if (octaves < 1) throw InvalidArgument("octaves must be >= 1");
    if (scales_per_octave < 3) throw InvalidArgument("scales_per_octave must be >= 3");
    if (!(base_sigma > 0.0)) throw InvalidArgument("base_sigma must be > 0");
    if (!(k_factor > 1.0)) throw InvalidArgument("k_factor must be > 1");
    if (!(contrast_threshold >= 0.0)) throw InvalidArgument("contrast_threshold must be >= 0");
  }
};

// Real-valued single-channel raster; DoG levels go negative so Image cannot hold them.
struct Plane {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> v;

  Plane() = default;
  Plane(std::size_t w, std::size_t h, double fill = 0.0) : width(w), height(h), v(w * h, fill) {}
  double& operator()(std::size_t x, std::size_t y) { return v[y * width + x]; }
  double operator()(std::size_t x, std::size_t y) const { return v[y * width + x]; }
};

inline std::vector<double> gaussian_kernel_1d(double sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("gaussian sigma must be > 0");
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    const double w = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = w;
    sum += w;
  }
  for (double& w : k) w /= sum;
  return k;
}

inline Plane blur_plane(const Plane& in, double sigma) {
  const auto kernel = gaussian_kernel_1d(sigma);
  const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
  const auto w = static_cast<std::ptrdiff_t>(in.width);
  const auto h = static_cast<std::ptrdiff_t>(in.height);
  auto clampi = [](std::ptrdiff_t i, std::ptrdiff_t n) { return std::clamp<std::ptrdiff_t>(i, 0, n - 1); };

  Plane tmp(in.width, in.height);
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
        acc += kernel[static_cast<std::size_t>(i + radius)] *
               in(static_cast<std::size_t>(clampi(x + i, w)), static_cast<std::size_t>(y));
      }
      tmp(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = acc;
    }
  }
  Plane out(in.width, in.height);
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
        acc += kernel[static_cast<std::size_t>(i + radius)] *
               tmp(static_cast<std::size_t>(x), static_cast<std::size_t>(clampi(y + i, h)));
      }
      out(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = acc;
    }
  }
  return out;
}

// Rec.601 luminance for colour input; grey input is copied.
inline Plane luminance(const Image& image) {
  Plane p(image.width(), image.height());
  for (std::size_t y = 0; y < image.height(); ++y) {
    for (std::size_t x = 0; x < image.width(); ++x) {
      p(x, y) = image.channels() == 3
                    ? 0.299 * image.at(x, y, 0) + 0.587 * image.at(x, y, 1) + 0.114 * image.at(x, y, 2)
                    : image.at(x, y, 0);
    }
  }
  return p;
}

inline Image gaussian_blur(const Image& image, double sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("gaussian_blur: sigma must be > 0");
  if (image.channels() != 1) throw InvalidArgument("gaussian_blur: expects a single-channel image");
  const Plane out = blur_plane(luminance(image), sigma);
  std::vector<double> data(out.v.size());
  std::transform(out.v.begin(), out.v.end(), data.begin(),
                 [](double v) { return std::clamp(v, 0.0, 1.0); });
  return Image(image.width(), image.height(), 1, std::move(data));
}

inline Plane downsample2(const Plane& in) {
  Plane out(in.width / 2, in.height / 2);
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) {
      out(x, y) = 0.25 * (in(2 * x, 2 * y) + in(2 * x + 1, 2 * y) + in(2 * x, 2 * y + 1) +
                          in(2 * x + 1, 2 * y + 1));
    }
  }
  return out;
}

// 4x4 uniform grid used whenever detection yields nothing.
inline std::vector<Keypoint> fallback_keypoints(std::size_t width, std::size_t height) {
  std::vector<Keypoint> out;
  const double size = static_cast<double>(std::min(width, height)) / 8.0;
  for (int j = 0; j < 4; ++j) {
    for (int i = 0; i < 4; ++i) {
      out.push_back(Keypoint{(i + 0.5) * static_cast<double>(width) / 4.0,
                             (j + 0.5) * static_cast<double>(height) / 4.0, size, 1.0});
    }
  }
  return out;
}

inline void sort_keypoints(std::vector<Keypoint>& kps) {
  std::stable_sort(kps.begin(), kps.end(), [](const Keypoint& a, const Keypoint& b) {
    return std::tuple(-a.response, a.y, a.x) < std::tuple(-b.response, b.y, b.x);
  });
}

inline std::vector<Keypoint> detect_keypoints(const Image& image,
                                              const ScaleSpaceConfig& config = {}) {
  config.validate();
  if (image.width() < 8 || image.height() < 8) {
    return fallback_keypoints(image.width(), image.height());
  }

  const std::size_t levels = config.scales_per_octave + 2;
  std::vector<Keypoint> found;
  Plane base = luminance(image);

  for (std::size_t octave = 0; octave < config.octaves; ++octave) {
    if (base.width < 3 || base.height < 3) break;
    const double scale = std::ldexp(1.0, static_cast<int>(octave));

    std::vector<Plane> gauss;
    gauss.reserve(levels);
    for (std::size_t j = 0; j < levels; ++j) {
      gauss.push_back(blur_plane(base, config.base_sigma * std::pow(config.k_factor, j)));
    }
    std::vector<Plane> dog;
    for (std::size_t j = 0; j + 1 < levels; ++j) {
      Plane d(base.width, base.height);
      for (std::size_t i = 0; i < d.v.size(); ++i) d.v[i] = gauss[j + 1].v[i] - gauss[j].v[i];
      dog.push_back(std::move(d));
    }

    for (std::size_t j = 1; j + 1 < dog.size(); ++j) {
      for (std::size_t y = 1; y + 1 < base.height; ++y) {
        for (std::size_t x = 1; x + 1 < base.width; ++x) {
          const double v = dog[j](x, y);
          if (std::abs(v) < config.contrast_threshold) continue;
          bool is_max = true;
          bool is_min = true;
          for (std::size_t dj = j - 1; dj <= j + 1 && (is_max || is_min); ++dj) {
            for (std::size_t yy = y - 1; yy <= y + 1; ++yy) {
              for (std::size_t xx = x - 1; xx <= x + 1; ++xx) {
                if (dj == j && yy == y && xx == x) continue;
                const double n = dog[dj](xx, yy);
                if (!(v > n)) is_max = false;
                if (!(v < n)) is_min = false;
              }
            }
          }
          if (!is_max && !is_min) continue;
          found.push_back(Keypoint{static_cast<double>(x) * scale, static_cast<double>(y) * scale,
                                   1.6 * config.base_sigma * std::pow(config.k_factor, j) * scale,
                                   std::abs(v)});
        }
      }
    }
    base = downsample2(base);
  }

  if (found.empty()) return fallback_keypoints(image.width(), image.height());
  sort_keypoints(found);
  return found;
}

}  // namespace fgs
