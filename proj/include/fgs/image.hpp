#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fgs/error.hpp"

namespace fgs {

// A w x h x ch tensor of channel values in [0,1]. Storage is row-major with
// channels innermost, which is also the flatten order fed to classifiers.
class Image {
 public:
  Image() = default;

  Image(std::size_t width, std::size_t height, std::size_t channels, double fill = 0.0)
      : width_(width), height_(height), channels_(channels),
        data_(width * height * channels, fill) {
    check_shape();
    check_value(fill);
  }

  Image(std::size_t width, std::size_t height, std::size_t channels, std::vector<double> data)
      : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    check_shape();
    if (data_.size() != width_ * height_ * channels_) {
      throw InvalidArgument("image data length " + std::to_string(data_.size()) +
                            " does not match " + std::to_string(width_) + "x" +
                            std::to_string(height_) + "x" + std::to_string(channels_));
    }
    for (double v : data_) check_value(v);
  }

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t channels() const { return channels_; }
  std::size_t pixel_count() const { return width_ * height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z = 0) const {
    return (y * width_ + x) * channels_ + z;
  }

  double at(std::size_t x, std::size_t y, std::size_t z = 0) const {
    return data_[index(x, y, z)];
  }

  void set(std::size_t x, std::size_t y, std::size_t z, double v) {
    check_value(v);
    data_[index(x, y, z)] = v;
  }

  void set_flat(std::size_t i, double v) {
    check_value(v);
    data_[i] = v;
  }

  std::span<const double> values() const { return data_; }

  bool same_shape(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }

  std::string shape_string() const {
    return std::to_string(width_) + "x" + std::to_string(height_) + "x" +
           std::to_string(channels_);
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  void check_shape() const {
    if (channels_ != 1 && channels_ != 3) {
      throw InvalidArgument("image must have 1 or 3 channels, got " + std::to_string(channels_));
    }
  }

  static void check_value(double v) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw InvalidArgument("image value " + std::to_string(v) + " outside [0,1]");
    }
  }

  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::size_t channels_ = 1;
  std::vector<double> data_;
};

enum class Norm { L0, L1, L2, Linf };

inline Norm parse_norm(std::string_view s) {
  if (s == "0" || s == "L0" || s == "l0") return Norm::L0;
  if (s == "1" || s == "L1" || s == "l1") return Norm::L1;
  if (s == "2" || s == "L2" || s == "l2") return Norm::L2;
  if (s == "inf" || s == "Linf" || s == "linf") return Norm::Linf;
  throw InvalidArgument("unknown norm '" + std::string(s) + "' (expected 0, 1, 2 or inf)");
}

inline std::string_view norm_name(Norm k) {
  switch (k) {
    case Norm::L0: return "L0";
    case Norm::L1: return "L1";
    case Norm::L2: return "L2";
    case Norm::Linf: return "Linf";
  }
  return "?";
}

// Differences at or below this count as unchanged for L0.
inline constexpr double kL0Threshold = 1e-9;

inline double distance(const Image& a, const Image& b, Norm k) {
  if (!a.same_shape(b)) {
    throw InvalidArgument("distance: shape mismatch " + a.shape_string() + " vs " +
                          b.shape_string());
  }
  auto av = a.values();
  auto bv = b.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double diff = std::abs(av[i] - bv[i]);
    switch (k) {
      case Norm::L0: acc += diff > kL0Threshold ? 1.0 : 0.0; break;
      case Norm::L1: acc += diff; break;
      case Norm::L2: acc += diff * diff; break;
      case Norm::Linf: acc = std::max(acc, diff); break;
    }
  }
  return k == Norm::L2 ? std::sqrt(acc) : acc;
}

inline bool in_neighborhood(const Image& candidate, const Image& origin, Norm k, double d) {
  return distance(candidate, origin, k) <= d;
}

enum class Instruction { Plus, Minus };
enum class ManipulationMode { Step, Saturate };

struct Pixel {
  std::size_t x = 0;
  std::size_t y = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
  friend auto operator<=>(const Pixel& a, const Pixel& b) {
    return std::pair(a.y, a.x) <=> std::pair(b.y, b.x);
  }
};

// delta_{X,i}: every channel of every pixel in X moves by +/- tau (clamped),
// or jumps to the bound selected by the instruction in saturate mode.
struct ManipulationSpec {
  std::vector<Pixel> pixels;
  Instruction instruction = Instruction::Plus;
  double tau = 1.0;
  ManipulationMode mode = ManipulationMode::Saturate;
};

inline Image apply_manipulation(const Image& image, const ManipulationSpec& spec) {
  if (!(spec.tau > 0.0)) throw InvalidArgument("manipulation tau must be > 0");
  Image out = image;
  for (const Pixel& p : spec.pixels) {
    if (p.x >= image.width() || p.y >= image.height()) {
      throw InvalidArgument("manipulation pixel (" + std::to_string(p.x) + "," +
                            std::to_string(p.y) + ") outside " + image.shape_string());
    }
    for (std::size_t z = 0; z < image.channels(); ++z) {
      double v = image.at(p.x, p.y, z);
      if (spec.mode == ManipulationMode::Saturate) {
        v = spec.instruction == Instruction::Plus ? 1.0 : 0.0;
      } else {
        v += spec.instruction == Instruction::Plus ? spec.tau : -spec.tau;
        v = std::clamp(v, 0.0, 1.0);
      }
      out.set(p.x, p.y, z, v);
    }
  }
  return out;
}

}  // namespace fgs
