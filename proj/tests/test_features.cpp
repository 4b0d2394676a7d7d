#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fgs/features.hpp"
#include "support.hpp"

using namespace fgs;

namespace {

Image blob(std::size_t w, std::size_t h, double cx, double cy, double sigma) {
  Image img(w, h, 1);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double dx = static_cast<double>(x) - cx;
      const double dy = static_cast<double>(y) - cy;
      img.set(x, y, 0, std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)));
    }
  }
  return img;
}

Image upsample2(const Image& in) {
  Image out(in.width() * 2, in.height() * 2, 1);
  for (std::size_t y = 0; y < out.height(); ++y) {
    for (std::size_t x = 0; x < out.width(); ++x) out.set(x, y, 0, in.at(x / 2, y / 2));
  }
  return out;
}

}  // namespace

TEST(Blur, ConstantImageIsPreserved) {
  Image img(10, 7, 1, 0.3);
  Image out = gaussian_blur(img, 1.7);
  for (double v : out.values()) EXPECT_NEAR(v, 0.3, 1e-12);
}

TEST(Blur, SinglePixelCentreEqualsKernelCentreWeight) {
  Image img(9, 9, 1);
  img.set(4, 4, 0, 1.0);
  double sum = 0.0;
  for (int i = -3; i <= 3; ++i) sum += std::exp(-i * i / 2.0);
  const double centre_1d = 1.0 / sum;
  EXPECT_NEAR(gaussian_blur(img, 1.0).at(4, 4), centre_1d * centre_1d, 1e-12);
}

TEST(Blur, SemigroupWithinTolerance) {
  std::mt19937_64 rng(7);
  Image img = fixtures::random_image(16, 16, 1, rng);
  Image twice = gaussian_blur(gaussian_blur(img, 1.0), 1.0);
  Image once = gaussian_blur(img, std::sqrt(2.0));
  // Edge replication breaks the identity near the border; compare the interior.
  double worst = 0.0;
  for (std::size_t y = 6; y < 10; ++y)
    for (std::size_t x = 6; x < 10; ++x) worst = std::max(worst, std::abs(twice.at(x, y) - once.at(x, y)));
  EXPECT_LE(worst, 0.02);
}

TEST(Blur, RejectsBadInput) {
  EXPECT_THROW(gaussian_blur(Image(4, 4, 1), 0.0), InvalidArgument);
  EXPECT_THROW(gaussian_blur(Image(4, 4, 3), 1.0), InvalidArgument);
}

TEST(Detect, BlobGivesDominantKeypointAtCentre) {
  auto kps = detect_keypoints(blob(32, 32, 16, 16, 3));
  ASSERT_FALSE(kps.empty());
  EXPECT_LE(std::hypot(kps[0].x - 16, kps[0].y - 16), 1.5);
  for (std::size_t i = 1; i < kps.size(); ++i) EXPECT_LE(kps[i].response, kps[0].response);
}

TEST(Detect, TranslationMovesKeypoint) {
  auto a = detect_keypoints(blob(32, 32, 16, 16, 3));
  auto b = detect_keypoints(blob(32, 32, 20, 20, 3));
  EXPECT_NEAR(b[0].x - a[0].x, 4.0, 1.0);
  EXPECT_NEAR(b[0].y - a[0].y, 4.0, 1.0);
}

TEST(Detect, UpsampledBlobScalesCoarsely) {
  Image base = blob(32, 32, 16, 16, 3);
  auto a = detect_keypoints(base);
  auto b = detect_keypoints(upsample2(base));
  EXPECT_LE(std::hypot(b[0].x - 32, b[0].y - 32), 3.0);
  EXPECT_GE(b[0].size / a[0].size, 1.5);
  EXPECT_LE(b[0].size / a[0].size, 2.5);
}

TEST(Detect, ConstantImageUsesFallbackGrid) {
  auto kps = detect_keypoints(Image(32, 32, 1, 0.5));
  ASSERT_EQ(kps.size(), 16u);
  EXPECT_EQ(kps, fallback_keypoints(32, 32));
  EXPECT_DOUBLE_EQ(kps[0].x, 4.0);
  EXPECT_DOUBLE_EQ(kps[15].y, 28.0);
  EXPECT_DOUBLE_EQ(kps[0].size, 4.0);
}

TEST(Detect, TinyImageUsesFallbackGrid) {
  auto kps = detect_keypoints(Image(3, 3, 1, 0.2));
  ASSERT_EQ(kps.size(), 16u);
  for (const auto& k : kps) {
    EXPECT_GE(k.x, 0.0);
    EXPECT_LT(k.x, 3.0);
    EXPECT_GT(k.size, 0.0);
  }
}

TEST(Detect, ColourImageUsesLuminance) {
  Image g = blob(32, 32, 12, 18, 3);
  Image c(32, 32, 3);
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x)
      for (std::size_t z = 0; z < 3; ++z) c.set(x, y, z, g.at(x, y));
  auto a = detect_keypoints(g);
  auto b = detect_keypoints(c);
  ASSERT_FALSE(b.empty());
  EXPECT_NEAR(a[0].x, b[0].x, 1e-9);
  EXPECT_NEAR(a[0].y, b[0].y, 1e-9);
}

TEST(Detect, KeypointsSatisfyInvariants) {
  std::mt19937_64 rng(3);
  Image img = fixtures::random_image(24, 20, 1, rng);
  for (const auto& k : detect_keypoints(img)) {
    EXPECT_GE(k.x, 0.0);
    EXPECT_LT(k.x, 24.0);
    EXPECT_GE(k.y, 0.0);
    EXPECT_LT(k.y, 20.0);
    EXPECT_GT(k.size, 0.0);
    EXPECT_GT(k.response, 0.0);
  }
}
