#pragma once

// Netpbm PGM (P2/P5) and PPM (P3/P6) reader/writer, maxval 255 only.

#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "fgs/error.hpp"
#include "fgs/image.hpp"

namespace fgs {

namespace detail {

class PnmCursor {
 public:
  explicit PnmCursor(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ >= bytes_.size(); }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("netpbm: " + msg + " at byte offset " + std::to_string(pos_));
  }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const unsigned char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
      } else if (std::isspace(c)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  unsigned long read_uint(const char* what) {
    skip_space_and_comments();
    if (at_end()) fail(std::string("unexpected end of data reading ") + what);
    if (!std::isdigit(bytes_[pos_])) fail(std::string("expected digit for ") + what);
    unsigned long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1'000'000'000UL) fail(std::string("number too large for ") + what);
      ++pos_;
    }
    if (pos_ < bytes_.size() && !std::isspace(bytes_[pos_]) && bytes_[pos_] != '#') {
      fail(std::string("malformed token for ") + what);
    }
    return v;
  }

  unsigned char raw_byte() {
    if (at_end()) fail("truncated raster");
    return bytes_[pos_++];
  }

  void expect_single_whitespace() {
    if (at_end() || !std::isspace(bytes_[pos_])) fail("expected whitespace after maxval");
    ++pos_;
  }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Image decode_netpbm(const std::vector<unsigned char>& bytes) {
  detail::PnmCursor cur(bytes);
  if (bytes.size() < 2 || bytes[0] != 'P') cur.fail("missing magic number");
  const char kind = static_cast<char>(bytes[1]);
  if (kind != '2' && kind != '3' && kind != '5' && kind != '6') {
    cur.fail(std::string("unsupported magic P") + kind);
  }
  // Consume magic.
  cur.raw_byte();
  cur.raw_byte();

  const unsigned long width = cur.read_uint("width");
  const unsigned long height = cur.read_uint("height");
  cur.skip_space_and_comments();
  const std::size_t maxval_offset = cur.offset();
  const unsigned long maxval = cur.read_uint("maxval");
  if (width == 0 || height == 0) cur.fail("zero image dimension");
  if (maxval != 255) {
    throw ParseError("netpbm: maxval " + std::to_string(maxval) +
                     " unsupported (only 255) at byte offset " + std::to_string(maxval_offset));
  }
  const std::size_t channels = (kind == '3' || kind == '6') ? 3 : 1;
  const std::size_t count = width * height * channels;
  std::vector<double> data(count);

  if (kind == '5' || kind == '6') {
    cur.expect_single_whitespace();
    for (std::size_t i = 0; i < count; ++i) data[i] = cur.raw_byte() / 255.0;
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      cur.skip_space_and_comments();
      const std::size_t at = cur.offset();
      const unsigned long s = cur.read_uint("sample");
      if (s > 255) {
        throw ParseError("netpbm: sample " + std::to_string(s) +
                         " exceeds maxval at byte offset " + std::to_string(at));
      }
      data[i] = static_cast<double>(s) / 255.0;
    }
  }
  return Image(width, height, channels, std::move(data));
}

inline Image load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  try {
    return decode_netpbm(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// Round half up to the nearest 1/255.
inline std::uint8_t quantize_sample(double v) {
  return static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
}

inline std::vector<unsigned char> encode_netpbm(const Image& image) {
  const std::string header = std::string(image.channels() == 3 ? "P6" : "P5") + "\n" +
                             std::to_string(image.width()) + " " +
                             std::to_string(image.height()) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(header.size() + image.size());
  for (double v : image.values()) out.push_back(quantize_sample(v));
  return out;
}

inline void save_image(const Image& image, const std::filesystem::path& path) {
  const auto bytes = encode_netpbm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline std::string image_extension(const Image& image) {
  return image.channels() == 3 ? ".ppm" : ".pgm";
}

}  // namespace fgs
