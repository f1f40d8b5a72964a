#pragma once

// Single-channel raster and its canonical on-disk form (binary PGM, P5, maxval 255).

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rpg {

class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(std::size_t width, std::size_t height, float fill = 1.0f)
      : width_(width), height_(height), data_(width * height, fill) {}
  GrayImage(std::size_t width, std::size_t height, std::vector<float> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (data_.size() != width_ * height_)
      throw std::invalid_argument("GrayImage: data length does not match width*height");
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float& at(std::size_t x, std::size_t y) noexcept { return data_[y * width_ + x]; }
  float at(std::size_t x, std::size_t y) const noexcept { return data_[y * width_ + x]; }

  std::span<float> pixels() noexcept { return data_; }
  std::span<const float> pixels() const noexcept { return data_; }

  void clamp01() noexcept {
    for (auto& v : data_) v = std::clamp(v, 0.0f, 1.0f);
  }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<float> data_;
};

/// [0,1] -> {0..255}, round half up.
inline std::uint8_t quantize_u8(float v) noexcept {
  if (std::isnan(v)) return 0;
  const double x = static_cast<double>(std::clamp(v, 0.0f, 1.0f)) * 255.0;
  return static_cast<std::uint8_t>(std::floor(x + 0.5));
}

inline float dequantize_u8(std::uint8_t b) noexcept { return static_cast<float>(b) / 255.0f; }

inline std::vector<std::uint8_t> encode_pgm(const GrayImage& img) {
  const std::string header =
      "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + img.size());
  for (float v : img.pixels()) out.push_back(quantize_u8(v));
  return out;
}

inline GrayImage decode_pgm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto skip_ws_and_comments = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&]() -> std::size_t {
    skip_ws_and_comments();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos]))
      throw std::runtime_error("PGM: malformed header");
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
    throw std::runtime_error("PGM: expected binary P5 magic");
  pos = 2;
  const std::size_t w = read_uint();
  const std::size_t h = read_uint();
  const std::size_t maxval = read_uint();
  if (maxval != 255) throw std::runtime_error("PGM: only maxval 255 is supported");
  ++pos;  // single whitespace before raster
  if (bytes.size() < pos + w * h) throw std::runtime_error("PGM: truncated raster");
  std::vector<float> data(w * h);
  for (std::size_t i = 0; i < w * h; ++i) data[i] = dequantize_u8(bytes[pos + i]);
  return GrayImage(w, h, std::move(data));
}

inline void write_image(const std::filesystem::path& path, const GrayImage& img) {
  const auto bytes = encode_pgm(img);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

inline GrayImage read_image(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for reading: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_pgm(bytes);
}

inline double mean_abs_difference(const GrayImage& a, const GrayImage& b) {
  if (a.width() != b.width() || a.height() != b.height())
    throw std::invalid_argument("mean_abs_difference: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(double(a.pixels()[i]) - b.pixels()[i]);
  return a.empty() ? 0.0 : s / static_cast<double>(a.size());
}

}  // namespace rpg
