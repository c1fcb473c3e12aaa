// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace longimam::preprocess {

/// Raw detector intensities as read from disk.
struct RawImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint16_t> pixels;  // row-major

  std::uint16_t at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
};

/// Single-channel float image, row-major. After normalization values lie in [0,1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, float fill = 0.0f) : height(h), width(w), pixels(h * w, fill) {}

  float& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  float at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  bool empty() const { return pixels.empty(); }

  friend bool operator==(const Image&, const Image&) = default;
};

Image to_image(const RawImage& raw);

/// Binary portable graymap (P5). 16-bit samples are big-endian.
RawImage read_pgm(const std::string& path);
void write_pgm(const std::string& path, const RawImage& image);

}  // namespace longimam::preprocess
