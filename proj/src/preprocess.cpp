// SPDX-License-Identifier: Apache-2.0
#include "longimam/preprocess/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "longimam/errors.hpp"

namespace longimam::preprocess {

namespace {

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

Image resize_bilinear(const Image& src, std::size_t out_h, std::size_t out_w) {
  if (out_h == src.height && out_w == src.width) return src;
  Image out(out_h, out_w);
  const double sy = static_cast<double>(src.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(src.width) / static_cast<double>(out_w);
  const double max_y = static_cast<double>(src.height - 1);
  const double max_x = static_cast<double>(src.width - 1);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, max_y);
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, max_x);
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - static_cast<double>(x0);
      const double top = (1.0 - wx) * src.at(y0, x0) + wx * src.at(y0, x1);
      const double bottom = (1.0 - wx) * src.at(y1, x0) + wx * src.at(y1, x1);
      out.at(y, x) = static_cast<float>((1.0 - wy) * top + wy * bottom);
    }
  }
  return out;
}

// Bilinear sample treating everything outside the raster as 0.
double sample_zero_fill(const Image& img, double fy, double fx) {
  if (fy < 0.0 || fx < 0.0 || fy > static_cast<double>(img.height - 1) ||
      fx > static_cast<double>(img.width - 1)) {
    return 0.0;
  }
  const auto y0 = static_cast<std::size_t>(fy);
  const auto x0 = static_cast<std::size_t>(fx);
  const std::size_t y1 = std::min(y0 + 1, img.height - 1);
  const std::size_t x1 = std::min(x0 + 1, img.width - 1);
  const double wy = fy - static_cast<double>(y0);
  const double wx = fx - static_cast<double>(x0);
  const double top = (1.0 - wx) * img.at(y0, x0) + wx * img.at(y0, x1);
  const double bottom = (1.0 - wx) * img.at(y1, x0) + wx * img.at(y1, x1);
  return (1.0 - wy) * top + wy * bottom;
}

}  // namespace

Image standardize_geometry(const Image& image, std::size_t target_h, std::size_t target_w) {
  if (image.height == 0 || image.width == 0 || image.pixels.size() != image.height * image.width) {
    throw DataError("standardize_geometry: degenerate input image");
  }
  if (target_h == 0 || target_w == 0) throw UsageError("standardize_geometry: zero target size");
  const double scale = static_cast<double>(target_h) / static_cast<double>(image.height);
  const auto scaled_w =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(image.width) * scale)));
  Image resized = resize_bilinear(image, target_h, scaled_w);
  if (scaled_w == target_w) return resized;

  Image out(target_h, target_w);
  if (scaled_w > target_w) {
    const std::size_t left = (scaled_w - target_w) / 2;
    for (std::size_t y = 0; y < target_h; ++y)
      for (std::size_t x = 0; x < target_w; ++x) out.at(y, x) = resized.at(y, x + left);
  } else {
    const std::size_t left = (target_w - scaled_w) / 2;
    for (std::size_t y = 0; y < target_h; ++y)
      for (std::size_t x = 0; x < scaled_w; ++x) out.at(y, x + left) = resized.at(y, x);
  }
  return out;
}

Image normalize_intensity(const Image& image, const IntensityWindow& window) {
  if (!(window.width > 0.0)) throw UsageError("normalize_intensity: window width must be positive");
  const double low = window.center - window.width / 2.0;
  Image out(image.height, image.width);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    out.pixels[i] = clamp01((static_cast<double>(image.pixels[i]) - low) / window.width);
  }
  return out;
}

Image zero_background(const Image& image, double threshold) {
  Image out = image;
  for (float& v : out.pixels) {
    if (static_cast<double>(v) < threshold) v = 0.0f;
  }
  return out;
}

Image preprocess_image(const RawImage& raw, const PreprocessConfig& config) {
  return zero_background(
      normalize_intensity(standardize_geometry(to_image(raw), config.target_h, config.target_w), config.window),
      config.background_threshold);
}

std::string_view to_string(AugmentFamily family) {
  switch (family) {
    case AugmentFamily::hflip: return "hflip";
    case AugmentFamily::rotate: return "rotate";
    case AugmentFamily::shift: return "shift";
    case AugmentFamily::brightness_contrast: return "brightness_contrast";
  }
  return "hflip";
}

AugmentationSpec sample_side_augmentation(numerics::Rng& rng) {
  AugmentationSpec spec;
  spec.family = static_cast<AugmentFamily>(rng.uniform_index(4));
  switch (spec.family) {
    case AugmentFamily::hflip: break;
    case AugmentFamily::rotate: spec.angle_deg = rng.uniform(-kMaxRotationDeg, kMaxRotationDeg); break;
    case AugmentFamily::shift:
      spec.shift_x = rng.uniform(-kMaxShiftFraction, kMaxShiftFraction);
      spec.shift_y = rng.uniform(-kMaxShiftFraction, kMaxShiftFraction);
      break;
    case AugmentFamily::brightness_contrast:
      spec.brightness = rng.uniform(-kMaxBrightness, kMaxBrightness);
      spec.contrast = rng.uniform(-kMaxContrast, kMaxContrast);
      break;
  }
  return spec;
}

Image apply_augmentation(const Image& image, const AugmentationSpec& spec) {
  const std::size_t h = image.height, w = image.width;
  Image out(h, w);
  switch (spec.family) {
    case AugmentFamily::hflip:
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) out.at(y, x) = image.at(y, w - 1 - x);
      return out;
    case AugmentFamily::rotate: {
      if (spec.angle_deg == 0.0) return image;
      const double theta = spec.angle_deg * std::numbers::pi / 180.0;
      const double c = std::cos(theta), s = std::sin(theta);
      const double cy = (static_cast<double>(h) - 1.0) / 2.0;
      const double cx = (static_cast<double>(w) - 1.0) / 2.0;
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          // Inverse map: rotate the output coordinate by -theta.
          const double ry = static_cast<double>(y) - cy, rx = static_cast<double>(x) - cx;
          const double sx = c * rx + s * ry + cx;
          const double sy = -s * rx + c * ry + cy;
          out.at(y, x) = clamp01(sample_zero_fill(image, sy, sx));
        }
      }
      return out;
    }
    case AugmentFamily::shift: {
      const auto dx = std::lround(spec.shift_x * static_cast<double>(w));
      const auto dy = std::lround(spec.shift_y * static_cast<double>(h));
      for (std::size_t y = 0; y < h; ++y) {
        const long sy = static_cast<long>(y) - dy;
        if (sy < 0 || sy >= static_cast<long>(h)) continue;
        for (std::size_t x = 0; x < w; ++x) {
          const long sx = static_cast<long>(x) - dx;
          if (sx >= 0 && sx < static_cast<long>(w)) out.at(y, x) = image.at(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
        }
      }
      return out;
    }
    case AugmentFamily::brightness_contrast: {
      if (spec.brightness == 0.0 && spec.contrast == 0.0) return image;
      for (std::size_t i = 0; i < image.pixels.size(); ++i) {
        const double v = static_cast<double>(image.pixels[i]) + spec.brightness;
        out.pixels[i] = clamp01((v - 0.5) * (1.0 + spec.contrast) + 0.5);
      }
      return out;
    }
  }
  return image;
}

AugmentedSequence augment_side_sequence(const std::vector<Image>& images, numerics::Rng& rng) {
  AugmentedSequence result;
  result.spec = sample_side_augmentation(rng);
  result.images.reserve(images.size());
  for (const Image& img : images) result.images.push_back(apply_augmentation(img, result.spec));
  return result;
}

}  // namespace longimam::preprocess
