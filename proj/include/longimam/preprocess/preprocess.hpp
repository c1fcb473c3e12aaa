// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string_view>
#include <vector>

#include "longimam/numerics/rng.hpp"
#include "longimam/preprocess/image.hpp"

namespace longimam::preprocess {

struct IntensityWindow {
  double center = 32767.5;
  double width = 65535.0;
};

struct PreprocessConfig {
  std::size_t target_h = 576;
  std::size_t target_w = 416;
  double background_threshold = 0.05;
  IntensityWindow window;
};

/// Bilinear resize to target_h (aspect preserved), then center-crop or
/// symmetrically zero-pad the width to target_w. Extra pad/crop columns go
/// to the right.
Image standardize_geometry(const Image& image, std::size_t target_h, std::size_t target_w);

/// clamp((v - (c - w/2)) / w, 0, 1); throws UsageError when w <= 0.
Image normalize_intensity(const Image& image, const IntensityWindow& window);

/// Pixels strictly below threshold become 0.
Image zero_background(const Image& image, double threshold);

/// standardize -> normalize -> zero background.
Image preprocess_image(const RawImage& raw, const PreprocessConfig& config);

enum class AugmentFamily : std::uint8_t { hflip = 0, rotate = 1, shift = 2, brightness_contrast = 3 };
std::string_view to_string(AugmentFamily family);

struct AugmentationSpec {
  AugmentFamily family = AugmentFamily::hflip;
  double angle_deg = 0.0;   // rotate, in [-10, 10]
  double shift_x = 0.0;     // shift, fraction of width in [-0.05, 0.05]
  double shift_y = 0.0;     // shift, fraction of height in [-0.05, 0.05]
  double brightness = 0.0;  // in [-0.05, 0.05]
  double contrast = 0.0;    // in [-0.1, 0.1]

  friend bool operator==(const AugmentationSpec&, const AugmentationSpec&) = default;
};

inline constexpr double kMaxRotationDeg = 10.0;
inline constexpr double kMaxShiftFraction = 0.05;
inline constexpr double kMaxBrightness = 0.05;
inline constexpr double kMaxContrast = 0.1;

/// One family uniformly at random, parameters uniform in their ranges.
AugmentationSpec sample_side_augmentation(numerics::Rng& rng);

/// hflip mirrors columns; rotate turns about the image center with bilinear
/// sampling and zero fill; shift translates by round(dx*W), round(dy*H) with
/// zero fill; brightness_contrast computes ((v + b) - 0.5) * (1 + c) + 0.5.
/// Output is clamped to [0,1].
Image apply_augmentation(const Image& image, const AugmentationSpec& spec);

struct AugmentedSequence {
  std::vector<Image> images;
  AugmentationSpec spec;
};

/// Samples one spec and applies it to every image of one breast side.
AugmentedSequence augment_side_sequence(const std::vector<Image>& images, numerics::Rng& rng);

}  // namespace longimam::preprocess
