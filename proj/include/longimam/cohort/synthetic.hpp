// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "longimam/cohort/types.hpp"
#include "longimam/preprocess/image.hpp"

namespace longimam::cohort {

/// Planted-signal cohort. Every subject gets a breast-shaped intensity field
/// per image whose fibroglandular texture is mostly shared between the two
/// sides. Cases receive a Gaussian lesion in one breast (both views) at the
/// diagnosis exam and, in the same breast, a faint textured precursor in the
/// priors whose strength ramps up towards the diagnosis exam. Controls get
/// neither, so left-right asymmetry is the only label-dependent cue.
struct SyntheticConfig {
  std::size_t subjects = 400;
  double prevalence = 0.025;
  std::size_t image_height = 64;
  std::size_t image_width = 64;
  /// Model-input visits per subject, drawn uniformly; controls get one extra
  /// trailing negative exam that confirms their last input visit.
  std::size_t min_input_visits = 5;
  std::size_t max_input_visits = 7;
  double lesion_amplitude = 0.35;
  /// Gaussian sigma as a fraction of image height.
  double lesion_sigma = 0.04;
  double precursor_amplitude = 0.15;
  /// Fraction of texture drawn independently per side.
  double asymmetry = 0.25;
  double noise = 0.01;
  /// Per-visit probability that BI-RADS density moves one category.
  double density_drift = 0.15;
  std::uint64_t seed = 20240101;
};

struct SyntheticCohort {
  std::vector<Subject> subjects;
  std::string manifest_path;
};

/// Writes `<output_dir>/manifest.jsonl` and `<output_dir>/images/<id>/*.pgm`.
/// Image paths in the manifest are relative to output_dir. Deterministic in
/// (config, seed); the number of cases is exactly round(prevalence * subjects).
SyntheticCohort generate_synthetic_cohort(const SyntheticConfig& config, const std::string& output_dir);

}  // namespace longimam::cohort
