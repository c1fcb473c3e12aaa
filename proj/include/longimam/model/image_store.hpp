// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "longimam/model/model.hpp"
#include "longimam/model/scenario.hpp"
#include "longimam/preprocess/preprocess.hpp"

namespace longimam::model {

/// Loads manifest image references relative to a root directory and keeps the
/// preprocessed result in memory.
class ImageStore {
 public:
  ImageStore(std::string root, preprocess::PreprocessConfig config);

  /// Throws DataError naming the resolved path when the file is unreadable.
  const preprocess::Image& get(const std::string& ref);
  std::string resolve(const std::string& ref) const;

  const preprocess::PreprocessConfig& config() const { return config_; }
  std::size_t cached() const { return cache_.size(); }

 private:
  std::string root_;
  preprocess::PreprocessConfig config_;
  std::map<std::string, preprocess::Image> cache_;
};

/// Images of one sequence in model order: timestep-major, then image_slot().
/// A missing or unreadable image raises DataError naming subject, timestep,
/// side and view.
std::vector<const preprocess::Image*> sequence_images(ImageStore& store, const SequenceInput& input);

/// Eval-mode backbone outputs per image reference, valid for one fixed
/// backbone. Only usable while the backbone is frozen and images are not
/// augmented.
class FeatureCache {
 public:
  explicit FeatureCache(std::uint64_t backbone_digest) : digest_(backbone_digest) {}

  /// [C7,h,w] backbone output for one image.
  const Tensor& get(const std::string& ref, ImageStore& store, const LongiMamParams& params);
  std::uint64_t digest() const { return digest_; }
  std::size_t size() const { return cache_.size(); }

 private:
  std::uint64_t digest_;
  std::map<std::string, Tensor> cache_;
};

}  // namespace longimam::model
