// SPDX-License-Identifier: Apache-2.0
#include "longimam/model/image_store.hpp"

#include <filesystem>

#include "longimam/errors.hpp"

namespace longimam::model {

ImageStore::ImageStore(std::string root, preprocess::PreprocessConfig config)
    : root_(std::move(root)), config_(config) {}

std::string ImageStore::resolve(const std::string& ref) const {
  const std::filesystem::path p(ref);
  if (p.is_absolute() || root_.empty()) return p.string();
  return (std::filesystem::path(root_) / p).string();
}

const preprocess::Image& ImageStore::get(const std::string& ref) {
  auto it = cache_.find(ref);
  if (it != cache_.end()) return it->second;
  if (ref.empty()) throw DataError("empty image reference");
  preprocess::Image image = preprocess::preprocess_image(preprocess::read_pgm(resolve(ref)), config_);
  return cache_.emplace(ref, std::move(image)).first->second;
}

std::vector<const preprocess::Image*> sequence_images(ImageStore& store, const SequenceInput& input) {
  std::vector<const preprocess::Image*> out;
  out.reserve(input.exams.size() * 4);
  for (std::size_t t = 0; t < input.exams.size(); ++t) {
    for (cohort::Side side : cohort::kSides) {
      for (cohort::View view : cohort::kViews) {
        const std::string& ref = input.exams[t].image(side, view);
        try {
          out.push_back(&store.get(ref));
        } catch (const DataError& e) {
          throw DataError("subject " + input.subject_id + " timestep " + std::to_string(t) + " side " +
                          std::string(cohort::to_string(side)) + " view " + std::string(cohort::to_string(view)) +
                          ": missing image (" + e.what() + ")");
        }
      }
    }
  }
  return out;
}

const Tensor& FeatureCache::get(const std::string& ref, ImageStore& store, const LongiMamParams& params) {
  auto it = cache_.find(ref);
  if (it != cache_.end()) return it->second;
  if (cache_.empty() && params.backbone_digest() != digest_) throw UsageError("feature cache used with a different backbone");
  Tensor out = backbone_infer(params, stack_images({&store.get(ref)}));
  numerics::Shape s = out.shape();
  out.reshape({s[1], s[2], s[3]});
  return cache_.emplace(ref, std::move(out)).first->second;
}

}  // namespace longimam::model
