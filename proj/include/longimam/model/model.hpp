// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "longimam/numerics/gru.hpp"
#include "longimam/numerics/ops.hpp"
#include "longimam/numerics/tensor.hpp"
#include "longimam/preprocess/image.hpp"

namespace longimam::model {

using numerics::BatchNormMode;
using numerics::BatchNormState;
using numerics::Parameter;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

struct ModelConfig {
  /// Output channels of the six pooled ConvBlocks.
  std::vector<std::size_t> channels{8, 16, 32, 64, 128, 256};
  /// Output channels of the seventh (unpooled) ConvBlock.
  std::size_t final_channels = 256;
  std::size_t feature_width = 128;
  std::size_t gru_hidden = 128;
  std::size_t head_hidden1 = 128;
  std::size_t head_hidden2 = 32;
  std::size_t image_h = 576;
  std::size_t image_w = 416;

  /// Canonical JSON text; from_json rejects unknown keys.
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  /// FNV-1a of the canonical JSON.
  std::uint64_t fingerprint() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// 3x3 conv (no bias) -> batch norm -> ReLU.
struct ConvBlockParams {
  Parameter weight;  // [Co,Ci,3,3]
  Parameter gamma;   // [Co]
  Parameter beta;    // [Co]
  BatchNormState bn;
};

struct LongiMamParams {
  ModelConfig config;
  std::vector<ConvBlockParams> backbone;  // 6 pooled + 1 final
  Parameter projector_weight;             // [F,C7,1,1]
  Parameter projector_bias;               // [F]
  numerics::GruParams gru_cc;
  numerics::GruParams gru_mlo;
  Parameter fc1_weight, fc1_bias;  // [128,2F]
  Parameter fc2_weight, fc2_bias;  // [32,128]
  Parameter fc3_weight, fc3_bias;  // [1,32]

  /// He-uniform conv kernels, U(+-1/sqrt(fan_in)) dense and GRU weights,
  /// zero biases, BN gamma 1 / beta 0.
  static LongiMamParams init(const ModelConfig& config, std::uint64_t seed);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::vector<Parameter*> backbone_parameters();
  /// Projector, GRUs and head.
  std::vector<Parameter*> upper_parameters();

  void set_backbone_trainable(bool trainable);
  bool backbone_trainable() const;

  /// Every persisted tensor by name: parameters plus BN running statistics.
  std::vector<std::pair<std::string, Tensor*>> named_state();
  std::vector<std::pair<std::string, const Tensor*>> named_state() const;

  /// FNV-1a over the backbone tensors (weights and running statistics).
  std::uint64_t backbone_digest() const;
};

/// Post-pool spatial extent after the six pooled blocks (floor at each step).
std::pair<std::size_t, std::size_t> backbone_output_extent(std::size_t h, std::size_t w);

/// All bound tape leaves of one forward pass.
struct LongiMamVars {
  std::vector<Var> conv, gamma, beta;
  Var projector_weight, projector_bias;
  numerics::GruVars gru_cc, gru_mlo;
  Var fc1_weight, fc1_bias, fc2_weight, fc2_bias, fc3_weight, fc3_bias;
};

LongiMamVars bind(Tape& tape, LongiMamParams& params);

/// Backbone over a batch of images [N,1,H,W] -> [N,C7,h,w].
Var backbone_forward(Var images, const LongiMamVars& vars, LongiMamParams& params, BatchNormMode mode);

/// Gradient-free eval-mode backbone.
Tensor backbone_infer(const LongiMamParams& params, const Tensor& images);

/// Projector and global max pool: [N,C7,h,w] -> [N,F].
Var project(Var backbone_out, const LongiMamVars& vars);

/// Feature rows are ordered ((b * T + t) * 4 + slot) with slot = image_slot().
/// Forms per-view left - right differences, runs the CC and MLO GRUs oldest to
/// newest from h0 = 0, concatenates [h_cc | h_mlo] and applies the dense head.
/// Returns logits [B,1].
Var sequence_head(Var features, std::size_t batch, std::size_t timesteps, const LongiMamVars& vars);

/// Intermediate values retained for shape and symmetry checks.
struct HeadTrace {
  std::vector<Var> diffs_cc, diffs_mlo;  // per timestep, [B,F]
  Var hidden;                            // [B,2F]
};
Var sequence_head(Var features, std::size_t batch, std::size_t timesteps, const LongiMamVars& vars,
                  HeadTrace* trace);

/// Stacks images into a [N,1,H,W] tensor.
Tensor stack_images(const std::vector<const preprocess::Image*>& images);

/// Per-image 128-vector from a single preprocessed image. Throws ShapeError
/// when either extent is below 64.
Tensor extract_features(const LongiMamParams& params, const preprocess::Image& image);

/// left - right.
Tensor view_difference(const Tensor& left, const Tensor& right);

/// Many-to-one GRU over diffs (oldest first) from h0 = 0. Throws UsageError on
/// an empty sequence.
Tensor encode_sequence(const std::vector<Tensor>& diffs, numerics::GruParams& gru);

}  // namespace longimam::model
