// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "longimam/model/model.hpp"

namespace longimam::model {

inline constexpr char kCheckpointMagic[8] = {'L', 'M', 'C', 'K', 'P', 'T', '0', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  LongiMamParams params;
  /// e.g. "step1:full-fixed:epoch7" or "step2:4P1C:fold3:epoch12".
  std::string provenance;
};

/// Binary layout documented in docs/checkpoint_format.md. Trainable flags are
/// not stored; loaded parameters are all trainable.
void save_checkpoint(const std::string& path, const LongiMamParams& params, const std::string& provenance);

/// Throws DataError on bad magic, version, checksum, unknown or missing tensor
/// names, or shape mismatches.
Checkpoint load_checkpoint(const std::string& path);

/// Copies every tensor (parameters and BN running statistics) from src.
/// Configs must match.
void copy_state(LongiMamParams& dst, const LongiMamParams& src);

}  // namespace longimam::model
