// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "longimam/cohort/types.hpp"

namespace longimam::cohort {

/// Field names of one manifest record, in their normative order.
inline constexpr const char* kManifestFields[] = {"subject_id",   "label",  "visit_date",
                                                  "side",         "view",   "birads",
                                                  "age_at_visit", "center", "manufacturer",
                                                  "image_path"};

/// One JSON object per line, one line per image. Subjects are written in the
/// given order, exams by date, images L-CC, L-MLO, R-CC, R-MLO.
void write_manifest(const std::string& path, const std::vector<Subject>& subjects);

/// Groups image records into exams (by subject and visit date) and subjects.
/// Validates the four-images-per-exam rule and per-subject consistency;
/// throws DataError naming the offending line.
std::vector<Subject> read_manifest(const std::string& path);

}  // namespace longimam::cohort
