// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace longimam::cohort {

enum class Side : std::uint8_t { left = 0, right = 1 };
enum class View : std::uint8_t { cc = 0, mlo = 1 };
enum class Birads : std::uint8_t { a = 0, b = 1, c = 2, d = 3 };
enum class Manufacturer : std::uint8_t { hologic, gehc };

std::string_view to_string(Side side);
std::string_view to_string(View view);
std::string_view to_string(Birads birads);
std::string_view to_string(Manufacturer manufacturer);
Side parse_side(std::string_view text);
View parse_view(std::string_view text);
Birads parse_birads(std::string_view text);
Manufacturer parse_manufacturer(std::string_view text);

inline constexpr std::array<Side, 2> kSides{Side::left, Side::right};
inline constexpr std::array<View, 2> kViews{View::cc, View::mlo};

/// Slot of an image inside an exam: L-CC, L-MLO, R-CC, R-MLO.
constexpr std::size_t image_slot(Side side, View view) {
  return static_cast<std::size_t>(side) * 2 + static_cast<std::size_t>(view);
}

/// Calendar date stored as days since 1970-01-01.
struct Date {
  std::int32_t days = 0;

  static Date from_ymd(int year, unsigned month, unsigned day);
  /// Parses YYYY-MM-DD; throws DataError on malformed input.
  static Date parse_iso(std::string_view text);
  std::string iso() const;

  friend auto operator<=>(const Date&, const Date&) = default;
};

inline std::int32_t days_between(Date earlier, Date later) { return later.days - earlier.days; }

/// One screening visit. Images are references (paths) resolved by an image
/// store, indexed by image_slot().
struct Exam {
  Date visit_date;
  std::array<std::string, 4> images;
  Birads birads = Birads::a;
  double age_at_visit = 0.0;

  const std::string& image(Side side, View view) const { return images[image_slot(side, view)]; }
};

struct Subject {
  std::string id;
  int label = 0;  // 1 = cancer
  /// Date-ordered. For cases the last exam is the diagnosis exam; for
  /// controls the last exam is the negative exam confirming its predecessor.
  std::vector<Exam> exams;
  int center = 1;
  Manufacturer manufacturer = Manufacturer::hologic;
  /// Age at the first recorded visit; kept separately so trimming old exams
  /// does not change the eligibility verdict.
  std::optional<double> screening_start_age;

  bool is_case() const { return label == 1; }
  double start_age() const {
    return screening_start_age ? *screening_start_age : (exams.empty() ? 0.0 : exams.front().age_at_visit);
  }
};

/// Current visit plus up to four priors; priors[0] is prior 1, the exam
/// immediately preceding the current one.
struct LongitudinalIndex {
  std::string subject_id;
  int label = 0;
  Exam current;
  std::vector<Exam> priors;
};

struct LabeledId {
  std::string id;
  int label = 0;
};

}  // namespace longimam::cohort
