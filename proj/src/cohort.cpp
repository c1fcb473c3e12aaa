// SPDX-License-Identifier: Apache-2.0
#include "longimam/cohort/cohort.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "longimam/errors.hpp"
#include "longimam/numerics/rng.hpp"

namespace longimam::cohort {

std::string_view to_string(Side side) { return side == Side::left ? "L" : "R"; }
std::string_view to_string(View view) { return view == View::cc ? "CC" : "MLO"; }
std::string_view to_string(Birads birads) {
  static constexpr std::array<std::string_view, 4> names{"A", "B", "C", "D"};
  return names[static_cast<std::size_t>(birads)];
}
std::string_view to_string(Manufacturer manufacturer) {
  return manufacturer == Manufacturer::hologic ? "HOLOGIC" : "GEHC";
}

Side parse_side(std::string_view text) {
  if (text == "L") return Side::left;
  if (text == "R") return Side::right;
  throw DataError("invalid side '" + std::string(text) + "' (expected L or R)");
}

View parse_view(std::string_view text) {
  if (text == "CC") return View::cc;
  if (text == "MLO") return View::mlo;
  throw DataError("invalid view '" + std::string(text) + "' (expected CC or MLO)");
}

Birads parse_birads(std::string_view text) {
  if (text.size() == 1 && text[0] >= 'A' && text[0] <= 'D') return static_cast<Birads>(text[0] - 'A');
  throw DataError("invalid BI-RADS density '" + std::string(text) + "' (expected A-D)");
}

Manufacturer parse_manufacturer(std::string_view text) {
  if (text == "HOLOGIC") return Manufacturer::hologic;
  if (text == "GEHC") return Manufacturer::gehc;
  throw DataError("invalid manufacturer '" + std::string(text) + "'");
}

Date Date::from_ymd(int year, unsigned month, unsigned day) {
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}};
  if (!ymd.ok()) throw DataError("invalid calendar date");
  return Date{static_cast<std::int32_t>(sys_days{ymd}.time_since_epoch().count())};
}

Date Date::parse_iso(std::string_view text) {
  int y = 0;
  unsigned m = 0, d = 0;
  char dash1 = 0, dash2 = 0;
  std::istringstream in{std::string(text)};
  if (text.size() != 10 || !(in >> y >> dash1 >> m >> dash2 >> d) || dash1 != '-' || dash2 != '-') {
    throw DataError("invalid ISO-8601 date '" + std::string(text) + "'");
  }
  // operator>> on "-03" would parse a negative month; reject via ok().
  try {
    return from_ymd(y, m, d);
  } catch (const DataError&) {
    throw DataError("invalid ISO-8601 date '" + std::string(text) + "'");
  }
}

std::string Date::iso() const {
  using namespace std::chrono;
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

// ---------------------------------------------------------------------------
// eligibility

std::size_t input_visit_count(const Subject& subject) {
  if (subject.is_case()) return subject.exams.size();
  return subject.exams.empty() ? 0 : subject.exams.size() - 1;
}

std::string EligibilityReport::flowchart() const {
  std::ostringstream out;
  out << "subjects screened:                 " << input_subjects << "\n"
      << "  excluded, fewer input visits:    " << too_few_visits << "\n"
      << "  excluded, visit interval < 9 mo: " << short_interval << "\n"
      << "  excluded, start age outside:     " << age_out_of_range << "\n"
      << "subjects retained:                 " << retained_subjects << "\n";
  return out.str();
}

EligibilityResult apply_eligibility(std::span<const Subject> subjects, const EligibilityRules& rules) {
  EligibilityResult result;
  result.report.input_subjects = subjects.size();
  for (const Subject& s : subjects) {
    if (input_visit_count(s) < rules.min_visits) {
      ++result.report.too_few_visits;
      continue;
    }
    bool short_gap = false;
    for (std::size_t i = 1; i < s.exams.size(); ++i) {
      if (days_between(s.exams[i - 1].visit_date, s.exams[i].visit_date) < rules.min_interval_days) {
        short_gap = true;
      }
    }
    if (short_gap) {
      ++result.report.short_interval;
      continue;
    }
    const double start_age = std::floor(s.start_age());
    if (start_age < rules.min_start_age || start_age > rules.max_start_age) {
      ++result.report.age_out_of_range;
      continue;
    }
    Subject kept = s;
    kept.screening_start_age = s.start_age();
    const std::size_t keep = rules.retained_visits + (s.is_case() ? 0 : 1);
    if (kept.exams.size() > keep) {
      kept.exams.erase(kept.exams.begin(),
                       kept.exams.begin() + static_cast<std::ptrdiff_t>(kept.exams.size() - keep));
    }
    result.subjects.push_back(std::move(kept));
  }
  result.report.retained_subjects = result.subjects.size();
  return result;
}

std::optional<LongitudinalIndex> index_longitudinal(const Subject& subject, std::size_t max_priors) {
  const auto& exams = subject.exams;
  std::size_t current;
  if (subject.is_case()) {
    if (exams.empty()) return std::nullopt;
    current = exams.size() - 1;
  } else {
    // Latest exam that still has a confirming successor.
    if (exams.size() < 2) return std::nullopt;
    current = exams.size() - 2;
  }
  LongitudinalIndex index;
  index.subject_id = subject.id;
  index.label = subject.label;
  index.current = exams[current];
  for (std::size_t k = 1; k <= max_priors && k <= current; ++k) index.priors.push_back(exams[current - k]);
  return index;
}

// ---------------------------------------------------------------------------
// splits

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "validation") return Split::validation;
  if (text == "test") return Split::test;
  throw DataError("invalid split '" + std::string(text) + "'");
}

namespace {

std::array<std::size_t, 3> largest_remainder(std::size_t n, const std::array<double, 3>& ratios) {
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainders{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = ratios[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainders[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  while (assigned < n) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 3; ++i) {
      if (remainders[i] > remainders[best] + 1e-12) best = i;
    }
    ++counts[best];
    remainders[best] = -1.0;
    ++assigned;
  }
  return counts;
}

void partition_by_label(std::span<const LabeledId> subjects, std::vector<std::size_t>& pos,
                        std::vector<std::size_t>& neg) {
  for (std::size_t i = 0; i < subjects.size(); ++i) (subjects[i].label == 1 ? pos : neg).push_back(i);
}

}  // namespace

std::map<std::string, Split> stratified_split(std::span<const LabeledId> subjects,
                                              std::array<double, 3> ratios, std::uint64_t seed) {
  double total = 0.0;
  std::size_t nonzero = 0;
  for (double r : ratios) {
    if (r < 0.0) throw UsageError("stratified_split: negative ratio");
    total += r;
    nonzero += r > 0.0;
  }
  if (std::abs(total - 1.0) > 1e-9) throw UsageError("stratified_split: ratios must sum to 1");
  if (subjects.size() < nonzero) {
    throw UsageError("stratified_split: " + std::to_string(subjects.size()) + " subjects for " +
                     std::to_string(nonzero) + " splits");
  }
  std::vector<std::size_t> pos, neg;
  partition_by_label(subjects, pos, neg);
  auto rng = numerics::Rng::substream(seed, "split");
  rng.shuffle(std::span(pos));
  rng.shuffle(std::span(neg));

  const auto sizes = largest_remainder(subjects.size(), ratios);
  auto pos_counts = largest_remainder(pos.size(), ratios);
  // Positives cannot exceed a split's size; push any excess to splits with room.
  std::size_t excess = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    if (pos_counts[i] > sizes[i]) {
      excess += pos_counts[i] - sizes[i];
      pos_counts[i] = sizes[i];
    }
  }
  for (std::size_t i = 0; i < 3 && excess > 0; ++i) {
    const std::size_t room = std::min(sizes[i] - pos_counts[i], excess);
    pos_counts[i] += room;
    excess -= room;
  }

  std::map<std::string, Split> out;
  std::size_t pi = 0, ni = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t j = 0; j < pos_counts[s]; ++j) out[subjects[pos[pi++]].id] = static_cast<Split>(s);
    for (std::size_t j = 0; j < sizes[s] - pos_counts[s]; ++j) {
      out[subjects[neg[ni++]].id] = static_cast<Split>(s);
    }
  }
  return out;
}

std::map<std::string, int> kfold_split(std::span<const LabeledId> subjects, int k, std::uint64_t seed) {
  if (k < 2) throw UsageError("kfold_split: k must be at least 2");
  if (static_cast<std::size_t>(k) > subjects.size()) {
    throw UsageError("kfold_split: k=" + std::to_string(k) + " exceeds " +
                     std::to_string(subjects.size()) + " subjects");
  }
  std::vector<std::size_t> pos, neg;
  partition_by_label(subjects, pos, neg);
  auto rng = numerics::Rng::substream(seed, "kfold");
  rng.shuffle(std::span(pos));
  rng.shuffle(std::span(neg));
  std::map<std::string, int> out;
  std::size_t i = 0;
  for (std::size_t idx : pos) out[subjects[idx].id] = static_cast<int>(i++ % static_cast<std::size_t>(k));
  for (std::size_t idx : neg) out[subjects[idx].id] = static_cast<int>(i++ % static_cast<std::size_t>(k));
  return out;
}

std::vector<std::string> reduced_eval_subset(std::span<const LabeledId> subjects, std::size_t target,
                                             std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  partition_by_label(subjects, pos, neg);
  if (target < pos.size()) {
    throw UsageError("reduced_eval_subset: target " + std::to_string(target) + " below " +
                     std::to_string(pos.size()) + " positives");
  }
  auto rng = numerics::Rng::substream(seed, "reduced_subset");
  rng.shuffle(std::span(neg));
  const std::size_t take = std::min(target - pos.size(), neg.size());
  std::vector<bool> keep(subjects.size(), false);
  for (std::size_t idx : pos) keep[idx] = true;
  for (std::size_t j = 0; j < take; ++j) keep[neg[j]] = true;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    if (keep[i]) out.push_back(subjects[i].id);
  }
  return out;
}

void write_split_file(const std::string& path, const SplitTable& table) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write split file '" + path + "'");
  out << "subject_id\tsplit\tfold\n";
  for (const auto& [id, rec] : table) out << id << '\t' << to_string(rec.split) << '\t' << rec.fold << '\n';
}

SplitTable read_split_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read split file '" + path + "'");
  std::string line;
  std::getline(in, line);
  if (line != "subject_id\tsplit\tfold") throw DataError("split file '" + path + "': bad header");
  SplitTable table;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string id, split, fold;
    if (!std::getline(row, id, '\t') || !std::getline(row, split, '\t') || !std::getline(row, fold)) {
      throw DataError("split file '" + path + "': malformed line " + std::to_string(lineno));
    }
    try {
      table[id] = SplitRecord{parse_split(split), std::stoi(fold)};
    } catch (const std::logic_error&) {
      throw DataError("split file '" + path + "': bad fold on line " + std::to_string(lineno));
    }
  }
  return table;
}

}  // namespace longimam::cohort
