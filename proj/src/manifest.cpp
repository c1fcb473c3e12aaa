// SPDX-License-Identifier: Apache-2.0
#include "longimam/cohort/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <json.hpp>

#include "longimam/errors.hpp"

namespace longimam::cohort {

using nlohmann::ordered_json;

void write_manifest(const std::string& path, const std::vector<Subject>& subjects) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest '" + path + "'");
  for (const Subject& s : subjects) {
    for (const Exam& e : s.exams) {
      for (Side side : kSides) {
        for (View view : kViews) {
          ordered_json rec;
          rec["subject_id"] = s.id;
          rec["label"] = s.label;
          rec["visit_date"] = e.visit_date.iso();
          rec["side"] = to_string(side);
          rec["view"] = to_string(view);
          rec["birads"] = to_string(e.birads);
          rec["age_at_visit"] = e.age_at_visit;
          rec["center"] = s.center;
          rec["manufacturer"] = to_string(s.manufacturer);
          rec["image_path"] = e.image(side, view);
          out << rec.dump() << '\n';
        }
      }
    }
  }
  if (!out) throw DataError("failed writing manifest '" + path + "'");
}

namespace {

struct PendingExam {
  Exam exam;
  std::array<bool, 4> seen{};
};

struct PendingSubject {
  Subject subject;
  std::map<std::int32_t, PendingExam> exams;
  std::size_t first_line = 0;
};

}  // namespace

std::vector<Subject> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read manifest '" + path + "'");
  std::map<std::string, PendingSubject> pending;
  std::vector<std::string> order;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = "manifest '" + path + "' line " + std::to_string(lineno);
    ordered_json rec;
    try {
      rec = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    if (!rec.is_object()) throw DataError(where + ": record is not an object");
    std::size_t field = 0;
    for (const auto& [key, value] : rec.items()) {
      if (field >= std::size(kManifestFields) || key != kManifestFields[field]) {
        throw DataError(where + ": unexpected field '" + key + "' at position " + std::to_string(field));
      }
      ++field;
    }
    if (field != std::size(kManifestFields)) throw DataError(where + ": missing fields");
    try {
      const auto id = rec["subject_id"].get<std::string>();
      const int label = rec["label"].get<int>();
      if (label != 0 && label != 1) throw DataError(where + ": label must be 0 or 1");
      const Date date = Date::parse_iso(rec["visit_date"].get<std::string>());
      const Side side = parse_side(rec["side"].get<std::string>());
      const View view = parse_view(rec["view"].get<std::string>());
      const Birads birads = parse_birads(rec["birads"].get<std::string>());
      const double age = rec["age_at_visit"].get<double>();
      const int center = rec["center"].get<int>();
      const Manufacturer manufacturer = parse_manufacturer(rec["manufacturer"].get<std::string>());

      auto [it, inserted] = pending.try_emplace(id);
      PendingSubject& ps = it->second;
      if (inserted) {
        order.push_back(id);
        ps.subject.id = id;
        ps.subject.label = label;
        ps.subject.center = center;
        ps.subject.manufacturer = manufacturer;
        ps.first_line = lineno;
      } else if (ps.subject.label != label || ps.subject.center != center ||
                 ps.subject.manufacturer != manufacturer) {
        throw DataError(where + ": label/center/manufacturer disagree with line " +
                        std::to_string(ps.first_line) + " for subject " + id);
      }
      auto [eit, new_exam] = ps.exams.try_emplace(date.days);
      PendingExam& pe = eit->second;
      if (new_exam) {
        pe.exam.visit_date = date;
        pe.exam.birads = birads;
        pe.exam.age_at_visit = age;
      } else if (pe.exam.birads != birads || pe.exam.age_at_visit != age) {
        throw DataError(where + ": birads/age disagree within one visit of subject " + id);
      }
      const std::size_t slot = image_slot(side, view);
      if (pe.seen[slot]) {
        throw DataError(where + ": duplicate " + std::string(to_string(side)) + "-" +
                        std::string(to_string(view)) + " image for subject " + id);
      }
      pe.seen[slot] = true;
      pe.exam.images[slot] = rec["image_path"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
  }

  std::vector<Subject> subjects;
  subjects.reserve(order.size());
  for (const std::string& id : order) {
    PendingSubject& ps = pending[id];
    for (auto& [day, pe] : ps.exams) {
      if (!std::all_of(pe.seen.begin(), pe.seen.end(), [](bool b) { return b; })) {
        throw DataError("manifest '" + path + "': subject " + id + " visit " + pe.exam.visit_date.iso() +
                        " does not have exactly four images (L/R x CC/MLO)");
      }
      ps.subject.exams.push_back(std::move(pe.exam));
    }
    subjects.push_back(std::move(ps.subject));
  }
  return subjects;
}

}  // namespace longimam::cohort
