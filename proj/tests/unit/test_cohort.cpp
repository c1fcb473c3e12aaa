// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "longimam/cohort/cohort.hpp"
#include "longimam/cohort/manifest.hpp"
#include "longimam/cohort/synthetic.hpp"
#include "longimam/errors.hpp"
#include "support.hpp"

using namespace longimam;
using namespace longimam::cohort;

namespace {

Subject make_subject(const std::string& id, int label, std::size_t exams, int interval_days = 365,
                     double start_age = 50.0) {
  Subject s;
  s.id = id;
  s.label = label;
  Date d = Date::from_ymd(2005, 1, 10);
  for (std::size_t i = 0; i < exams; ++i) {
    Exam e;
    e.visit_date = d;
    e.age_at_visit = start_age + static_cast<double>(i) * interval_days / 365.25;
    e.birads = Birads::b;
    for (std::size_t k = 0; k < 4; ++k) e.images[k] = id + "/v" + std::to_string(i) + "_" + std::to_string(k) + ".pgm";
    s.exams.push_back(e);
    d.days += interval_days;
  }
  return s;
}

std::vector<LabeledId> labeled(std::size_t n, std::size_t positives) {
  std::vector<LabeledId> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({"S" + std::to_string(i), i < positives ? 1 : 0});
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("dates") {
  const Date d = Date::parse_iso("2010-03-01");
  CHECK(d.iso() == "2010-03-01");
  CHECK(days_between(Date::parse_iso("2010-02-28"), d) == 1);
  CHECK(Date::from_ymd(1970, 1, 1).days == 0);
  CHECK_THROWS_AS(Date::parse_iso("2010-13-01"), DataError);
  CHECK_THROWS_AS(Date::parse_iso("yesterday"), DataError);
}

TEST_CASE("eligibility rules") {
  std::vector<Subject> subjects{make_subject("four", 1, 4), make_subject("seven", 1, 7),
                                make_subject("ctrl7", 0, 8), make_subject("short", 1, 5, 243),
                                make_subject("old", 0, 6, 365, 80.0), make_subject("ok", 0, 6)};
  const EligibilityResult r = apply_eligibility(subjects);
  CHECK(r.report.input_subjects == 6);
  CHECK(r.report.too_few_visits == 1);
  CHECK(r.report.short_interval == 1);
  CHECK(r.report.age_out_of_range == 1);
  CHECK(r.report.retained_subjects == 3);
  REQUIRE(r.subjects.size() == 3);
  CHECK(r.subjects[0].id == "seven");
  CHECK(r.subjects[0].exams.size() == 5);
  CHECK(r.subjects[0].exams.front().visit_date == subjects[1].exams[2].visit_date);
  CHECK(r.subjects[1].id == "ctrl7");
  CHECK(r.subjects[1].exams.size() == 6);
  CHECK(r.subjects[1].exams.back().visit_date == subjects[2].exams.back().visit_date);
  CHECK(r.report.flowchart().find("retained") != std::string::npos);

  const EligibilityResult again = apply_eligibility(r.subjects);
  CHECK(again.subjects.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(again.subjects[i].exams.size() == r.subjects[i].exams.size());
}

TEST_CASE("longitudinal indexing") {
  const Subject case5 = make_subject("c", 1, 5);
  const auto ci = index_longitudinal(case5);
  REQUIRE(ci.has_value());
  CHECK(ci->current.visit_date == case5.exams[4].visit_date);
  REQUIRE(ci->priors.size() == 4);
  for (std::size_t k = 0; k < 4; ++k) CHECK(ci->priors[k].visit_date == case5.exams[3 - k].visit_date);

  const Subject ctrl6 = make_subject("n", 0, 6);
  const auto ni = index_longitudinal(ctrl6);
  REQUIRE(ni.has_value());
  CHECK(ni->current.visit_date == ctrl6.exams[4].visit_date);
  CHECK(ni->priors.size() == 4);

  CHECK_FALSE(index_longitudinal(make_subject("lone", 0, 1)).has_value());
}

TEST_CASE("stratified split") {
  const auto ids = labeled(1000, 25);
  const auto a = stratified_split(ids, {0.8, 0.1, 0.1}, 42);
  const auto b = stratified_split(ids, {0.8, 0.1, 0.1}, 42);
  CHECK(a == b);
  std::size_t test = 0, test_pos = 0;
  for (const auto& s : ids) {
    if (a.at(s.id) == Split::test) {
      ++test;
      test_pos += s.label;
    }
  }
  CHECK(test == 100);
  CHECK(test_pos >= 2);
  CHECK(test_pos <= 3);
  const auto all_train = stratified_split(ids, {1.0, 0.0, 0.0}, 1);
  for (const auto& [id, split] : all_train) CHECK(split == Split::train);
}

TEST_CASE("k-fold assignment") {
  const auto ids = labeled(90, 9);
  const auto folds = kfold_split(ids, 9, 3);
  std::vector<int> size(9, 0), pos(9, 0);
  for (const auto& s : ids) {
    const int f = folds.at(s.id);
    REQUIRE(f >= 0);
    REQUIRE(f < 9);
    ++size[f];
    pos[f] += s.label;
  }
  for (int f = 0; f < 9; ++f) {
    CHECK(size[f] == 10);
    CHECK(pos[f] == 1);
  }
  const auto uneven = kfold_split(labeled(23, 4), 9, 3);
  std::vector<int> counts(9, 0);
  for (const auto& [id, f] : uneven) ++counts[f];
  CHECK(*std::max_element(counts.begin(), counts.end()) - *std::min_element(counts.begin(), counts.end()) <= 1);
}

TEST_CASE("reduced evaluation subset") {
  const auto ids = labeled(13000, 310);
  const auto subset = reduced_eval_subset(ids, 4000, 5);
  CHECK(subset.size() == 4000);
  std::size_t pos = 0;
  for (const std::string& id : subset) pos += std::stoul(id.substr(1)) < 310;
  CHECK(pos == 310);
  CHECK(subset == reduced_eval_subset(ids, 4000, 5));
  CHECK(reduced_eval_subset(ids, 310, 5).size() == 310);
}

TEST_CASE("split file round trip") {
  const std::string dir = longimam::testing::scratch_dir("splits");
  SplitTable t{{"A", {Split::train, 2}}, {"B", {Split::test, -1}}, {"C", {Split::validation, 0}}};
  write_split_file(dir + "/s.tsv", t);
  const SplitTable back = read_split_file(dir + "/s.tsv");
  REQUIRE(back.size() == 3);
  CHECK(back.at("B").split == Split::test);
  CHECK(back.at("B").fold == -1);
  CHECK(back.at("A").fold == 2);
}

TEST_CASE("manifest round trip and validation") {
  const std::string dir = longimam::testing::scratch_dir("manifest");
  std::vector<Subject> subjects{make_subject("A", 1, 5), make_subject("B", 0, 6)};
  write_manifest(dir + "/m.jsonl", subjects);
  const auto back = read_manifest(dir + "/m.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[1].exams.size() == 6);
  CHECK(back[0].exams[2].image(Side::right, View::mlo) == subjects[0].exams[2].image(Side::right, View::mlo));

  std::string text = slurp(dir + "/m.jsonl");
  text = text.substr(0, text.rfind('{'));
  std::ofstream(dir + "/bad.jsonl") << text;
  CHECK_THROWS_AS(read_manifest(dir + "/bad.jsonl"), DataError);
}

TEST_CASE("synthetic cohort") {
  const std::string dir = longimam::testing::scratch_dir("synth");
  SyntheticConfig cfg;
  cfg.subjects = 50;
  cfg.prevalence = 0.1;
  cfg.seed = 9;
  const SyntheticCohort a = generate_synthetic_cohort(cfg, dir + "/a");
  std::size_t cases = 0, rows = 0;
  for (const Subject& s : a.subjects) {
    cases += s.label;
    rows += s.exams.size() * 4;
    CHECK(input_visit_count(s) >= cfg.min_input_visits);
  }
  CHECK(cases == 5);
  std::size_t lines = 0;
  std::ifstream in(a.manifest_path);
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == rows);
  const SyntheticCohort b = generate_synthetic_cohort(cfg, dir + "/b");
  CHECK(slurp(a.manifest_path) == slurp(b.manifest_path));
  CHECK(slurp(dir + "/a/" + a.subjects[3].exams[1].images[2]) == slurp(dir + "/b/" + b.subjects[3].exams[1].images[2]));
  const auto eligible = apply_eligibility(read_manifest(a.manifest_path));
  CHECK(eligible.subjects.size() == 50);
}
