// SPDX-License-Identifier: Apache-2.0
#include "longimam/cohort/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

#include "longimam/cohort/manifest.hpp"
#include "longimam/errors.hpp"
#include "longimam/numerics/rng.hpp"

namespace longimam::cohort {

namespace {

using numerics::Rng;

struct Anatomy {
  double extent_x = 0.0;  // semi-axis from the chest wall (x = 0), pixels
  double extent_y = 0.0;
  double center_y = 0.0;
};

struct SubjectPlan {
  std::size_t index = 0;
  bool is_case = false;
  Side lesion_side = Side::left;
  std::array<Anatomy, 2> anatomy;                      // per view
  std::array<std::array<double, 2>, 2> lesion_center;  // per view: (y, x)
  std::size_t input_visits = 0;
  std::vector<Birads> density;  // per exam
};

constexpr std::array<double, 4> kTissueBase{0.30, 0.36, 0.42, 0.48};
constexpr std::array<double, 4> kTissueAmplitude{0.04, 0.07, 0.10, 0.13};

std::uint64_t view_id(View v) { return static_cast<std::uint64_t>(v); }
std::uint64_t side_id(Side s) { return static_cast<std::uint64_t>(s); }

// Gaussian-smoothed white noise rescaled to unit variance.
std::vector<double> smooth_noise(Rng rng, std::size_t h, std::size_t w, double sigma) {
  std::vector<double> field(h * w);
  for (double& v : field) v = rng.normal();
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> taps(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) taps[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  std::vector<double> tmp(h * w, 0.0);
  const auto ih = static_cast<int>(h), iw = static_cast<int>(w);
  for (int y = 0; y < ih; ++y)
    for (int x = 0; x < iw; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int xx = std::clamp(x + k, 0, iw - 1);
        acc += taps[k + radius] * field[y * iw + xx];
      }
      tmp[y * iw + x] = acc;
    }
  for (int y = 0; y < ih; ++y)
    for (int x = 0; x < iw; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int yy = std::clamp(y + k, 0, ih - 1);
        acc += taps[k + radius] * tmp[yy * iw + x];
      }
      field[y * iw + x] = acc;
    }
  double mean = 0.0, var = 0.0;
  for (double v : field) mean += v;
  mean /= static_cast<double>(field.size());
  for (double v : field) var += (v - mean) * (v - mean);
  const double inv = 1.0 / std::sqrt(var / static_cast<double>(field.size()) + 1e-12);
  for (double& v : field) v = (v - mean) * inv;
  return field;
}

Birads draw_density(Rng& rng) {
  const double u = rng.uniform();
  if (u < 0.1) return Birads::a;
  if (u < 0.5) return Birads::b;
  if (u < 0.9) return Birads::c;
  return Birads::d;
}

SubjectPlan plan_subject(const SyntheticConfig& cfg, std::size_t index, bool is_case) {
  Rng rng = Rng::substream(cfg.seed, "subject", {index});
  const auto h = static_cast<double>(cfg.image_height);
  const auto w = static_cast<double>(cfg.image_width);
  SubjectPlan plan;
  plan.index = index;
  plan.is_case = is_case;
  plan.lesion_side = rng.uniform() < 0.5 ? Side::left : Side::right;
  plan.anatomy[view_id(View::cc)] = {w * rng.uniform(0.60, 0.80), h * rng.uniform(0.38, 0.46),
                                     h * rng.uniform(0.47, 0.53)};
  plan.anatomy[view_id(View::mlo)] = {w * rng.uniform(0.65, 0.85), h * rng.uniform(0.42, 0.49),
                                      h * rng.uniform(0.50, 0.58)};
  for (View v : kViews) {
    const Anatomy& a = plan.anatomy[view_id(v)];
    const double r = rng.uniform(0.25, 0.65);
    const double phi = rng.uniform(-0.45 * std::numbers::pi, 0.45 * std::numbers::pi);
    plan.lesion_center[view_id(v)] = {a.center_y + r * a.extent_y * std::sin(phi),
                                      r * a.extent_x * std::cos(phi)};
  }
  const std::size_t span = cfg.max_input_visits - cfg.min_input_visits + 1;
  plan.input_visits = cfg.min_input_visits + rng.uniform_index(span);
  const std::size_t exams = plan.input_visits + (is_case ? 0 : 1);
  Birads d = draw_density(rng);
  for (std::size_t e = 0; e < exams; ++e) {
    if (e > 0 && rng.uniform() < cfg.density_drift) {
      const int step = rng.uniform() < 0.5 ? -1 : 1;
      d = static_cast<Birads>(std::clamp(static_cast<int>(d) + step, 0, 3));
    }
    plan.density.push_back(d);
  }
  return plan;
}

// offset: 0 = current exam, k >= 1 = prior k, -1 = confirmation exam.
preprocess::RawImage render(const SyntheticConfig& cfg, const SubjectPlan& plan, std::size_t exam, int offset,
                            Side side, View view) {
  const std::size_t h = cfg.image_height, w = cfg.image_width;
  const std::uint64_t i = plan.index;
  const double sigma_px = std::max(1.0, 1.5 * static_cast<double>(h) / 64.0);
  const auto shared = smooth_noise(Rng::substream(cfg.seed, "texture_shared", {i, view_id(view)}), h, w, sigma_px);
  const auto own =
      smooth_noise(Rng::substream(cfg.seed, "texture_side", {i, side_id(side), view_id(view)}), h, w, sigma_px);
  const auto visit_tex = smooth_noise(
      Rng::substream(cfg.seed, "texture_visit", {i, exam, side_id(side), view_id(view)}), h, w, sigma_px);
  Rng jitter = Rng::substream(cfg.seed, "position", {i, exam, side_id(side), view_id(view)});
  Rng noise = Rng::substream(cfg.seed, "acquisition_noise", {i, exam, side_id(side), view_id(view)});

  Anatomy a = plan.anatomy[view_id(view)];
  const double dy = jitter.uniform(-0.02, 0.02) * static_cast<double>(h);
  a.center_y += dy;
  const Birads density = plan.density[exam];
  const double base = kTissueBase[static_cast<std::size_t>(density)];
  const double amp = kTissueAmplitude[static_cast<std::size_t>(density)];

  const bool lesion_breast = plan.is_case && side == plan.lesion_side;
  const double lesion_sigma = cfg.lesion_sigma * static_cast<double>(h);
  const double ly = plan.lesion_center[view_id(view)][0] + dy;
  const double lx = plan.lesion_center[view_id(view)][1];
  const bool show_lesion = lesion_breast && offset == 0 && cfg.lesion_amplitude > 0.0;
  double precursor_strength = 0.0;
  std::vector<double> precursor_tex;
  if (lesion_breast && offset >= 1 && cfg.precursor_amplitude > 0.0) {
    precursor_strength = cfg.precursor_amplitude * std::max(0.0, 1.0 - (offset - 1) / 4.0);
    precursor_tex = smooth_noise(Rng::substream(cfg.seed, "precursor", {i, exam, side_id(side), view_id(view)}), h,
                                 w, 1.0);
  }
  const double precursor_sigma = 1.5 * lesion_sigma;

  preprocess::RawImage img;
  img.height = h;
  img.width = w;
  img.pixels.assign(h * w, 0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double fx = static_cast<double>(x) / a.extent_x;
      const double fy = (static_cast<double>(y) - a.center_y) / a.extent_y;
      const double r2 = fx * fx + fy * fy;
      if (r2 >= 1.0) continue;
      const std::size_t p = y * w + x;
      const double tex = (1.0 - cfg.asymmetry) * shared[p] + cfg.asymmetry * own[p] + 0.3 * visit_tex[p];
      double v = std::sqrt(1.0 - r2 * r2) * (base + amp * tex);
      if (view == View::mlo && static_cast<double>(x) / static_cast<double>(w) +
                                       0.6 * static_cast<double>(y) / static_cast<double>(h) <
                                   0.22) {
        v += 0.15;  // pectoral muscle
      }
      const double d2 = (static_cast<double>(y) - ly) * (static_cast<double>(y) - ly) +
                        (static_cast<double>(x) - lx) * (static_cast<double>(x) - lx);
      if (show_lesion) v += cfg.lesion_amplitude * std::exp(-0.5 * d2 / (lesion_sigma * lesion_sigma));
      if (precursor_strength > 0.0) {
        v += precursor_strength * std::exp(-0.5 * d2 / (precursor_sigma * precursor_sigma)) *
             (1.0 + 0.5 * precursor_tex[p]);
      }
      v += cfg.noise * noise.normal();
      img.pixels[p] = static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
    }
  }
  return img;
}

}  // namespace

SyntheticCohort generate_synthetic_cohort(const SyntheticConfig& cfg, const std::string& output_dir) {
  if (!(cfg.prevalence > 0.0 && cfg.prevalence < 1.0)) {
    throw UsageError("synthetic cohort: prevalence must lie in (0,1)");
  }
  if (cfg.min_input_visits == 0 || cfg.max_input_visits < cfg.min_input_visits) {
    throw UsageError("synthetic cohort: invalid visit range");
  }
  if (cfg.image_height < 8 || cfg.image_width < 8) throw UsageError("synthetic cohort: image too small");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(output_dir) / "images", ec);
  if (ec) throw DataError("cannot create output directory '" + output_dir + "': " + ec.message());

  const auto cases = static_cast<std::size_t>(std::lround(cfg.prevalence * static_cast<double>(cfg.subjects)));
  std::vector<std::size_t> order(cfg.subjects);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng label_rng = Rng::substream(cfg.seed, "labels");
  label_rng.shuffle(std::span(order));
  std::vector<bool> is_case(cfg.subjects, false);
  for (std::size_t j = 0; j < cases; ++j) is_case[order[j]] = true;

  SyntheticCohort cohort;
  cohort.subjects.reserve(cfg.subjects);
  for (std::size_t i = 0; i < cfg.subjects; ++i) {
    const SubjectPlan plan = plan_subject(cfg, i, is_case[i]);
    Rng meta = Rng::substream(cfg.seed, "visits", {i});
    char id_buf[32];
    std::snprintf(id_buf, sizeof id_buf, "S%05zu", i + 1);
    Subject s;
    s.id = id_buf;
    s.label = plan.is_case ? 1 : 0;
    s.center = meta.uniform() < 0.5 ? 1 : 2;
    s.manufacturer = meta.uniform() < 0.6 ? Manufacturer::hologic : Manufacturer::gehc;
    const double first_age = 40.0 + static_cast<double>(meta.uniform_index(26));
    const Date first = Date{Date::from_ymd(2008, 1, 1).days + static_cast<std::int32_t>(meta.uniform_index(4 * 365))};
    const fs::path subject_dir = fs::path(output_dir) / "images" / s.id;
    fs::create_directories(subject_dir, ec);
    if (ec) throw DataError("cannot create '" + subject_dir.string() + "': " + ec.message());

    Date date = first;
    const std::size_t exams = plan.density.size();
    for (std::size_t e = 0; e < exams; ++e) {
      if (e > 0) date.days += 365 + static_cast<std::int32_t>(meta.uniform_index(166)) - 45;
      Exam exam;
      exam.visit_date = date;
      exam.birads = plan.density[e];
      exam.age_at_visit = first_age + std::floor(static_cast<double>(date.days - first.days) / 365.25);
      const int offset = static_cast<int>(plan.input_visits) - 1 - static_cast<int>(e);
      for (Side side : kSides) {
        for (View view : kViews) {
          const std::string rel = "images/" + s.id + "/v" + std::to_string(e) + "_" +
                                  std::string(to_string(side)) + "_" + std::string(to_string(view)) + ".pgm";
          preprocess::write_pgm((fs::path(output_dir) / rel).string(), render(cfg, plan, e, offset, side, view));
          exam.images[image_slot(side, view)] = rel;
        }
      }
      s.exams.push_back(std::move(exam));
    }
    cohort.subjects.push_back(std::move(s));
  }
  cohort.manifest_path = (fs::path(output_dir) / "manifest.jsonl").string();
  write_manifest(cohort.manifest_path, cohort.subjects);
  return cohort;
}

}  // namespace longimam::cohort
