// SPDX-License-Identifier: Apache-2.0
// Command-line driver: synth, ingest, split, train1, train2, eval, report.
#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "longimam/errors.hpp"
#include "longimam/pipeline/pipeline.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const std::string& item : items) {
    std::size_t start = 0;
    while (start <= item.size()) {
      const std::size_t comma = item.find(',', start);
      const std::string part = item.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      if (!part.empty()) out.push_back(part);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace longimam;
  CLI::App app{"Longitudinal mammography risk pipeline"};
  app.require_subcommand(1);
  std::string config_path, output_dir;
  bool quiet = false;
  app.add_option("-c,--config", config_path, "JSON run configuration (defaults for every missing key)");
  app.add_option("-o,--output", output_dir, "Override paths.output_dir");
  app.add_flag("-q,--quiet", quiet, "Suppress progress messages");

  auto* synth = app.add_subcommand("synth", "Generate the planted-signal synthetic cohort");
  auto* ingest = app.add_subcommand("ingest", "Read the manifest and apply eligibility rules");
  auto* split = app.add_subcommand("split", "Write subject-level train/validation/test and fold assignment");
  auto* train1 = app.add_subcommand("train1", "Step 1: single-visit training arms");
  auto* train2 = app.add_subcommand("train2", "Step 2: frozen-backbone longitudinal training with k-fold CV");
  auto* eval = app.add_subcommand("eval", "Fold-ensemble test predictions and metrics");
  auto* report = app.add_subcommand("report", "Scenario comparison report");
  for (CLI::App* sub : {synth, ingest, split, train1, train2, eval, report}) sub->fallthrough();

  std::vector<std::string> arms, train_scenarios, eval_scenarios;
  train1->add_option("--arms", arms, "all, or any of full-fixed, full-cosine, partial-fixed, partial-cosine");
  train2->add_option("--scenario", train_scenarios, "all, or scenario ids (1C, 1P1C..4P1C, 1P..4P)");
  eval->add_option("--scenario", eval_scenarios, "all, or scenario ids (1C, 1P1C..4P1C, 1P..4P)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    pipeline::RunConfig config = pipeline::load_config(config_path);
    if (!output_dir.empty()) config.paths.output_dir = output_dir;
    pipeline::Logger log;
    if (!quiet) {
      log = [t0 = std::chrono::steady_clock::now()](const std::string& msg) {
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::fprintf(stderr, "[%8.1fs] %s\n", s, msg.c_str());
      };
    }
    const std::vector<std::string> arm_list = split_list(arms);
    if (!arm_list.empty() && !(arm_list.size() == 1 && arm_list[0] == "all")) {
      config.train1.arms.clear();
      for (const std::string& a : arm_list) config.train1.arms.push_back(training::Arm::parse(a));
    }
    auto scenarios = [](const std::vector<std::string>& raw, std::vector<model::ScenarioId>& dst) {
      const std::vector<std::string> list = split_list(raw);
      if (list.empty()) return;
      dst.clear();
      if (list.size() == 1 && list[0] == "all") {
        dst.assign(model::kAllScenarios.begin(), model::kAllScenarios.end());
        return;
      }
      for (const std::string& s : list) dst.push_back(model::parse_scenario(s));
    };
    scenarios(train_scenarios, config.train2.scenarios);
    scenarios(eval_scenarios, config.eval.scenarios);

    if (synth->parsed()) pipeline::cmd_synth(config, log);
    if (ingest->parsed()) pipeline::cmd_ingest(config, log);
    if (split->parsed()) pipeline::cmd_split(config, log);
    if (train1->parsed()) pipeline::cmd_train1(config, log);
    if (train2->parsed()) pipeline::cmd_train2(config, log);
    if (eval->parsed()) pipeline::cmd_eval(config, log);
    if (report->parsed()) pipeline::cmd_report(config, log);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
