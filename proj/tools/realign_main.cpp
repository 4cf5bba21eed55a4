// Copyright 2026 The Realign Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// realign run | sweep | validate
//
// Exit codes: 0 success, 2 schema error, 3 budget exhausted without
// convergence, 1 anything else. REALIGN_LOG_LEVEL sets verbosity
// (trace, debug, info, warn, error, off; default warn).

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/cfg/helpers.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "realign/scenario_io.hpp"

namespace fs = std::filesystem;
using namespace realign;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitSchema = 2;
constexpr int kExitBudget = 3;

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("realign");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* level = std::getenv("REALIGN_LOG_LEVEL")) spdlog::cfg::helpers::load_levels(level);
}

void log_events(const EpisodeReport& r) {
  for (const auto& e : r.events) {
    if (e.type == "plan") {
      spdlog::debug("step {}: plan cost {}", e.step, e.data.at("cost").get<double>());
    } else if (e.type == "detection" || e.type == "recomputed") {
      spdlog::info("step {}: {} beta_max {:.4g}", e.step, e.type,
                   e.data.at("beta_max").get<double>());
    } else if (e.type == "alignment") {
      spdlog::info("step {}: aligned {} with {}", e.step, e.data.at("feature_id").get<std::string>(),
                   e.data.at("object_id").get<std::string>());
    } else {
      spdlog::debug("step {}: {}", e.step, e.type);
    }
  }
}

struct RunOptions {
  std::string scenario;
  std::string out;
  std::string csv;
  std::optional<std::uint64_t> seed;
  std::string policy;
  bool force_naive = false;
  std::optional<int> steps;
};

int run(const RunOptions& o) {
  Scenario s = load_scenario(o.scenario);
  if (o.seed) s.seed = *o.seed;
  if (o.policy == "conservative") s.diagnosis.policy = AlignmentPolicy::kConservative;
  if (o.policy == "permissive") s.diagnosis.policy = AlignmentPolicy::kPermissive;
  if (o.force_naive) s.force_naive_update = true;
  if (o.steps) s.budget = *o.steps;
  spdlog::info("running '{}' seed {} budget {}", s.name, s.seed, s.budget);
  const EpisodeReport r = run_episode(s);
  log_events(r);
  emit_report(r, o.out);
  if (!o.csv.empty()) {
    detail::write_file(o.csv, metrics_csv_header() + metrics_csv_row(r));
  }
  spdlog::info("{} corrections, effort {:.4g}, converged {}", r.metrics.correction_count,
               r.metrics.total_effort, r.converged);
  return r.budget_exhausted ? kExitBudget : kExitOk;
}

int sweep(const std::string& dir, const std::string& out) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  fs::create_directories(out);
  std::string summary = metrics_csv_header();
  std::string clearance = clearance_csv_header();
  int code = kExitOk;
  for (const auto& f : files) {
    try {
      const EpisodeReport r = run_episode(load_scenario(f.string()));
      emit_report(r, (fs::path(out) / f.filename()).string());
      summary += metrics_csv_row(r);
      clearance += clearance_csv_rows(r);
      if (r.budget_exhausted && code == kExitOk) code = kExitBudget;
      spdlog::info("{}: {} corrections", f.filename().string(), r.metrics.correction_count);
    } catch (const Error& e) {
      spdlog::error("{}: {}", f.string(), e.what());
      code = e.code() == ErrorCode::kSchema ? kExitSchema : kExitFailure;
    }
  }
  detail::write_file((fs::path(out) / "summary.csv").string(), summary);
  detail::write_file((fs::path(out) / "clearance.csv").string(), clearance);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Learn robot costs from physical corrections and repair misaligned features"};
  app.require_subcommand(1);

  RunOptions run_opts;
  std::uint64_t seed = 0;
  int steps = 0;
  auto* run_cmd = app.add_subcommand("run", "Run one episode and write its report");
  run_cmd->add_option("--scenario", run_opts.scenario, "Scenario file")->required();
  run_cmd->add_option("--out", run_opts.out, "Report file")->required();
  auto* seed_opt = run_cmd->add_option("--seed", seed, "Override the scenario seed");
  run_cmd->add_option("--policy", run_opts.policy, "Alignment policy")
      ->check(CLI::IsMember({"permissive", "conservative"}));
  run_cmd->add_flag("--force-naive-update", run_opts.force_naive,
                    "Skip detection and use the plain gradient update");
  auto* steps_opt = run_cmd->add_option("--steps", steps, "Override the step budget")
                        ->check(CLI::PositiveNumber);
  run_cmd->add_option("--csv", run_opts.csv, "Also write a one-row metrics CSV");

  std::string sweep_dir;
  std::string sweep_out;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run every scenario in a directory");
  sweep_cmd->add_option("--scenarios", sweep_dir, "Scenario directory")->required();
  sweep_cmd->add_option("--out", sweep_out, "Output directory")->required();

  std::string validate_path;
  auto* validate_cmd = app.add_subcommand("validate", "Check a scenario file against the schema");
  validate_cmd->add_option("--scenario", validate_path, "Scenario file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      if (*seed_opt) run_opts.seed = seed;
      if (*steps_opt) run_opts.steps = steps;
      return run(run_opts);
    }
    if (*sweep_cmd) return sweep(sweep_dir, sweep_out);
    if (*validate_cmd) {
      const Scenario s = load_scenario(validate_path);
      std::printf("ok: %s (%zu features, %zu objects)\n", s.name.c_str(), s.features.size(),
                  s.env_test.objects.size());
      return kExitOk;
    }
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    if (e.code() == ErrorCode::kSchema) {
      std::fprintf(stderr, "%s\n", e.what());
      return kExitSchema;
    }
    return kExitFailure;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitFailure;
  }
  return kExitOk;
}
