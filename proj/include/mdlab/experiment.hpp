#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "mdlab/archive.hpp"
#include "mdlab/benchmark.hpp"
#include "mdlab/core/run_config.hpp"
#include "mdlab/oracle.hpp"

namespace mdlab {

struct GridCell {
  std::size_t gen_length = 256;
  std::size_t steps = 256;
  std::size_t block_length = 256;
};

struct PredictorChoice {
  enum class Kind { oracle, remote } kind = Kind::oracle;
  OracleParams oracle;
  std::string endpoint;  // remote only
  std::size_t top_k = 16;
  double timeout_seconds = 30.0;
};

struct ExperimentSpec {
  std::filesystem::path corpus;
  std::vector<Strategy> strategies;
  std::vector<OutputOrder> orders;
  std::vector<GridCell> grid;
  PredictorChoice predictor;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::size_t max_problems = 0;           // 0 = all
  std::vector<Difficulty> difficulties;   // empty = all

  // Throws ConfigError naming the offending field.
  void validate() const;
  // Relative paths resolve against base_dir.
  static ExperimentSpec from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ExperimentSpec load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

std::string run_id(const std::string& problem_id, Strategy strategy, OutputOrder order, const GridCell& cell);

// Seed for the oracle of one problem; shared by every run on that problem.
std::uint64_t oracle_seed(std::uint64_t experiment_seed, const std::string& problem_id);
// Seed for the scheduler's generator in one run.
std::uint64_t run_seed(std::uint64_t experiment_seed, const std::string& run_id);

struct PlannedRun {
  std::string run_id;
  const Problem* problem = nullptr;
  Strategy strategy = Strategy::low_confidence;
  OutputOrder order = OutputOrder::cot_first;
  GridCell cell;
};

// Every (problem, cell, order, strategy) combination, ordered by run_id.
std::vector<PlannedRun> plan_runs(const ExperimentSpec& spec, const std::vector<Problem>& problems);

// Executes one run in memory.
TraceFile execute_run(const PlannedRun& run, const ExperimentSpec& spec, const Vocabulary& vocab);

struct RunSummary {
  std::size_t planned = 0;
  std::size_t skipped = 0;   // already complete in the manifest
  std::size_t executed = 0;
  std::size_t failed = 0;
  std::vector<std::string> failures;  // "run_id: message"
};

enum class Execution { parallel, serial };

// Runs the experiment into spec.output_dir, resuming from its manifest.
RunSummary run_experiment(const ExperimentSpec& spec, Execution mode = Execution::parallel);

}  // namespace mdlab
