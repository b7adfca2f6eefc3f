#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mdlab/archive.hpp"
#include "mdlab/metrics.hpp"

namespace mdlab {

// (af - cot) / cot; absent when cot is 0.
std::optional<double> relative_drop(double cot_accuracy, double answer_first_accuracy);
// Percentage with one decimal, e.g. "-17.0%"; "NA" when absent.
std::string format_relative_drop(std::optional<double> drop);

struct RunMetrics {
  std::string run_id;
  std::string problem_id;
  Difficulty difficulty = Difficulty::D1;
  Strategy strategy = Strategy::low_confidence;
  OutputOrder order = OutputOrder::cot_first;
  std::size_t gen_length = 0, steps = 0, block_length = 0;
  F1Score retrieval;
  AnswerCheck answer;
  Exposure retrieval_exposure, reasoning_exposure, answer_exposure;
  std::optional<double> entropy_gap;
  std::size_t latent_crossing = 0;
  std::optional<AnswerConfidence> answer_conf;
  bool duplicate_delimiter = false;
  // Per-step latent values for the trajectory export.
  std::vector<double> latent_f1;
  std::vector<int> latent_correct;
  std::vector<std::size_t> masked_remaining;
};

RunMetrics compute_run_metrics(const TraceFile& file, const Vocabulary& vocab);

// "L64_T64_B64"
std::string cell_label(std::size_t gen_length, std::size_t steps, std::size_t block_length);

inline constexpr std::uint32_t kGridVersion = 1;
inline constexpr std::uint32_t kGridDtypeFloat64 = 1;

// Binary layout: magic "MDLGRID1", u32 version, u32 dtype, u64 rows, u64
// cols, then rows*cols little-endian float64 values in row-major order.
void write_grid(const std::filesystem::path& path, const Grid& grid);
Grid read_grid(const std::filesystem::path& path);

struct AnalyzeOptions {
  // Heatmaps for the first run of each (difficulty, strategy, order, cell)
  // group; set to false to skip them.
  bool heatmaps = true;
};

struct AnalyzeSummary {
  std::size_t runs = 0;      // complete runs analyzed
  std::size_t skipped = 0;   // failed, missing or digest-mismatched entries
  std::vector<std::string> warnings;
};

// Reads the archive and writes the CSV reports and heatmap grids into out_dir.
// Never modifies the archive.
AnalyzeSummary analyze(const std::filesystem::path& archive, const std::filesystem::path& out_dir,
                       const AnalyzeOptions& options = {});

}  // namespace mdlab
