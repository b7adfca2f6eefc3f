#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "mdlab/archive.hpp"
#include "mdlab/benchmark.hpp"
#include "mdlab/core/digest.hpp"
#include "mdlab/core/error.hpp"
#include "mdlab/experiment.hpp"
#include "mdlab/report.hpp"

namespace fs = std::filesystem;
using namespace mdlab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitConfig = 2;

int cmd_generate(const fs::path& config_path, const std::string& output_flag) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(config_path));
  } catch (const std::exception& e) {
    throw ConfigError(config_path.string() + ": " + e.what());
  }
  const GeneratorConfig cfg = GeneratorConfig::from_json(j, config_path.parent_path());
  fs::path out = output_flag;
  if (out.empty()) {
    out = j.contains("output") ? fs::path(j["output"].get<std::string>()) : fs::path("corpus.jsonl");
    if (out.is_relative()) out = config_path.parent_path() / out;
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  const auto problems = generate(cfg);
  write_corpus(out, problems, cfg);
  const CorpusReport report = corpus_report(problems, out);
  fs::path report_path = out;
  report_path += ".report.json";
  write_file_atomic(report_path, report.to_json().dump(2) + "\n");
  std::printf("wrote %zu problems to %s (sha256 %s)\n", problems.size(), out.c_str(), report.sha256.c_str());
  for (const Difficulty d : kAllDifficulties) {
    const auto k = static_cast<std::size_t>(d);
    std::printf("  %s: %zu (%.3f)\n", std::string(to_string(d)).c_str(), report.counts[k], report.proportions[k]);
  }
  return kExitOk;
}

int cmd_run(const fs::path& spec_path, int workers_flag, const std::string& output_flag, bool serial) {
  ExperimentSpec spec = ExperimentSpec::load(spec_path);
  if (const char* env = std::getenv("MDLAB_WORKERS"); env && *env) {
    try {
      spec.workers = std::stoul(env);
    } catch (const std::exception&) {
      throw ConfigError("MDLAB_WORKERS: not a number");
    }
  }
  if (const char* env = std::getenv("MDLAB_OUTPUT_DIR"); env && *env) spec.output_dir = env;
  if (workers_flag > 0) spec.workers = static_cast<std::size_t>(workers_flag);
  if (!output_flag.empty()) spec.output_dir = output_flag;
  spec.validate();

  const RunSummary s = run_experiment(spec, serial ? Execution::serial : Execution::parallel);
  std::printf("planned %zu, skipped %zu, executed %zu, failed %zu\n", s.planned, s.skipped, s.executed, s.failed);
  for (const auto& f : s.failures) std::fprintf(stderr, "failed: %s\n", f.c_str());
  return s.failed ? kExitPartial : kExitOk;
}

int cmd_analyze(const fs::path& archive, const std::string& out_flag, bool no_heatmaps) {
  if (!fs::is_directory(archive)) throw ConfigError("archive: not a directory: " + archive.string());
  const fs::path out = out_flag.empty() ? archive / "reports" : fs::path(out_flag);
  AnalyzeOptions opts;
  opts.heatmaps = !no_heatmaps;
  const AnalyzeSummary s = analyze(archive, out, opts);
  for (const auto& w : s.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("analyzed %zu runs (%zu skipped) into %s\n", s.runs, s.skipped, out.c_str());
  return kExitOk;
}

int cmd_validate(const fs::path& file) {
  const TraceFile tf = read_trace_file(file);
  auto problems = check_trace_invariants(tf.trace);
  if (tf.trace.config.strategy != parse_strategy(std::string(to_string(tf.trace.config.strategy)))) {
    problems.push_back("strategy does not round-trip");
  }
  if (tf.trace.error) {
    std::printf("%s: aborted at step %zu: %s\n", file.c_str(), tf.trace.error->step, tf.trace.error->message.c_str());
  }
  for (const auto& p : problems) std::printf("%s: %s\n", file.c_str(), p.c_str());
  if (problems.empty()) std::printf("%s: ok (%zu steps)\n", file.c_str(), tf.trace.steps.size());
  return problems.empty() ? kExitOk : kExitPartial;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked-diffusion decoding lab"};
  app.require_subcommand(1);

  std::string gen_config, gen_output;
  auto* gen = app.add_subcommand("generate", "Generate a problem corpus");
  gen->add_option("--config", gen_config, "Generator config (JSON)")->required();
  gen->add_option("--output", gen_output, "Corpus path (overrides the config)");

  std::string run_spec, run_output;
  int run_workers = 0;
  bool run_serial = false;
  auto* run_cmd = app.add_subcommand("run", "Run an experiment grid into a trace archive");
  run_cmd->add_option("--spec", run_spec, "Experiment spec (JSON)")->required();
  run_cmd->add_option("--workers", run_workers, "Parallel workers (overrides MDLAB_WORKERS)");
  run_cmd->add_option("--output", run_output, "Archive directory (overrides MDLAB_OUTPUT_DIR)");
  run_cmd->add_flag("--serial", run_serial, "Run without the worker pool");

  std::string an_archive, an_out;
  bool an_no_heatmaps = false;
  auto* an = app.add_subcommand("analyze", "Compute reports from a trace archive");
  an->add_option("--archive", an_archive, "Archive directory")->required();
  an->add_option("--out", an_out, "Report directory (default: <archive>/reports)");
  an->add_flag("--no-heatmaps", an_no_heatmaps, "Skip heatmap grid export");

  std::string trace_file;
  auto* val = app.add_subcommand("validate-trace", "Check a trace file against its invariants");
  val->add_option("file", trace_file, "Trace file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) return cmd_generate(gen_config, gen_output);
    if (*run_cmd) return cmd_run(run_spec, run_workers, run_output, run_serial);
    if (*an) return cmd_analyze(an_archive, an_out, an_no_heatmaps);
    if (*val) return cmd_validate(trace_file);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kExitConfig;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitPartial;
  }
  return kExitOk;
}
