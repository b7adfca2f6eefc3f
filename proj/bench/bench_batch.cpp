// Times the OpenMP paths against their serial references and checks that
// both produce the same bytes.
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <filesystem>

#include "CLI11.hpp"

#include "mdlab/archive.hpp"
#include "mdlab/benchmark.hpp"
#include "mdlab/core/digest.hpp"
#include "mdlab/core/rng.hpp"
#include "mdlab/experiment.hpp"
#include "mdlab/metrics.hpp"

namespace fs = std::filesystem;
using namespace mdlab;

namespace {

template <typename F>
double time_s(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string archive_digest(const fs::path& dir) {
  std::string all;
  for (const auto& e : load_manifest(dir / "manifest.jsonl").latest()) all += e.run_id + e.sha256;
  return sha256_hex(all);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Serial vs parallel timings"};
  std::size_t problems = 40, workers = static_cast<std::size_t>(omp_get_max_threads()), gen_length = 64;
  std::size_t rows = 256, cols = 4096;
  app.add_option("--problems", problems, "Problems in the batch");
  app.add_option("--workers", workers, "Parallel workers");
  app.add_option("--gen-length", gen_length, "Generation length (steps = length)");
  app.add_option("--rows", rows, "Landscape grid rows");
  app.add_option("--cols", cols, "Landscape grid columns");
  CLI11_PARSE(app, argc, argv);

  const fs::path work = fs::temp_directory_path() / ("mdlab_bench_" + std::to_string(::getpid()));
  fs::remove_all(work);
  fs::create_directories(work);

  GeneratorConfig g;
  g.n_problems = problems;
  g.seed = 1;
  g.passage_target_tokens = 400;
  std::vector<Problem> corpus;
  const double t_gen = time_s([&] { corpus = generate(g); });
  write_corpus(work / "corpus.jsonl", corpus, g);
  std::printf("generate %zu problems: %.3f s\n", problems, t_gen);

  ExperimentSpec spec;
  spec.corpus = work / "corpus.jsonl";
  spec.strategies.assign(kAllStrategies.begin(), kAllStrategies.end());
  spec.orders = {OutputOrder::cot_first, OutputOrder::answer_first};
  spec.grid = {{gen_length, gen_length, gen_length}};
  spec.workers = workers;
  spec.output_dir = work / "serial";
  RunSummary s_serial, s_parallel;
  const double t_serial = time_s([&] { s_serial = run_experiment(spec, Execution::serial); });
  spec.output_dir = work / "parallel";
  const double t_parallel = time_s([&] { s_parallel = run_experiment(spec, Execution::parallel); });
  const bool same_runs = archive_digest(work / "serial") == archive_digest(work / "parallel");
  std::printf("run_experiment %zu runs: serial %.3f s, parallel (%zu workers) %.3f s, speedup %.2fx, identical %s\n",
              s_serial.executed, t_serial, workers, t_parallel, t_serial / t_parallel, same_runs ? "yes" : "NO");

  Grid grid(rows, cols);
  Rng rng(3);
  for (auto& x : grid.data) x = rng.uniform01();
  LandscapeStats a, b;
  const double t_ls_serial = time_s([&] { a = landscape_serial(grid); });
  const double t_ls = time_s([&] { b = landscape(grid); });
  const bool same_ls = a.mean == b.mean && a.sigma == b.sigma;
  std::printf("landscape %zux%zu: serial %.4f s, parallel %.4f s, speedup %.2fx, identical %s\n", rows, cols,
              t_ls_serial, t_ls, t_ls_serial / t_ls, same_ls ? "yes" : "NO");

  fs::remove_all(work);
  return same_runs && same_ls && s_serial.failed == 0 && s_parallel.failed == 0 ? 0 : 1;
}
