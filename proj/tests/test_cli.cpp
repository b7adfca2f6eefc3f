#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "test_util.hpp"

#include "mdlab/archive.hpp"
#include "mdlab/core/digest.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string output;
};

pid_t spawn(const std::vector<std::string>& args, const fs::path& log,
            const std::vector<std::pair<std::string, std::string>>& env) {
  const pid_t pid = ::fork();
  if (pid == 0) {
    const int fd = ::open(log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    ::dup2(fd, 1);
    ::dup2(fd, 2);
    ::unsetenv("MDLAB_WORKERS");
    ::unsetenv("MDLAB_OUTPUT_DIR");
    for (const auto& [k, v] : env) ::setenv(k.c_str(), v.c_str(), 1);
    std::vector<char*> argv;
    std::string exe = MDLAB_CLI_PATH;
    argv.push_back(exe.data());
    std::vector<std::string> copy = args;
    for (auto& a : copy) argv.push_back(a.data());
    argv.push_back(nullptr);
    ::execv(exe.c_str(), argv.data());
    ::_exit(127);
  }
  return pid;
}

Result cli(const fs::path& work, const std::vector<std::string>& args,
           const std::vector<std::pair<std::string, std::string>>& env = {}) {
  const fs::path log = work / "cli.log";
  const pid_t pid = spawn(args, log, env);
  int status = 0;
  ::waitpid(pid, &status, 0);
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = mdlab::read_file(log);
  return r;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p);
  out << s;
}

fs::path data_dir() { return fs::path(MDLAB_SOURCE_DIR) / "data"; }

void write_generator(const fs::path& p, std::size_t n, std::uint64_t seed) {
  write_text(p, nlohmann::json{{"schema_version", 1},
                               {"n_problems", n},
                               {"seed", seed},
                               {"passage_target_tokens", 120},
                               {"distractor_pool_file", (data_dir() / "distractor_sentences.txt").string()},
                               {"fragment_words_file", (data_dir() / "fragment_words.txt").string()}}
                    .dump(2));
}

void write_spec(const fs::path& p, const fs::path& corpus, const fs::path& out, std::size_t L = 64) {
  write_text(p, nlohmann::json{{"schema_version", 1},
                               {"corpus", corpus.string()},
                               {"output_dir", out.string()},
                               {"strategies", {"low_confidence", "topk_margin", "entropy", "random", "left_to_right"}},
                               {"orders", {"cot_first", "answer_first"}},
                               {"grid", nlohmann::json::array({{{"gen_length", L}, {"steps", L}}})},
                               {"seed", 3}}
                    .dump(2));
}

std::size_t count_traces(const fs::path& archive) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(archive / "traces")) n += e.path().extension() == ".json";
  return n;
}

}  // namespace

TEST_CASE("usage and configuration errors exit with 2") {
  TempDir dir("cli_usage");
  CHECK(cli(dir.path(), {}).code == 2);
  CHECK(cli(dir.path(), {"frobnicate"}).code == 2);
  CHECK(cli(dir.path(), {"run"}).code == 2);
  CHECK(cli(dir.path(), {"--help"}).code == 0);

  write_text(dir.path() / "bad.json", R"({"n_problems": 3, "colour": "blue"})");
  auto r = cli(dir.path(), {"generate", "--config", (dir.path() / "bad.json").string()});
  CHECK(r.code == 2);
  CHECK(r.output.find("colour") != std::string::npos);

  write_text(dir.path() / "broken.json", "{ not json");
  CHECK(cli(dir.path(), {"generate", "--config", (dir.path() / "broken.json").string()}).code == 2);
  CHECK(cli(dir.path(), {"run", "--spec", (dir.path() / "missing.json").string()}).code == 2);
  CHECK(cli(dir.path(), {"analyze", "--archive", (dir.path() / "nowhere").string()}).code == 2);

  write_text(dir.path() / "v2.json", R"({"schema_version": 2, "corpus": "c.jsonl"})");
  r = cli(dir.path(), {"run", "--spec", (dir.path() / "v2.json").string()});
  CHECK(r.code == 2);
  CHECK(r.output.find("schema_version") != std::string::npos);
}

TEST_CASE("generate is deterministic") {
  TempDir dir("cli_gen");
  write_generator(dir.path() / "gen.json", 40, 11);
  const auto a = cli(dir.path(), {"generate", "--config", (dir.path() / "gen.json").string(), "--output",
                                  (dir.path() / "a.jsonl").string()});
  const auto b = cli(dir.path(), {"generate", "--config", (dir.path() / "gen.json").string(), "--output",
                                  (dir.path() / "b.jsonl").string()});
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(mdlab::sha256_file(dir.path() / "a.jsonl") == mdlab::sha256_file(dir.path() / "b.jsonl"));
  CHECK(fs::exists(dir.path() / "a.jsonl.report.json"));
  CHECK(a.output.find("wrote 40 problems") != std::string::npos);

  write_generator(dir.path() / "zero.json", 0, 11);
  const auto z = cli(dir.path(), {"generate", "--config", (dir.path() / "zero.json").string(), "--output",
                                  (dir.path() / "zero.jsonl").string()});
  CHECK(z.code == 0);
  CHECK(fs::exists(dir.path() / "zero.jsonl"));
}

TEST_CASE("run, resume and analyze") {
  TempDir dir("cli_run");
  write_generator(dir.path() / "gen.json", 10, 5);
  const fs::path corpus = dir.path() / "corpus.jsonl";
  REQUIRE(cli(dir.path(), {"generate", "--config", (dir.path() / "gen.json").string(), "--output", corpus.string()})
              .code == 0);
  const fs::path archive = dir.path() / "archive";
  write_spec(dir.path() / "spec.json", corpus, archive);

  auto r = cli(dir.path(), {"run", "--spec", (dir.path() / "spec.json").string(), "--workers", "2"});
  REQUIRE(r.code == 0);
  CHECK(r.output.find("planned 100, skipped 0, executed 100, failed 0") != std::string::npos);
  CHECK(mdlab::load_manifest(archive / "manifest.jsonl").latest().size() == 100);
  CHECK(count_traces(archive) == 100);

  std::vector<fs::path> traces;
  for (const auto& e : fs::directory_iterator(archive / "traces")) traces.push_back(e.path());
  std::sort(traces.begin(), traces.end());
  const std::string kept = mdlab::read_file(traces[10]);
  for (std::size_t i = 0; i < 3; ++i) fs::remove(traces[i * 7]);
  r = cli(dir.path(), {"run", "--spec", (dir.path() / "spec.json").string()});
  REQUIRE(r.code == 0);
  CHECK(r.output.find("planned 100, skipped 97, executed 3, failed 0") != std::string::npos);
  CHECK(count_traces(archive) == 100);
  CHECK(mdlab::read_file(traces[10]) == kept);

  r = cli(dir.path(), {"analyze", "--archive", archive.string()});
  REQUIRE(r.code == 0);
  CHECK(r.output.find("analyzed 100 runs (0 skipped)") != std::string::npos);
  CHECK(fs::exists(archive / "reports" / "accuracy.csv"));

  r = cli(dir.path(), {"validate-trace", traces[10].string()});
  CHECK(r.code == 0);
  CHECK(r.output.find(": ok (64 steps)") != std::string::npos);

  auto j = nlohmann::json::parse(kept);
  j["trace"]["steps"].erase(j["trace"]["steps"].size() - 1);
  write_text(dir.path() / "short.json", j.dump());
  CHECK(cli(dir.path(), {"validate-trace", (dir.path() / "short.json").string()}).code != 0);
  write_text(dir.path() / "junk.json", "[1,2");
  CHECK(cli(dir.path(), {"validate-trace", (dir.path() / "junk.json").string()}).code == 2);
}

TEST_CASE("environment overrides") {
  TempDir dir("cli_env");
  write_generator(dir.path() / "gen.json", 2, 8);
  const fs::path corpus = dir.path() / "corpus.jsonl";
  REQUIRE(cli(dir.path(), {"generate", "--config", (dir.path() / "gen.json").string(), "--output", corpus.string()})
              .code == 0);
  write_spec(dir.path() / "spec.json", corpus, dir.path() / "from_spec");
  const fs::path env_out = dir.path() / "from_env";
  auto r = cli(dir.path(), {"run", "--spec", (dir.path() / "spec.json").string()},
               {{"MDLAB_OUTPUT_DIR", env_out.string()}, {"MDLAB_WORKERS", "3"}});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(env_out / "manifest.jsonl"));
  CHECK_FALSE(fs::exists(dir.path() / "from_spec"));
  CHECK(nlohmann::json::parse(mdlab::read_file(env_out / "experiment.json"))["workers"] == 3);

  // The flag wins over the environment.
  const fs::path flag_out = dir.path() / "from_flag";
  r = cli(dir.path(), {"run", "--spec", (dir.path() / "spec.json").string(), "--output", flag_out.string()},
          {{"MDLAB_OUTPUT_DIR", env_out.string()}});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(flag_out / "manifest.jsonl"));

  CHECK(cli(dir.path(), {"run", "--spec", (dir.path() / "spec.json").string()}, {{"MDLAB_WORKERS", "many"}}).code ==
        2);
}

TEST_CASE("unreachable predictor gives exit 1 and failure records") {
  TempDir dir("cli_remote");
  write_generator(dir.path() / "gen.json", 1, 9);
  const fs::path corpus = dir.path() / "corpus.jsonl";
  REQUIRE(cli(dir.path(), {"generate", "--config", (dir.path() / "gen.json").string(), "--output", corpus.string()})
              .code == 0);
  auto spec = nlohmann::json{{"schema_version", 1},
                             {"corpus", corpus.string()},
                             {"output_dir", (dir.path() / "a").string()},
                             {"strategies", {"random"}},
                             {"orders", {"cot_first"}},
                             {"grid", nlohmann::json::array({{{"gen_length", 64}}})},
                             {"predictor", {{"kind", "remote"}, {"endpoint", "tcp://127.0.0.1:1"}, {"timeout_seconds", 1}}}};
  write_text(dir.path() / "spec.json", spec.dump());
  const auto r = cli(dir.path(), {"run", "--spec", (dir.path() / "spec.json").string()});
  CHECK(r.code == 1);
  CHECK(r.output.find("failed 1") != std::string::npos);
  const auto m = mdlab::load_manifest(dir.path() / "a" / "manifest.jsonl").latest();
  REQUIRE(m.size() == 1);
  CHECK_FALSE(m[0].ok);
}

TEST_CASE("a killed run resumes cleanly") {
  TempDir dir("cli_kill");
  write_generator(dir.path() / "gen.json", 10, 6);
  const fs::path corpus = dir.path() / "corpus.jsonl";
  REQUIRE(cli(dir.path(), {"generate", "--config", (dir.path() / "gen.json").string(), "--output", corpus.string()})
              .code == 0);
  const fs::path archive = dir.path() / "archive";
  write_spec(dir.path() / "spec.json", corpus, archive, 128);

  const pid_t pid = spawn({"run", "--spec", (dir.path() / "spec.json").string(), "--serial"}, dir.path() / "k.log", {});
  // Wait for some progress, then kill without warning.
  for (int i = 0; i < 400; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
    if (fs::exists(archive / "manifest.jsonl") && fs::file_size(archive / "manifest.jsonl") > 600) break;
  }
  ::kill(pid, SIGKILL);
  int status = 0;
  ::waitpid(pid, &status, 0);

  const auto partial = mdlab::load_manifest(archive / "manifest.jsonl");
  const std::size_t done = partial.latest().size();
  CHECK(done < 100);

  const auto r = cli(dir.path(), {"run", "--spec", (dir.path() / "spec.json").string()});
  REQUIRE(r.code == 0);
  const auto full = mdlab::load_manifest(archive / "manifest.jsonl");
  CHECK_FALSE(full.truncated_tail);
  CHECK(full.latest().size() == 100);
  for (const auto& e : full.latest()) {
    CHECK(e.ok);
    CHECK(mdlab::sha256_file(archive / e.file) == e.sha256);
  }
  CHECK(cli(dir.path(), {"analyze", "--archive", archive.string(), "--no-heatmaps"}).code == 0);
}
