#include <algorithm>
#include <fstream>
#include <map>
#include <omp.h>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracles/oracles.hpp"
#include "test_util.hpp"

#include "mdlab/core/error.hpp"
#include "mdlab/metrics.hpp"

using namespace mdlab;

namespace {

std::string dump_all(const std::vector<Problem>& ps) {
  std::string out;
  for (const auto& p : ps) out += problem_to_json(p).dump() + "\n";
  return out;
}

std::size_t count_occurrences(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("formulas") {
  CHECK(compute_answer(Difficulty::D1, {3, 5, 7}) == 15);
  CHECK(compute_answer(Difficulty::D4, {10, 2, 3, 4}) == 16);
  CHECK(variable_names(Difficulty::D4) == std::vector<std::string>{"X", "Y", "Z", "W"});
  CHECK(variable_names(Difficulty::D2).size() == 3);
  CHECK(variable_range(Difficulty::D1) == std::pair<std::int64_t, std::int64_t>{1, 20});
  CHECK(variable_range(Difficulty::D2) == std::pair<std::int64_t, std::int64_t>{1, 50});
  CHECK(variable_range(Difficulty::D3) == std::pair<std::int64_t, std::int64_t>{1, 100});
  CHECK(variable_range(Difficulty::D4) == std::pair<std::int64_t, std::int64_t>{1, 100});
  CHECK(parse_difficulty("D3") == Difficulty::D3);
  CHECK_THROWS_AS(parse_difficulty("D5"), ConfigError);

  // compute_answer agrees with the expression evaluator on every value grid
  // corner and a random sample.
  Rng rng(4);
  for (const auto d : kAllDifficulties) {
    const auto [lo, hi] = variable_range(d);
    for (int i = 0; i < 500; ++i) {
      std::vector<std::int64_t> v;
      std::string expr(formula(d));
      for (const auto& name : variable_names(d)) {
        v.push_back(i < 2 ? (i == 0 ? lo : hi) : rng.uniform_int(lo, hi));
        expr.replace(expr.find(name), name.size(), std::to_string(v.back()));
      }
      CHECK(compute_answer(d, v) == oracle::eval(expr));
    }
  }
}

TEST_CASE("generated problems satisfy their invariants") {
  const auto corpus = fixture::mixed_corpus(600, 99, 200);
  std::array<std::size_t, 4> seen{};
  for (const auto& p : corpus.problems) {
    ++seen[static_cast<std::size_t>(p.difficulty)];
    CHECK(p.gold_answer == oracle::eval(p.expression));
    const auto names = variable_names(p.difficulty);
    REQUIRE(p.variables.size() == names.size());
    const auto [lo, hi] = variable_range(p.difficulty);
    std::vector<std::int64_t> values;
    for (std::size_t i = 0; i < names.size(); ++i) {
      CHECK(p.variables[i].name == names[i]);
      CHECK(p.variables[i].value >= lo);
      CHECK(p.variables[i].value <= hi);
      values.push_back(p.variables[i].value);
    }
    CHECK(compute_answer(p.difficulty, values) == p.gold_answer);
    CHECK(count_tokens(p.passage) == 200);

    // One key sentence per variable, each present in the passage.
    REQUIRE(p.key_sentences.size() == names.size());
    std::set<std::string> vars;
    for (const auto& k : p.key_sentences) {
      vars.insert(k.variable);
      CHECK(count_occurrences(p.passage, k.sentence) == 1);
      CHECK(count_occurrences(p.passage, "The secret key " + k.variable + " is ") == 1);
      CHECK(k.sentence.find(std::to_string(k.value)) != std::string::npos);
    }
    CHECK(vars.size() == names.size());

    // Numbers outside key sentences never equal a key.
    std::string filler = p.passage;
    for (const auto& k : p.key_sentences) filler.erase(filler.find(k.sentence), k.sentence.size());
    const auto keys = p.keys();
    for (const auto n : extract_integers(filler)) CHECK(std::find(keys.begin(), keys.end(), n) == keys.end());

    // Retrieval over the key sentences alone recovers the key set.
    std::string text = "Retrieval:\n";
    for (const auto& k : p.key_sentences) text += k.sentence + " ";
    const auto layout = resolve_segments(text, SegmentLayout::reason_order_qa(OutputOrder::cot_first));
    CHECK(retrieval_f1(text, keys, layout).f1 == 1.0);
  }
  for (const auto c : seen) CHECK(c > 0);
}

TEST_CASE("prompts differ only in the task block") {
  const auto corpus = fixture::mixed_corpus(50, 3);
  for (const auto& p : corpus.problems) {
    const auto [cot, af] = render_prompts(p);
    CHECK(cot == p.prompt_cot_first);
    CHECK(af == p.prompt_answer_first);
    CHECK(cot.find(p.passage) != std::string::npos);
    CHECK(af.find(p.passage) != std::string::npos);
    std::string swapped = cot;
    const auto at = swapped.find(task_block(OutputOrder::cot_first));
    REQUIRE(at != std::string::npos);
    swapped.replace(at, task_block(OutputOrder::cot_first).size(), task_block(OutputOrder::answer_first));
    CHECK(swapped == af);
    for (const auto& prompt : {cot, af}) {
      CHECK(prompt.find("Retrieval:\n(list all secret key numbers you found)") != std::string::npos);
    }
    // First section header after the banner.
    const auto banner = af.find("### YOUR TASK");
    const auto first = af.find(":\n", af.find("structure:", banner) + 10);
    const auto line_start = af.rfind('\n', first) + 1;
    CHECK(af.substr(line_start, first - line_start + 1) == "Answer:");
  }
  CHECK(task_block(OutputOrder::cot_first).find("Retrieval:") < task_block(OutputOrder::cot_first).find("Answer:"));
  CHECK(generic_task_block(OutputOrder::cot_first).find("\\boxed") != std::string_view::npos);
  CHECK(generic_task_block(OutputOrder::answer_first).find("\\boxed") != std::string_view::npos);
}

TEST_CASE("reference completions score perfectly and fit the canvas") {
  const auto corpus = fixture::mixed_corpus(100, 12);
  for (const auto& p : corpus.problems) {
    for (const auto order : {OutputOrder::cot_first, OutputOrder::answer_first}) {
      const auto text = reference_response(p, order);
      const auto layout = resolve_segments(text, SegmentLayout::reason_order_qa(order));
      CHECK(reasoning_accuracy(text, p.gold_answer, layout).correct);
      CHECK(retrieval_f1(text, p.keys(), layout).f1 == 1.0);
      const auto toks = reference_tokens(p, order, 64, corpus.vocab);
      REQUIRE(toks.size() == 64);
      const auto n = count_tokens(text);
      for (std::size_t i = n; i < 64; ++i) CHECK(toks[i] == *corpus.vocab.eos_id());
      CHECK(detokenize_text(toks, corpus.vocab, RenderMode::output) == text);
      CHECK_THROWS_AS(reference_tokens(p, order, n - 1, corpus.vocab), ConfigError);
      CHECK_NOTHROW(tokenize(p.prompt(order), corpus.vocab));
    }
  }
}

TEST_CASE("generation is deterministic across seeds and thread counts") {
  const auto g = fixture::generator(300, 1234, 150);
  omp_set_num_threads(1);
  const auto a = dump_all(generate(g));
  omp_set_num_threads(4);
  const auto b = dump_all(generate(g));
  CHECK(a == b);
  auto g2 = g;
  g2.seed = 1235;
  CHECK(dump_all(generate(g2)) != a);
  // A prefix of a larger corpus is the smaller corpus.
  auto g3 = g;
  g3.n_problems = 100;
  const auto small = dump_all(generate(g3));
  CHECK(a.compare(0, small.size(), small) == 0);
}

TEST_CASE("generator config validation") {
  GeneratorConfig g;
  CHECK_NOTHROW(g.validate());
  g.difficulty_weights = {0.5, 0.5, 0.5, 0.0};
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g = GeneratorConfig{};
  g.passage_target_tokens = 10;
  CHECK_THROWS_AS(generate(g), ConfigError);
  g = GeneratorConfig{};
  g.distractor_pool = {"The number 12 is here."};
  CHECK_THROWS_AS(generate(g), ConfigError);

  try {
    GeneratorConfig::from_json({{"n_problem", 5}});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("n_problem") != std::string::npos);
  }
  try {
    GeneratorConfig::from_json({{"difficulty_weights", {1, 0, 0}}});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("difficulty_weights") != std::string::npos);
  }
  const auto parsed = GeneratorConfig::from_json({{"n_problems", 7}, {"seed", 3}, {"passage_target_tokens", 300}});
  CHECK(parsed.n_problems == 7);
  CHECK(parsed.seed == 3);
  CHECK(parsed.passage_target_tokens == 300);
  CHECK(GeneratorConfig::from_json(nlohmann::json::object()).n_problems == 1000);
  CHECK(default_distractor_pool().size() >= 200);
}

TEST_CASE("corpus files round trip") {
  TempDir dir("corpus");
  const auto g = fixture::generator(40, 8, 120);
  const auto problems = generate(g);
  write_corpus(dir.path() / "c.jsonl", problems, g);
  const auto back = read_corpus(dir.path() / "c.jsonl");
  CHECK(dump_all(back) == dump_all(problems));

  write_corpus(dir.path() / "empty.jsonl", {}, g);
  CHECK(read_corpus(dir.path() / "empty.jsonl").empty());
  const auto report = corpus_report(problems, dir.path() / "c.jsonl");
  CHECK(report.n_problems == 40);
  CHECK(report.counts[0] + report.counts[1] + report.counts[2] + report.counts[3] == 40);
  CHECK(report.sha256.size() == 64);

  {
    std::ofstream out(dir.path() / "bad.jsonl");
    out << R"({"schema":"mdlab-corpus","schema_version":99,"count":0})" << "\n";
  }
  CHECK_THROWS_AS(read_corpus(dir.path() / "bad.jsonl"), FormatError);
  {
    std::ofstream out(dir.path() / "torn.jsonl");
    out << R"({"schema":"mdlab-corpus","schema_version":1,"count":1})" << "\n{\"id\":";
  }
  CHECK_THROWS_AS(read_corpus(dir.path() / "torn.jsonl"), FormatError);
  CHECK_THROWS_AS(read_corpus(dir.path() / "missing.jsonl"), FormatError);
}
