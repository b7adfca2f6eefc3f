// Shared builders for tests that need problems, vocabularies and oracle runs.
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mdlab/archive.hpp"
#include "mdlab/benchmark.hpp"
#include "mdlab/experiment.hpp"
#include "mdlab/oracle.hpp"

namespace fixture {

struct Corpus {
  std::vector<mdlab::Problem> problems;
  mdlab::Vocabulary vocab;

  explicit Corpus(std::vector<mdlab::Problem> p)
      : problems(std::move(p)), vocab(mdlab::build_corpus_vocabulary(problems)) {}
};

inline mdlab::GeneratorConfig generator(std::size_t n, std::uint64_t seed, std::size_t passage_tokens = 160) {
  mdlab::GeneratorConfig g;
  g.n_problems = n;
  g.seed = seed;
  g.passage_target_tokens = passage_tokens;
  return g;
}

// n problems, all at one level.
inline Corpus level_corpus(mdlab::Difficulty d, std::size_t n, std::uint64_t seed, std::size_t passage_tokens = 160) {
  auto g = generator(n, seed, passage_tokens);
  g.difficulty_weights = {0, 0, 0, 0};
  g.difficulty_weights[static_cast<std::size_t>(d)] = 1.0;
  return Corpus(mdlab::generate(g));
}

inline Corpus mixed_corpus(std::size_t n, std::uint64_t seed, std::size_t passage_tokens = 160) {
  return Corpus(mdlab::generate(generator(n, seed, passage_tokens)));
}

inline mdlab::ExperimentSpec oracle_experiment(const mdlab::OracleParams& params, std::uint64_t seed) {
  mdlab::ExperimentSpec spec;
  spec.predictor.kind = mdlab::PredictorChoice::Kind::oracle;
  spec.predictor.oracle = params;
  spec.seed = seed;
  return spec;
}

// One in-memory oracle run through the batch runner's code path.
inline mdlab::TraceFile oracle_run(const mdlab::Problem& p, const mdlab::Vocabulary& vocab, mdlab::Strategy strategy,
                                   mdlab::OutputOrder order, const mdlab::GridCell& cell,
                                   const mdlab::OracleParams& params = {}, std::uint64_t seed = 1) {
  const auto spec = oracle_experiment(params, seed);
  mdlab::PlannedRun r;
  r.run_id = mdlab::run_id(p.id, strategy, order, cell);
  r.problem = &p;
  r.strategy = strategy;
  r.order = order;
  r.cell = cell;
  return mdlab::execute_run(r, spec, vocab);
}

// Always predicts a fixed target completion, with ids 2 or 3 as runner-up; confidence per (generation
// position, step) comes from conf_fn and must exceed 0.5.
class ScriptedSession : public mdlab::PredictorSession {
 public:
  using ConfFn = std::function<double(std::size_t, std::size_t)>;
  ScriptedSession(std::vector<mdlab::TokenId> target, ConfFn conf_fn)
      : target_(std::move(target)), conf_(std::move(conf_fn)) {}

  mdlab::StepPrediction predict(const mdlab::MaskedSequence& seq, std::size_t step) override {
    mdlab::StepPrediction pred;
    pred.step = step;
    for (const std::size_t p : seq.masked_positions()) {
      const std::size_t j = p - seq.prompt_len();
      const mdlab::TokenId top = target_.at(j);
      const mdlab::TokenId alt = top == 2 ? 3 : 2;
      const double c = conf_(j, step);
      pred.positions.push_back({p, {{top, c}, {alt, 1.0 - c}}, 0.0});
    }
    return pred;
  }

 private:
  std::vector<mdlab::TokenId> target_;
  ConfFn conf_;
};

inline mdlab::RunConfig run_config(std::size_t L, std::size_t T, mdlab::Strategy s, std::uint64_t seed = 0,
                                   std::size_t B = 0) {
  mdlab::RunConfig c;
  c.gen_length = L;
  c.steps = T;
  c.block_length = B ? B : L;
  c.strategy = s;
  c.seed = seed;
  return c;
}

inline mdlab::GridCell cell(std::size_t L, std::size_t T, std::size_t B = 0) { return {L, T, B ? B : L}; }

inline double mean(const std::vector<double>& v) {
  double s = 0;
  for (const double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace fixture
