#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "fixtures.hpp"

#include "mdlab/core/error.hpp"
#include "mdlab/core/rng.hpp"
#include "mdlab/metrics.hpp"
#include "mdlab/oracle.hpp"

using namespace mdlab;

namespace {

// Mean normalized commit rank of answer positions among reasoning and answer
// positions: 0 means answers go first, 1 means last, 0.5 means no preference.
double answer_rank(const TraceFile& f, const Vocabulary& vocab) {
  const auto when = commit_steps(f.trace);
  const auto r = segment_positions(f.trace, SegmentLabel::reasoning, vocab);
  const auto a = segment_positions(f.trace, SegmentLabel::answer, vocab);
  std::vector<std::pair<std::size_t, bool>> all;
  for (const auto j : r) all.emplace_back(when[j], false);
  for (const auto j : a) all.emplace_back(when[j], true);
  std::sort(all.begin(), all.end());
  double sum = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all[i].second) sum += static_cast<double>(i) / static_cast<double>(all.size() - 1);
  }
  return sum / static_cast<double>(a.size());
}

// Two-sided permutation test on the difference of means.
double permutation_p(const std::vector<double>& x, const std::vector<double>& y, std::uint64_t seed) {
  std::vector<double> pooled = x;
  pooled.insert(pooled.end(), y.begin(), y.end());
  const double observed = std::abs(fixture::mean(x) - fixture::mean(y));
  Rng rng(seed);
  const int rounds = 2000;
  int extreme = 0;
  for (int r = 0; r < rounds; ++r) {
    for (std::size_t i = pooled.size(); i > 1; --i) std::swap(pooled[i - 1], pooled[rng.uniform_below(i)]);
    const std::vector<double> a(pooled.begin(), pooled.begin() + static_cast<std::ptrdiff_t>(x.size()));
    const std::vector<double> b(pooled.begin() + static_cast<std::ptrdiff_t>(x.size()), pooled.end());
    extreme += std::abs(fixture::mean(a) - fixture::mean(b)) >= observed - 1e-15;
  }
  return (extreme + 1.0) / (rounds + 1.0);
}

}  // namespace

TEST_CASE("params: defaults, json round trip and validation") {
  const OracleParams d;
  CHECK(d.level(Difficulty::D1).answer_base == 0.99);
  CHECK(d.level(Difficulty::D4).answer_base == 0.55);
  CHECK(level_gap(d, Difficulty::D3) == doctest::Approx(0.10));
  CHECK(d.ramp_steps == 5);
  CHECK(d.noise == 0.01);

  OracleParams g;
  g.gap = 0.0;
  for (const auto lvl : kAllDifficulties) CHECK(g.level(lvl).answer_base == g.level(lvl).reasoning_base);

  const auto back = OracleParams::from_json(g.to_json());
  CHECK(back.to_json() == g.to_json());
  CHECK(OracleParams::from_json(nlohmann::json::object()).to_json() == d.to_json());
  const auto partial = OracleParams::from_json({{"levels", {{"D2", {{"answer_base", 0.5}}}}}});
  CHECK(partial.level(Difficulty::D2).answer_base == 0.5);
  CHECK(partial.level(Difficulty::D2).reasoning_base == 0.90);

  CHECK_THROWS_AS(OracleParams::from_json({{"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(OracleParams::from_json({{"noise", 0.5}}), ConfigError);
  CHECK_THROWS_AS(OracleParams::from_json({{"key_base", 0.99}, {"key_resolved", 0.9}}), ConfigError);
  CHECK_THROWS_AS(OracleParams::from_json({{"gap", -0.1}}), ConfigError);
  CHECK_THROWS_AS(OracleParams::from_json({{"top_k", 1}}), ConfigError);
  CHECK_THROWS_AS(OracleParams::from_json({{"noise", "loud"}}), ConfigError);
}

TEST_CASE("spec: roles and confidence invariants") {
  const auto corpus = fixture::mixed_corpus(40, 17);
  OracleParams gap0;
  gap0.gap = 0.0;
  for (const auto& p : corpus.problems) {
    for (const auto order : {OutputOrder::cot_first, OutputOrder::answer_first}) {
      for (const auto& params : {OracleParams{}, gap0}) {
        const auto spec = build_oracle_spec(p, order, 64, corpus.vocab, params, 10, 1);
        REQUIRE(spec.positions.size() == 64);
        std::size_t keys = 0, answers = 0;
        double rb = -1, ab = -1;
        for (const auto& pos : spec.positions) {
          CHECK(pos.resolved_conf >= pos.base_conf);
          CHECK(pos.base_conf > 0.0);
          CHECK(pos.resolved_conf <= 1.0);
          CHECK(pos.wrong != pos.gold);
          CHECK(std::find(pos.distractors.begin(), pos.distractors.end(), pos.gold) == pos.distractors.end());
          keys += pos.role == TokenRole::retrieval_key;
          answers += pos.role == TokenRole::answer_digit;
          if (pos.role == TokenRole::reasoning) rb = pos.base_conf;
          if (pos.role == TokenRole::answer_digit) ab = pos.base_conf;
        }
        CHECK(keys == p.variables.size());
        CHECK(answers == count_tokens(std::to_string(p.gold_answer)));
        if (params.gap) CHECK(rb == ab);
      }
    }
  }
}

TEST_CASE("spec: length scaling stretches the key ramp") {
  const auto corpus = fixture::level_corpus(Difficulty::D1, 1, 2);
  OracleParams p;
  p.length_scaling = true;
  const auto s64 = build_oracle_spec(corpus.problems[0], OutputOrder::cot_first, 64, corpus.vocab, p, 5, 1);
  const auto s256 = build_oracle_spec(corpus.problems[0], OutputOrder::cot_first, 256, corpus.vocab, p, 5, 1);
  CHECK(s64.ramp_steps == 5);
  CHECK(s64.key_base == doctest::Approx(0.60));
  CHECK(s256.ramp_steps == 20);
  CHECK(s256.key_base == doctest::Approx(std::max(0.15, s256.floor_conf)));
  CHECK(s256.floor_conf == doctest::Approx(1.0 / 16 + 0.01));
}

TEST_CASE("predictions are deterministic and normalized") {
  const auto corpus = fixture::mixed_corpus(10, 4);
  Rng rng(8);
  for (const auto& p : corpus.problems) {
    const auto prompt = tokenize(p.prompt(OutputOrder::cot_first), corpus.vocab);
    const auto spec = build_oracle_spec(p, OutputOrder::cot_first, 64, corpus.vocab, OracleParams{}, prompt.size(), 5);
    MaskedSequence seq(prompt, 64, corpus.vocab.mask_id());
    for (std::size_t step = 0; step < 64; ++step) {
      const auto a = oracle_predict(spec, seq, step);
      const auto b = oracle_predict(spec, seq, step);
      REQUIRE(a.positions.size() == seq.masked_count());
      for (std::size_t i = 0; i < a.positions.size(); ++i) {
        const auto& d = a.positions[i];
        CHECK(d.position == b.positions[i].position);
        double sum = d.remainder_mass;
        for (std::size_t k = 0; k < d.entries.size(); ++k) {
          CHECK(d.entries[k].token == b.positions[i].entries[k].token);
          CHECK(d.entries[k].prob == b.positions[i].entries[k].prob);
          CHECK(d.entries[k].prob > 0.0);
          CHECK(d.entries[k].prob < 1.0);
          CHECK(d.entries[k].token != corpus.vocab.mask_id());
          sum += d.entries[k].prob;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-6);
        CHECK(d.entries.size() <= 16);
      }
      CHECK_NOTHROW(validate_prediction(a, seq, corpus.vocab.size()));
      // Commit a random masked position with its gold token.
      const auto masked = seq.masked_positions();
      const auto pos = masked[rng.uniform_below(masked.size())];
      seq.commit(pos, spec.positions[pos - prompt.size()].gold);
    }
  }
}

TEST_CASE("a different oracle seed changes the noise") {
  const auto corpus = fixture::level_corpus(Difficulty::D3, 1, 4);
  const auto& p = corpus.problems[0];
  const auto prompt = tokenize(p.prompt(OutputOrder::cot_first), corpus.vocab);
  const auto s1 = build_oracle_spec(p, OutputOrder::cot_first, 64, corpus.vocab, {}, prompt.size(), 1);
  const auto s2 = build_oracle_spec(p, OutputOrder::cot_first, 64, corpus.vocab, {}, prompt.size(), 2);
  MaskedSequence seq(prompt, 64, corpus.vocab.mask_id());
  const auto a = oracle_predict(s1, seq, 0), b = oracle_predict(s2, seq, 0);
  bool differs = false;
  for (std::size_t i = 0; i < a.positions.size(); ++i) differs |= a.positions[i].entries[0].prob != b.positions[i].entries[0].prob;
  CHECK(differs);
}

TEST_CASE("oracle rejects a canvas that does not match its spec") {
  const auto corpus = fixture::level_corpus(Difficulty::D1, 1, 4);
  const auto& p = corpus.problems[0];
  const auto spec = build_oracle_spec(p, OutputOrder::cot_first, 64, corpus.vocab, {}, 3, 1);
  const std::vector<TokenId> prompt(4, corpus.vocab.id("The"));
  MaskedSequence seq(prompt, 64, corpus.vocab.mask_id());
  CHECK_THROWS_AS(oracle_predict(spec, seq, 0), ConfigError);
  auto broken = spec;
  broken.positions[3].resolved_conf = broken.positions[3].base_conf / 2;
  CHECK_THROWS_AS(OracleSession{broken}, ConfigError);
}

TEST_CASE("easy answers commit early under confidence ordering") {
  const auto corpus = fixture::level_corpus(Difficulty::D1, 20, 21);
  std::vector<double> exposure;
  for (const auto& p : corpus.problems) {
    const auto f = fixture::oracle_run(p, corpus.vocab, Strategy::low_confidence, OutputOrder::answer_first,
                                       fixture::cell(64, 64));
    REQUIRE(f.trace.complete());
    exposure.push_back(static_cast<double>(exposure_step(f.trace, SegmentLabel::answer, corpus.vocab).step));
  }
  CHECK(fixture::mean(exposure) <= 0.10 * 64);
}

TEST_CASE("hard answers commit only after all reasoning") {
  const auto corpus = fixture::level_corpus(Difficulty::D4, 30, 22);
  for (const auto& p : corpus.problems) {
    for (const auto order : {OutputOrder::cot_first, OutputOrder::answer_first}) {
      const auto f = fixture::oracle_run(p, corpus.vocab, Strategy::low_confidence, order, fixture::cell(64, 64));
      REQUIRE(f.trace.complete());
      const auto when = commit_steps(f.trace);
      std::size_t last_reasoning = 0;
      for (const auto j : segment_positions(f.trace, SegmentLabel::reasoning, corpus.vocab)) {
        last_reasoning = std::max(last_reasoning, when[j]);
      }
      const auto exp = exposure_step(f.trace, SegmentLabel::answer, corpus.vocab);
      REQUIRE_FALSE(exp.empty);
      CHECK(exp.step > last_reasoning + 1);
      for (const auto j : segment_positions(f.trace, SegmentLabel::answer, corpus.vocab)) CHECK(when[j] > last_reasoning);
    }
  }
}

TEST_CASE("without a confidence gap the answer/reasoning order looks random") {
  const auto corpus = fixture::level_corpus(Difficulty::D3, 200, 23);
  OracleParams flat;
  flat.gap = 0.0;
  std::vector<double> lc_flat, rnd, lc_default;
  for (const auto& p : corpus.problems) {
    const auto cell = fixture::cell(64, 64);
    lc_flat.push_back(answer_rank(
        fixture::oracle_run(p, corpus.vocab, Strategy::low_confidence, OutputOrder::cot_first, cell, flat), corpus.vocab));
    rnd.push_back(answer_rank(
        fixture::oracle_run(p, corpus.vocab, Strategy::random, OutputOrder::cot_first, cell, flat), corpus.vocab));
    lc_default.push_back(answer_rank(
        fixture::oracle_run(p, corpus.vocab, Strategy::low_confidence, OutputOrder::cot_first, cell), corpus.vocab));
  }
  MESSAGE("answer rank: flat=" << fixture::mean(lc_flat) << " random=" << fixture::mean(rnd)
                               << " default=" << fixture::mean(lc_default));
  CHECK(permutation_p(lc_flat, rnd, 1) > 0.01);
  // The same test does detect the default gap.
  CHECK(permutation_p(lc_default, rnd, 2) < 0.01);
}

TEST_CASE("instant key prediction crosses the latent F1 threshold within the ramp") {
  const auto corpus = fixture::mixed_corpus(40, 31);
  OracleParams instant;
  instant.key_base = instant.key_resolved;
  for (const auto& p : corpus.problems) {
    for (const auto st : kAllStrategies) {
      const auto f = fixture::oracle_run(p, corpus.vocab, st, OutputOrder::cot_first, fixture::cell(64, 64), instant);
      const auto curve = latent_f1_curve(f.trace, p.keys(), corpus.vocab);
      CHECK(curve.crossing <= instant.ramp_steps);
    }
  }
}

TEST_CASE("keys are visible in the latent snapshot before anything commits") {
  const auto corpus = fixture::mixed_corpus(20, 32);
  OracleParams ready;
  ready.ramp_steps = 0;
  for (const auto& p : corpus.problems) {
    const auto f = fixture::oracle_run(p, corpus.vocab, Strategy::left_to_right, OutputOrder::answer_first,
                                       fixture::cell(64, 64), ready);
    const auto& tr = f.trace;
    // At step 0 the whole generation region is still masked.
    CHECK(tr.steps[0].scores.size() == 64);
    const std::string text = latent_generation_text(tr, 0, corpus.vocab);
    const auto layout = resolve_segments(text, SegmentLayout::reason_order_qa(OutputOrder::answer_first));
    CHECK(retrieval_f1(text, p.keys(), layout).f1 == 1.0);
    CHECK(latent_f1_curve(tr, p.keys(), corpus.vocab).crossing == 0);
  }
}
