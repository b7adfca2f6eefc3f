#include "mdlab/engine.hpp"

#include <algorithm>
#include <exception>
#include <string>

namespace mdlab {

RunTrace run(std::span<const TokenId> prompt, const SegmentLayout& layout, const RunConfig& config,
             PredictorSession& session, const Vocabulary& vocab) {
  config.validate();
  layout.validate();

  RunTrace trace;
  trace.config = config;
  trace.prompt.assign(prompt.begin(), prompt.end());
  trace.prompt_len = prompt.size();
  trace.steps.reserve(config.steps);

  MaskedSequence seq(prompt, config.gen_length, vocab.mask_id());
  Rng rng(config.seed);
  const std::size_t per_block = config.steps_per_block();
  const std::size_t p0 = seq.prompt_len();

  try {
    for (std::size_t b = 0; b < config.num_blocks(); ++b) {
      const PositionRange block{p0 + b * config.block_length, p0 + (b + 1) * config.block_length};
      for (std::size_t s = 0; s < per_block; ++s) {
        const std::size_t t = b * per_block + s;
        StepRecord rec;
        rec.step = t;
        try {
          StepPrediction pred = session.predict(seq, t);
          validate_prediction(pred, seq, vocab.size());
          rec.scores = score(pred, vocab.size());
        } catch (const std::exception& e) {
          trace.error = RunError{t, e.what()};
          break;
        }

        rec.snapshot.assign(seq.canvas().begin() + static_cast<std::ptrdiff_t>(p0), seq.canvas().end());
        for (const auto& sc : rec.scores) rec.snapshot[sc.position - p0] = sc.argmax;

        const std::size_t quota = step_quota(seq.masked_count(block), per_block - s);
        rec.decision.step = t;
        rec.decision.chosen = select(config.strategy, rec.scores, quota, rng, block);
        for (const std::size_t pos : rec.decision.chosen) {
          const TokenId tok = rec.snapshot[pos - p0];
          seq.commit(pos, tok);
          rec.decision.committed.emplace_back(pos, tok);
        }
        trace.steps.push_back(std::move(rec));
      }
      if (trace.error) break;
    }
  } catch (const std::exception& e) {
    trace.error = RunError{trace.steps.size(), e.what()};
  }

  trace.final_tokens.assign(seq.canvas().begin() + static_cast<std::ptrdiff_t>(p0), seq.canvas().end());
  trace.final_text = detokenize_text(trace.final_tokens, vocab, RenderMode::output);
  trace.layout = resolve_segments(trace.final_text, layout);
  return trace;
}

std::vector<TokenId> latent_snapshot(const RunTrace& trace, std::size_t step) {
  std::vector<TokenId> out = trace.prompt;
  const auto& snap = trace.steps.at(step).snapshot;
  out.insert(out.end(), snap.begin(), snap.end());
  return out;
}

std::string latent_generation_text(const RunTrace& trace, std::size_t step, const Vocabulary& vocab) {
  return detokenize_text(trace.steps.at(step).snapshot, vocab, RenderMode::output);
}

std::vector<std::size_t> commit_steps(const RunTrace& trace) {
  std::vector<std::size_t> out(trace.config.gen_length, kNeverCommitted);
  for (const auto& rec : trace.steps) {
    for (const std::size_t pos : rec.decision.chosen) {
      if (pos >= trace.prompt_len && pos - trace.prompt_len < out.size()) {
        out[pos - trace.prompt_len] = rec.step;
      }
    }
  }
  return out;
}

std::vector<std::string> check_trace_invariants(const RunTrace& trace) {
  std::vector<std::string> bad;
  const RunConfig& cfg = trace.config;
  const std::size_t p0 = trace.prompt_len;
  const std::size_t L = cfg.gen_length;
  if (trace.prompt.size() != p0) bad.push_back("prompt length disagrees with prompt_len");
  if (trace.final_tokens.size() != L) bad.push_back("final_tokens length != gen_length");
  if (!trace.error && trace.steps.size() != cfg.steps) bad.push_back("step count != T");
  if (cfg.gen_length == 0 || cfg.block_length == 0 || cfg.gen_length % cfg.block_length != 0 ||
      cfg.steps % cfg.num_blocks() != 0) {
    bad.push_back("invalid run config");
    return bad;
  }
  const std::size_t per_block = cfg.steps_per_block();

  std::vector<std::size_t> when(L, kNeverCommitted);
  std::vector<TokenId> token(L, -1);
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const StepRecord& rec = trace.steps[i];
    const std::string at = "step " + std::to_string(rec.step) + ": ";
    if (rec.step != i) bad.push_back(at + "steps out of order");
    if (rec.snapshot.size() != L) bad.push_back(at + "snapshot length != gen_length");
    const std::size_t block = rec.step / per_block;
    const PositionRange range{p0 + block * cfg.block_length, p0 + (block + 1) * cfg.block_length};

    std::size_t masked_in_block = 0;
    for (std::size_t j = 0; j < L; ++j) {
      const bool masked = when[j] == kNeverCommitted;
      if (masked && range.contains(p0 + j)) ++masked_in_block;
      if (!masked && j < rec.snapshot.size() && rec.snapshot[j] != token[j]) {
        bad.push_back(at + "committed token changed at generation position " + std::to_string(j));
      }
    }
    std::size_t expected_scores = 0;
    for (std::size_t j = 0; j < L; ++j) expected_scores += when[j] == kNeverCommitted;
    if (rec.scores.size() != expected_scores) bad.push_back(at + "scores do not cover the masked positions");

    const std::size_t quota = step_quota(masked_in_block, per_block - rec.step % per_block);
    if (rec.decision.chosen.size() != quota) bad.push_back(at + "chosen count != quota");
    if (rec.decision.committed.size() != rec.decision.chosen.size()) bad.push_back(at + "committed/chosen mismatch");
    for (std::size_t k = 0; k < rec.decision.chosen.size(); ++k) {
      const std::size_t pos = rec.decision.chosen[k];
      if (!range.contains(pos)) {
        bad.push_back(at + "chosen position outside the active block");
        continue;
      }
      const std::size_t j = pos - p0;
      if (when[j] != kNeverCommitted) {
        bad.push_back(at + "position " + std::to_string(pos) + " committed twice");
        continue;
      }
      when[j] = rec.step;
      const TokenId tok = k < rec.decision.committed.size() ? rec.decision.committed[k].second : -1;
      token[j] = tok;
      if (j < rec.snapshot.size() && rec.snapshot[j] != tok) bad.push_back(at + "committed token is not the argmax");
    }
  }
  if (!trace.error) {
    for (std::size_t j = 0; j < L; ++j) {
      if (when[j] == kNeverCommitted) {
        bad.push_back("generation position " + std::to_string(j) + " never committed");
      } else if (j < trace.final_tokens.size() && trace.final_tokens[j] != token[j]) {
        bad.push_back("final token differs from committed token at " + std::to_string(j));
      }
    }
  }
  return bad;
}

}  // namespace mdlab
