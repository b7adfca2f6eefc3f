#include "mdlab/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "mdlab/core/error.hpp"
#include "mdlab/core/rng.hpp"
#include "mdlab/core/tokenizer.hpp"

namespace mdlab {

namespace {

constexpr double kMaxConf = 0.999;
const std::uint64_t kGuessLabel = hash_label("oracle/guess");
const std::uint64_t kNoiseLabel = hash_label("oracle/noise");
const std::uint64_t kDistractorLabel = hash_label("oracle/distractor");
const std::uint64_t kWrongLabel = hash_label("oracle/wrong");

void check_unit(double v, const char* name) {
  if (!(v > 0.0) || v > kMaxConf) {
    throw ConfigError(std::string("oracle params: ") + name + " must be in (0, 0.999]");
  }
}

TokenId pick_wrong(const Vocabulary& vocab, TokenId gold, std::uint64_t seed, std::size_t j) {
  Rng rng(mix_seed(mix_seed(seed, kWrongLabel), j));
  if (vocab.is_number(gold) && vocab.number_ids().size() > 1) {
    const auto& nums = vocab.number_ids();
    while (true) {
      const TokenId cand = nums[rng.uniform_below(nums.size())];
      if (cand != gold) return cand;
    }
  }
  std::vector<TokenId> ops;
  for (const char* op : {"+", "-", "*", "="}) {
    if (auto id = vocab.find(op); id && *id != gold) ops.push_back(*id);
  }
  if (!ops.empty()) return ops[rng.uniform_below(ops.size())];
  for (TokenId id = 0; id < static_cast<TokenId>(vocab.size()); ++id) {
    if (id != gold && id != vocab.mask_id()) return id;
  }
  return gold;
}

std::vector<TokenId> pick_distractors(const Vocabulary& vocab, TokenId gold, TokenId wrong, std::size_t m,
                                      std::uint64_t seed, std::size_t j) {
  std::vector<TokenId> out;
  auto usable = [&](TokenId id) {
    return id != vocab.mask_id() && id != gold && id != wrong &&
           std::find(out.begin(), out.end(), id) == out.end();
  };
  Rng rng(mix_seed(mix_seed(seed, kDistractorLabel), j));
  for (std::size_t tries = 0; out.size() < m && tries < 64 * m; ++tries) {
    const auto id = static_cast<TokenId>(rng.uniform_below(vocab.size()));
    if (usable(id)) out.push_back(id);
  }
  for (TokenId id = 0; out.size() < m && id < static_cast<TokenId>(vocab.size()); ++id) {
    if (usable(id)) out.push_back(id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::string_view to_string(TokenRole role) {
  switch (role) {
    case TokenRole::template_token: return "template";
    case TokenRole::retrieval_key: return "retrieval_key";
    case TokenRole::reasoning: return "reasoning";
    case TokenRole::answer_digit: return "answer_digit";
  }
  return "?";
}

void OracleParams::validate() const {
  check_unit(template_conf, "template_conf");
  check_unit(key_base, "key_base");
  check_unit(key_resolved, "key_resolved");
  if (key_resolved < key_base) throw ConfigError("oracle params: key_resolved must be >= key_base");
  for (const Difficulty d : kAllDifficulties) {
    const LevelConfidence lc = level(d);
    const std::string name(to_string(d));
    check_unit(lc.reasoning_base, (name + ".reasoning_base").c_str());
    check_unit(lc.answer_base, (name + ".answer_base").c_str());
  }
  if (reasoning_boost < 0.0 || answer_boost < 0.0) throw ConfigError("oracle params: boosts must be >= 0");
  if (gap && !(*gap >= 0.0)) throw ConfigError("oracle params: gap must be >= 0");
  if (noise < 0.0 || noise > 0.01) throw ConfigError("oracle params: noise must be in [0, 0.01]");
  if (top_k < 2) throw ConfigError("oracle params: top_k must be >= 2");
  if (reference_length == 0) throw ConfigError("oracle params: reference_length must be positive");
}

LevelConfidence OracleParams::level(Difficulty d) const {
  LevelConfidence lc = levels[static_cast<std::size_t>(d)];
  if (gap) lc.answer_base = lc.reasoning_base - *gap;
  return lc;
}

double level_gap(const OracleParams& params, Difficulty d) {
  const LevelConfidence& lc = params.levels[static_cast<std::size_t>(d)];
  return lc.reasoning_base - lc.answer_base;
}

OracleParams OracleParams::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("oracle params must be a JSON object");
  static const std::set<std::string> known = {"schema_version", "template_conf", "key_base", "key_resolved",
                                              "ramp_steps", "levels", "reasoning_boost", "answer_boost",
                                              "gap", "noise", "top_k", "length_scaling", "reference_length"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("oracle params: unknown field '" + key + "'");
  }
  OracleParams p;
  try {
    p.template_conf = j.value("template_conf", p.template_conf);
    p.key_base = j.value("key_base", p.key_base);
    p.key_resolved = j.value("key_resolved", p.key_resolved);
    p.ramp_steps = j.value("ramp_steps", p.ramp_steps);
    p.reasoning_boost = j.value("reasoning_boost", p.reasoning_boost);
    p.answer_boost = j.value("answer_boost", p.answer_boost);
    p.noise = j.value("noise", p.noise);
    p.top_k = j.value("top_k", p.top_k);
    p.length_scaling = j.value("length_scaling", p.length_scaling);
    p.reference_length = j.value("reference_length", p.reference_length);
    if (auto it = j.find("gap"); it != j.end() && !it->is_null()) p.gap = it->get<double>();
    if (auto it = j.find("levels"); it != j.end()) {
      for (const auto& [name, lv] : it->items()) {
        auto& lc = p.levels[static_cast<std::size_t>(parse_difficulty(name))];
        lc.reasoning_base = lv.value("reasoning_base", lc.reasoning_base);
        lc.answer_base = lv.value("answer_base", lc.answer_base);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("oracle params: ") + e.what());
  }
  p.validate();
  return p;
}

nlohmann::json OracleParams::to_json() const {
  nlohmann::json lv;
  for (const Difficulty d : kAllDifficulties) {
    const auto& lc = levels[static_cast<std::size_t>(d)];
    lv[std::string(to_string(d))] = {{"reasoning_base", lc.reasoning_base}, {"answer_base", lc.answer_base}};
  }
  return {{"template_conf", template_conf},
          {"key_base", key_base},
          {"key_resolved", key_resolved},
          {"ramp_steps", ramp_steps},
          {"levels", lv},
          {"reasoning_boost", reasoning_boost},
          {"answer_boost", answer_boost},
          {"gap", gap ? nlohmann::json(*gap) : nlohmann::json(nullptr)},
          {"noise", noise},
          {"top_k", top_k},
          {"length_scaling", length_scaling},
          {"reference_length", reference_length}};
}

void DependencyOracleSpec::validate() const {
  if (positions.empty()) throw ConfigError("oracle spec has no generation positions");
  for (std::size_t j = 0; j < positions.size(); ++j) {
    const auto& p = positions[j];
    const std::string at = "oracle spec position " + std::to_string(j) + ": ";
    if (p.resolved_conf < p.base_conf) throw ConfigError(at + "resolved confidence below base");
    if (!(p.base_conf > 0.0) || p.resolved_conf > 1.0) throw ConfigError(at + "confidence outside (0, 1]");
    if (p.distractors.empty()) throw ConfigError(at + "no distractor tokens");
    for (const auto d : p.depends_on) {
      if (d >= positions.size()) throw ConfigError(at + "dependency outside the generation region");
    }
  }
}

DependencyOracleSpec build_oracle_spec(std::span<const TokenId> reference, const SegmentLayout& layout,
                                       Difficulty level, const Vocabulary& vocab, const OracleParams& params,
                                       std::size_t prompt_len, std::uint64_t seed) {
  params.validate();
  if (vocab.size() < 3) throw ConfigError("oracle needs a vocabulary with at least two real tokens");
  const std::size_t L = reference.size();

  DependencyOracleSpec spec;
  spec.prompt_len = prompt_len;
  spec.seed = seed;
  spec.noise = params.noise;
  spec.key_resolved = params.key_resolved;
  spec.key_base = params.key_base;
  spec.ramp_steps = params.ramp_steps;
  if (params.length_scaling && L > 0) {
    const double scale = static_cast<double>(L) / static_cast<double>(params.reference_length);
    spec.ramp_steps = static_cast<std::size_t>(std::lround(static_cast<double>(params.ramp_steps) * scale));
    spec.key_base = std::min(params.key_resolved, params.key_base / scale);
  }
  const std::size_t m = std::min(params.top_k - 1, vocab.size() - 2);
  spec.floor_conf = 1.0 / static_cast<double>(m + 1) + 0.01;
  if (spec.key_base < spec.floor_conf) spec.key_base = spec.floor_conf;

  const RenderedText rendered = detokenize(reference, vocab, RenderMode::output);
  const SegmentLayout resolved = resolve_segments(rendered.text, layout);

  spec.positions.resize(L);
  std::vector<std::size_t> keys, reasoning;
  for (const Segment& seg : resolved.segments) {
    if (!seg.span) continue;
    for (const std::size_t j : tokens_in_span(rendered, rendered.text, *seg.span)) {
      auto& pos = spec.positions[j];
      switch (seg.label) {
        case SegmentLabel::retrieval:
          if (vocab.is_number(reference[j])) {
            pos.role = TokenRole::retrieval_key;
            keys.push_back(j);
          }
          break;
        case SegmentLabel::reasoning:
          pos.role = TokenRole::reasoning;
          reasoning.push_back(j);
          break;
        case SegmentLabel::answer:
          pos.role = TokenRole::answer_digit;
          break;
      }
    }
  }

  const LevelConfidence lc = params.level(level);
  const std::uint64_t guess_seed = mix_seed(seed, kGuessLabel);
  for (std::size_t j = 0; j < L; ++j) {
    auto& pos = spec.positions[j];
    pos.gold = reference[j];
    if (pos.gold == vocab.mask_id()) throw ConfigError("reference completion contains the mask token");
    pos.wrong = pick_wrong(vocab, pos.gold, seed, j);
    pos.guess = hash_unit(guess_seed, j, 0);
    switch (pos.role) {
      case TokenRole::template_token:
        pos.base_conf = pos.resolved_conf = params.template_conf;
        break;
      case TokenRole::retrieval_key:
        pos.base_conf = spec.key_base;
        pos.resolved_conf = params.key_resolved;
        break;
      case TokenRole::reasoning:
        pos.depends_on = keys;
        pos.base_conf = lc.reasoning_base;
        pos.resolved_conf = std::min(kMaxConf, lc.reasoning_base + params.reasoning_boost);
        break;
      case TokenRole::answer_digit:
        pos.depends_on = reasoning;
        pos.base_conf = lc.answer_base;
        pos.resolved_conf = std::min(kMaxConf, lc.answer_base + params.answer_boost);
        break;
    }
    pos.base_conf = std::max(pos.base_conf, spec.floor_conf);
    pos.resolved_conf = std::max(pos.resolved_conf, pos.base_conf);
    pos.distractors = pick_distractors(vocab, pos.gold, pos.wrong, m, seed, j);
  }
  spec.validate();
  return spec;
}

DependencyOracleSpec build_oracle_spec(const Problem& problem, OutputOrder order, std::size_t gen_length,
                                       const Vocabulary& vocab, const OracleParams& params,
                                       std::size_t prompt_len, std::uint64_t seed) {
  const auto reference = reference_tokens(problem, order, gen_length, vocab);
  return build_oracle_spec(reference, SegmentLayout::reason_order_qa(order), problem.difficulty, vocab, params,
                           prompt_len, seed);
}

double oracle_confidence(const DependencyOracleSpec& spec, std::size_t j, const MaskedSequence& seq,
                         std::size_t step, bool* resolved) {
  const OraclePosition& pos = spec.positions.at(j);
  bool done = true;
  double conf = pos.resolved_conf;
  switch (pos.role) {
    case TokenRole::template_token:
      break;
    case TokenRole::retrieval_key:
      if (step < spec.ramp_steps && pos.base_conf < pos.resolved_conf) {
        done = false;
        const double frac = static_cast<double>(step) / static_cast<double>(spec.ramp_steps);
        conf = pos.base_conf + (pos.resolved_conf - pos.base_conf) * frac;
      }
      break;
    case TokenRole::reasoning:
    case TokenRole::answer_digit:
      for (const std::size_t d : pos.depends_on) {
        if (seq.is_masked(spec.prompt_len + d)) {
          done = false;
          break;
        }
      }
      if (!done) conf = pos.base_conf;
      break;
  }
  if (resolved) *resolved = done;
  return conf;
}

StepPrediction oracle_predict(const DependencyOracleSpec& spec, const MaskedSequence& seq, std::size_t step) {
  if (seq.prompt_len() != spec.prompt_len || seq.gen_length() != spec.positions.size()) {
    throw ConfigError("oracle spec does not match the canvas layout");
  }
  StepPrediction pred;
  pred.step = step;
  const std::uint64_t noise_seed = mix_seed(spec.seed, kNoiseLabel);
  for (std::size_t j = 0; j < spec.positions.size(); ++j) {
    const std::size_t canvas_pos = spec.prompt_len + j;
    if (!seq.is_masked(canvas_pos)) continue;
    const OraclePosition& pos = spec.positions[j];

    bool resolved = false;
    const double nominal = oracle_confidence(spec, j, seq, step, &resolved);
    const bool correct = resolved || pos.guess < nominal;
    const TokenId top = correct ? pos.gold : pos.wrong;
    const double jitter = spec.noise * (2.0 * hash_unit(noise_seed, j, step) - 1.0);
    const double conf = std::clamp(nominal + jitter, spec.floor_conf, kMaxConf);

    PositionDistribution dist;
    dist.position = canvas_pos;
    std::vector<TokenId> rest;
    rest.reserve(pos.distractors.size());
    if (pos.role != TokenRole::template_token) rest.push_back(correct ? pos.wrong : pos.gold);
    for (const TokenId d : pos.distractors) {
      if (rest.size() >= pos.distractors.size()) break;
      rest.push_back(d);
    }
    std::sort(rest.begin(), rest.end());
    const double each = (1.0 - conf) / static_cast<double>(rest.size());
    dist.entries.reserve(rest.size() + 1);
    dist.entries.push_back({top, conf});
    for (const TokenId d : rest) dist.entries.push_back({d, each});
    dist.remainder_mass = 0.0;
    pred.positions.push_back(std::move(dist));
  }
  return pred;
}

OracleSession::OracleSession(DependencyOracleSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

StepPrediction OracleSession::predict(const MaskedSequence& seq, std::size_t step) {
  return oracle_predict(spec_, seq, step);
}

}  // namespace mdlab
