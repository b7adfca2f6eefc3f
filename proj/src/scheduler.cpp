#include "mdlab/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mdlab/core/error.hpp"

namespace mdlab {

double sparse_entropy(const PositionDistribution& dist) {
  double h = 0.0;
  for (const auto& e : dist.entries) {
    if (e.prob > 0.0) h -= e.prob * std::log(e.prob);
  }
  if (dist.remainder_mass > 0.0) h -= dist.remainder_mass * std::log(dist.remainder_mass);
  return h;
}

PositionScore score_position(const PositionDistribution& dist) {
  if (dist.entries.size() < 2) throw ProtocolError("distribution needs at least two entries");
  double p1 = -1.0;
  double p2 = -1.0;
  for (const auto& e : dist.entries) {
    if (e.prob > p1) {
      p2 = p1;
      p1 = e.prob;
    } else if (e.prob > p2) {
      p2 = e.prob;
    }
  }
  if (!(p1 > 0.0)) throw ProtocolError("all-zero probabilities at position " + std::to_string(dist.position));
  PositionScore s;
  s.position = dist.position;
  s.conf = p1;
  s.margin = p1 - p2;
  s.entropy = sparse_entropy(dist);
  s.argmax = argmax_token(dist);
  return s;
}

ScoreVector score(const StepPrediction& pred, std::size_t vocab_size) {
  ScoreVector out;
  out.reserve(pred.positions.size());
  for (const auto& d : pred.positions) {
    for (const auto& e : d.entries) {
      if (e.token < 0 || static_cast<std::size_t>(e.token) >= vocab_size) {
        throw ProtocolError("token id out of range at position " + std::to_string(d.position));
      }
    }
    out.push_back(score_position(d));
  }
  return out;
}

std::size_t step_quota(std::size_t remaining_masked, std::size_t remaining_steps) {
  if (remaining_steps <= 1) return remaining_masked;
  return (remaining_masked + remaining_steps - 1) / remaining_steps;
}

std::vector<std::size_t> select(Strategy strategy, const ScoreVector& scores, std::size_t quota,
                                Rng& rng, PositionRange active_block) {
  std::vector<const PositionScore*> cand;
  cand.reserve(scores.size());
  for (const auto& s : scores) {
    if (active_block.contains(s.position)) cand.push_back(&s);
  }
  if (quota > cand.size()) throw std::invalid_argument("quota exceeds masked positions in the active block");

  std::vector<std::size_t> chosen;
  chosen.reserve(quota);
  if (quota == 0) return chosen;

  if (strategy == Strategy::random) {
    // Partial Fisher-Yates over the candidates in input order.
    for (std::size_t i = 0; i < quota; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.uniform_below(cand.size() - i));
      std::swap(cand[i], cand[j]);
      chosen.push_back(cand[i]->position);
    }
  } else {
    auto before = [strategy](const PositionScore* a, const PositionScore* b) {
      switch (strategy) {
        case Strategy::low_confidence:
          if (a->conf != b->conf) return a->conf > b->conf;
          break;
        case Strategy::topk_margin:
          if (a->margin != b->margin) return a->margin > b->margin;
          break;
        case Strategy::entropy:
          if (a->entropy != b->entropy) return a->entropy < b->entropy;
          break;
        default:
          break;
      }
      return a->position < b->position;
    };
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(quota), cand.end(), before);
    for (std::size_t i = 0; i < quota; ++i) chosen.push_back(cand[i]->position);
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

}  // namespace mdlab
