#include "mdlab/core/prediction.hpp"

#include <cmath>
#include <string>

#include "mdlab/core/error.hpp"

namespace mdlab {

TokenId argmax_token(const PositionDistribution& dist) {
  TokenId best = dist.entries.front().token;
  double best_p = dist.entries.front().prob;
  for (const auto& e : dist.entries) {
    if (e.prob > best_p || (e.prob == best_p && e.token < best)) {
      best = e.token;
      best_p = e.prob;
    }
  }
  return best;
}

void validate_distribution(const PositionDistribution& dist, std::size_t vocab_size, TokenId mask_id) {
  const std::string where = "position " + std::to_string(dist.position) + ": ";
  if (dist.entries.size() < 2) throw ProtocolError(where + "fewer than 2 enumerated entries");
  if (!(dist.remainder_mass >= 0.0) || dist.remainder_mass > 1.0) {
    throw ProtocolError(where + "remainder_mass outside [0, 1]");
  }
  double sum = dist.remainder_mass;
  double prev = 2.0;
  for (const auto& e : dist.entries) {
    if (e.token < 0 || static_cast<std::size_t>(e.token) >= vocab_size) {
      throw ProtocolError(where + "token id out of range");
    }
    if (e.token == mask_id) throw ProtocolError(where + "mask token predicted");
    if (!(e.prob >= 0.0) || e.prob > 1.0) throw ProtocolError(where + "probability outside [0, 1]");
    if (e.prob > prev) throw ProtocolError(where + "entries not sorted by descending probability");
    prev = e.prob;
    sum += e.prob;
  }
  if (std::abs(sum - 1.0) > kProbabilityTolerance) {
    throw ProtocolError(where + "probabilities sum to " + std::to_string(sum));
  }
  if (dist.entries.front().prob <= 0.0) throw ProtocolError(where + "all-zero probabilities");
}

void validate_prediction(const StepPrediction& pred, const MaskedSequence& seq, std::size_t vocab_size) {
  std::size_t expected = 0;
  for (const auto& d : pred.positions) {
    if (d.position >= seq.size()) throw ProtocolError("prediction for position beyond the canvas");
    if (!seq.is_masked(d.position)) {
      throw ProtocolError("prediction for committed position " + std::to_string(d.position));
    }
    validate_distribution(d, vocab_size, seq.mask_id());
    ++expected;
  }
  for (std::size_t i = 1; i < pred.positions.size(); ++i) {
    if (pred.positions[i].position <= pred.positions[i - 1].position) {
      throw ProtocolError("prediction positions not strictly ascending");
    }
  }
  if (expected != seq.masked_count()) {
    throw ProtocolError("prediction covers " + std::to_string(expected) + " of " +
                        std::to_string(seq.masked_count()) + " masked positions");
  }
}

}  // namespace mdlab
