#include "mdlab/core/sequence.hpp"

#include <stdexcept>
#include <string>

namespace mdlab {

MaskedSequence::MaskedSequence(std::span<const TokenId> prompt, std::size_t gen_length,
                               TokenId mask_id)
    : prompt_len_(prompt.size()), masked_(gen_length), mask_id_(mask_id) {
  canvas_.reserve(prompt.size() + gen_length);
  for (const TokenId t : prompt) {
    if (t == mask_id) throw std::invalid_argument("prompt may not contain the mask token");
    canvas_.push_back(t);
  }
  canvas_.resize(prompt.size() + gen_length, mask_id);
}

std::size_t MaskedSequence::masked_count(PositionRange range) const {
  std::size_t n = 0;
  for (std::size_t p = range.begin; p < range.end && p < canvas_.size(); ++p) n += canvas_[p] == mask_id_;
  return n;
}

std::vector<std::size_t> MaskedSequence::masked_positions() const {
  std::vector<std::size_t> out;
  out.reserve(masked_);
  for (std::size_t p = prompt_len_; p < canvas_.size(); ++p) {
    if (canvas_[p] == mask_id_) out.push_back(p);
  }
  return out;
}

void MaskedSequence::commit(std::size_t pos, TokenId token) {
  if (pos < prompt_len_ || pos >= canvas_.size()) {
    throw std::logic_error("commit outside the generation region at " + std::to_string(pos));
  }
  if (canvas_[pos] != mask_id_) throw std::logic_error("position " + std::to_string(pos) + " already committed");
  if (token == mask_id_) throw std::logic_error("cannot commit the mask token");
  canvas_[pos] = token;
  --masked_;
}

}  // namespace mdlab
