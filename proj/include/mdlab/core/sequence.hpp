#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mdlab/core/vocabulary.hpp"

namespace mdlab {

// Half-open range of canvas positions.
struct PositionRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool contains(std::size_t pos) const { return pos >= begin && pos < end; }
};

// Canvas state x_t: a frozen prompt followed by the generation region.
// A position is masked iff it holds the mask id; prompt positions never are.
class MaskedSequence {
 public:
  MaskedSequence(std::span<const TokenId> prompt, std::size_t gen_length, TokenId mask_id);

  std::size_t prompt_len() const { return prompt_len_; }
  std::size_t gen_length() const { return canvas_.size() - prompt_len_; }
  std::size_t size() const { return canvas_.size(); }
  PositionRange generation_range() const { return {prompt_len_, canvas_.size()}; }

  TokenId mask_id() const { return mask_id_; }
  const std::vector<TokenId>& canvas() const { return canvas_; }
  TokenId at(std::size_t pos) const { return canvas_.at(pos); }
  bool is_masked(std::size_t pos) const { return canvas_.at(pos) == mask_id_; }

  std::size_t masked_count() const { return masked_; }
  std::size_t masked_count(PositionRange range) const;
  std::vector<std::size_t> masked_positions() const;

  // Commits a token at a masked generation position. Throws std::logic_error
  // on prompt positions, already committed positions, or a mask token.
  void commit(std::size_t pos, TokenId token);

 private:
  std::vector<TokenId> canvas_;
  std::size_t prompt_len_ = 0;
  std::size_t masked_ = 0;
  TokenId mask_id_ = 0;
};

}  // namespace mdlab
