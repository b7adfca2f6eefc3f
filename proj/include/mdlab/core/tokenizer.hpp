#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mdlab/core/vocabulary.hpp"

namespace mdlab {

// Placeholder rendered for still-masked positions. Never a vocabulary entry.
inline constexpr std::string_view kMaskGlyph = "░";

// Splits text into token strings: letter runs, digit runs, single
// punctuation characters, "\n", the special "<eos>" literal, the mask glyph
// and single non-ASCII code points. Spaces, tabs and '\r' separate tokens and
// are dropped.
std::vector<std::string> split_tokens(std::string_view text);

// Number of tokens split_tokens would produce, without allocating them.
std::size_t count_tokens(std::string_view text);

// The mask glyph maps to vocab.mask_id(). Throws FormatError on unknown tokens.
std::vector<TokenId> tokenize(std::string_view text, const Vocabulary& vocab);

enum class RenderMode {
  lossless,  // tokenize(detokenize(x)) == x
  output,    // drops <eos>; used for graded completion text
};

struct RenderedText {
  std::string text;
  // Byte range of each token in text; dropped tokens get an empty range.
  std::vector<std::pair<std::size_t, std::size_t>> offsets;
};

RenderedText detokenize(std::span<const TokenId> ids, const Vocabulary& vocab,
                        RenderMode mode = RenderMode::lossless);

inline std::string detokenize_text(std::span<const TokenId> ids, const Vocabulary& vocab,
                                   RenderMode mode = RenderMode::lossless) {
  return detokenize(ids, vocab, mode).text;
}

}  // namespace mdlab
