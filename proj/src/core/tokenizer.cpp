#include "mdlab/core/tokenizer.hpp"

#include "mdlab/core/error.hpp"

namespace mdlab {

namespace {

enum class CharClass { space, newline, letter, digit, punct, multibyte };

CharClass classify(unsigned char c) {
  if (c == ' ' || c == '\t' || c == '\r') return CharClass::space;
  if (c == '\n') return CharClass::newline;
  if ((c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z')) return CharClass::letter;
  if (c >= '0' && c <= '9') return CharClass::digit;
  if (c >= 0x80) return CharClass::multibyte;
  return CharClass::punct;
}

std::size_t utf8_length(unsigned char lead) {
  if ((lead & 0xE0) == 0xC0) return 2;
  if ((lead & 0xF0) == 0xE0) return 3;
  if ((lead & 0xF8) == 0xF0) return 4;
  return 1;
}

// Calls emit(begin, length) for each token of text.
template <typename Emit>
void scan(std::string_view text, Emit&& emit) {
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(text[i]);
    const CharClass cls = classify(c);
    if (cls == CharClass::space) {
      ++i;
      continue;
    }
    if (cls == CharClass::letter || cls == CharClass::digit) {
      std::size_t j = i + 1;
      while (j < n && classify(static_cast<unsigned char>(text[j])) == cls) ++j;
      emit(i, j - i);
      i = j;
      continue;
    }
    if (c == '<' && text.substr(i, Vocabulary::kEosToken.size()) == Vocabulary::kEosToken) {
      emit(i, Vocabulary::kEosToken.size());
      i += Vocabulary::kEosToken.size();
      continue;
    }
    if (cls == CharClass::multibyte) {
      const std::size_t len = std::min(utf8_length(c), n - i);
      emit(i, len);
      i += len;
      continue;
    }
    emit(i, 1);  // newline or single punctuation character
    ++i;
  }
}

bool is_closing(std::string_view tok) {
  return tok == "." || tok == "," || tok == ":" || tok == ";" || tok == "!" || tok == "?" ||
         tok == ")" || tok == "]" || tok == "}" || tok == "%";
}

bool is_opening(std::string_view tok) {
  return tok == "(" || tok == "[" || tok == "{" || tok == "\\" || tok == "$";
}

}  // namespace

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> out;
  scan(text, [&](std::size_t b, std::size_t len) { out.emplace_back(text.substr(b, len)); });
  return out;
}

std::size_t count_tokens(std::string_view text) {
  std::size_t count = 0;
  scan(text, [&](std::size_t, std::size_t) { ++count; });
  return count;
}

std::vector<TokenId> tokenize(std::string_view text, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  scan(text, [&](std::size_t b, std::size_t len) {
    const std::string_view piece = text.substr(b, len);
    ids.push_back(piece == kMaskGlyph ? vocab.mask_id() : vocab.id(piece));
  });
  return ids;
}

RenderedText detokenize(std::span<const TokenId> ids, const Vocabulary& vocab, RenderMode mode) {
  RenderedText out;
  out.offsets.reserve(ids.size());
  std::string_view prev;
  bool have_prev = false;
  bool unary_minus = false;  // prev is a "-" that starts a signed number
  for (const TokenId id : ids) {
    std::string_view tok = id == vocab.mask_id() ? kMaskGlyph : std::string_view(vocab.token(id));
    if (mode == RenderMode::output && vocab.eos_id() && id == *vocab.eos_id()) {
      out.offsets.emplace_back(out.text.size(), out.text.size());
      continue;
    }
    if (have_prev) {
      const bool signed_number = unary_minus && tok.front() >= '0' && tok.front() <= '9';
      const bool glue = prev == "\n" || tok == "\n" || is_closing(tok) || is_opening(prev) || signed_number;
      if (!glue) out.text.push_back(' ');
    }
    if (tok == "-") {
      unary_minus = !have_prev || prev == "\n" || prev == "=" || prev == "(" || prev == "[" || prev == "+" ||
                    prev == "-" || prev == "*" || prev == "/";
    } else {
      unary_minus = false;
    }
    const std::size_t begin = out.text.size();
    out.text.append(tok);
    out.offsets.emplace_back(begin, out.text.size());
    prev = tok;
    have_prev = true;
  }
  return out;
}

}  // namespace mdlab
