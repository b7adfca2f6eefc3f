#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "mdlab/core/segments.hpp"
#include "mdlab/core/vocabulary.hpp"

namespace mdlab {

enum class Difficulty { D1 = 0, D2 = 1, D3 = 2, D4 = 3 };

inline constexpr std::array<Difficulty, 4> kAllDifficulties = {Difficulty::D1, Difficulty::D2,
                                                               Difficulty::D3, Difficulty::D4};

std::string_view to_string(Difficulty d);
// Throws ConfigError.
Difficulty parse_difficulty(std::string_view name);

// Formula template with variable names, e.g. "(X + Y) * Z".
std::string_view formula(Difficulty d);
// Inclusive value range for the level's variables.
std::pair<std::int64_t, std::int64_t> variable_range(Difficulty d);
// Variable names in formula order: X, Y, Z and for D4 also W.
std::vector<std::string> variable_names(Difficulty d);
// Evaluates the level's formula on values given in variable_names order.
std::int64_t compute_answer(Difficulty d, const std::vector<std::int64_t>& values);

struct Variable {
  std::string name;
  std::int64_t value = 0;
};

struct KeySentence {
  std::string variable;
  std::int64_t value = 0;
  std::string sentence;
  std::size_t index = 0;  // sentence index within the passage
};

struct Problem {
  std::string id;
  Difficulty difficulty = Difficulty::D1;
  std::vector<Variable> variables;
  std::string expression;  // formula with the values substituted
  std::int64_t gold_answer = 0;
  std::string passage;
  std::vector<KeySentence> key_sentences;
  std::string question;
  std::string prompt_cot_first;
  std::string prompt_answer_first;

  std::vector<std::int64_t> keys() const;
  const std::string& prompt(OutputOrder order) const {
    return order == OutputOrder::cot_first ? prompt_cot_first : prompt_answer_first;
  }
};

struct GeneratorConfig {
  std::size_t n_problems = 1000;
  std::array<double, 4> difficulty_weights = {0.25, 0.40, 0.25, 0.10};
  std::size_t passage_target_tokens = 1000;
  std::uint64_t seed = 0;
  // Empty lists select the built-in pool and fragment words.
  std::vector<std::string> distractor_pool;
  std::vector<std::string> fragment_words;

  // Throws ConfigError naming the offending field.
  void validate() const;
  // Relative pool/fragment file paths resolve against base_dir.
  static GeneratorConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  nlohmann::json to_json() const;
};

const std::vector<std::string>& default_distractor_pool();
const std::vector<std::string>& default_fragment_words();

// Throws ConfigError when the passage target cannot hold the key sentences.
std::vector<Problem> generate(const GeneratorConfig& config);

// The structured-output task block for the given order.
std::string_view task_block(OutputOrder order);
// Chain-of-thought templates for free-form questions with a boxed answer.
std::string_view generic_task_block(OutputOrder order);

// (cot_first, answer_first) prompt strings.
std::pair<std::string, std::string> render_prompts(const Problem& p);

// Arithmetic lines of the worked solution, joined by '\n'.
std::string reasoning_lines(const Problem& p);
// The well-formed completion for the given order, without padding.
std::string reference_response(const Problem& p, OutputOrder order);
// Reference completion tokenized and padded with <eos> to gen_length.
// Throws ConfigError when it does not fit.
std::vector<TokenId> reference_tokens(const Problem& p, OutputOrder order, std::size_t gen_length,
                                      const Vocabulary& vocab);

// Every token that prompts, reference completions and plausible model
// outputs over this corpus can contain.
Vocabulary build_corpus_vocabulary(const std::vector<Problem>& problems);

nlohmann::json problem_to_json(const Problem& p);
Problem problem_from_json(const nlohmann::json& j);

inline constexpr int kCorpusSchemaVersion = 1;

// Writes a header line followed by one problem per line.
void write_corpus(const std::filesystem::path& path, const std::vector<Problem>& problems,
                  const GeneratorConfig& config);
// Throws FormatError on schema mismatch or malformed records.
std::vector<Problem> read_corpus(const std::filesystem::path& path);

struct CorpusReport {
  std::size_t n_problems = 0;
  std::array<std::size_t, 4> counts{};
  std::array<double, 4> proportions{};
  std::string sha256;

  nlohmann::json to_json() const;
};

CorpusReport corpus_report(const std::vector<Problem>& problems, const std::filesystem::path& corpus);

}  // namespace mdlab
