#include "mdlab/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "mdlab/core/digest.hpp"
#include "mdlab/core/error.hpp"
#include "mdlab/core/rng.hpp"
#include "mdlab/core/tokenizer.hpp"

namespace mdlab {

namespace data {
extern const std::string_view kDistractorSentences;
extern const std::string_view kFragmentWords;
}  // namespace data

namespace {

constexpr std::int64_t kFillerNumberLo = 200;
constexpr std::int64_t kFillerNumberHi = 999;

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    const auto first = line.find_first_not_of(' ');
    if (first == std::string::npos || line[first] == '#') continue;
    out.push_back(line.substr(first));
  }
  return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return split_lines(ss.str());
}

std::string capitalize(std::string word) {
  if (!word.empty() && word[0] >= 'a' && word[0] <= 'z') word[0] = static_cast<char>(word[0] - 'a' + 'A');
  return word;
}

std::string key_sentence(const std::string& name, std::int64_t value) {
  return "The secret key " + name + " is " + std::to_string(value) + ".";
}

std::string filler_sentence(Rng& rng, const std::vector<std::string>& pool,
                            const std::vector<std::string>& words) {
  std::string s = pool[rng.uniform_below(pool.size())];
  for (auto at = s.find("{n}"); at != std::string::npos; at = s.find("{n}")) {
    s.replace(at, 3, std::to_string(rng.uniform_int(kFillerNumberLo, kFillerNumberHi)));
  }
  if (rng.bernoulli(0.5)) {
    const auto extra = rng.uniform_int(3, 8);
    std::string tail;
    for (std::int64_t i = 0; i < extra; ++i) tail += " " + words[rng.uniform_below(words.size())];
    if (!s.empty() && (s.back() == '.' || s.back() == '!' || s.back() == '?')) {
      const char end = s.back();
      s.pop_back();
      s += tail;
      s.push_back(end);
    } else {
      s += tail + ".";
    }
  }
  return s;
}

// A sentence of exactly n tokens made of fragment words.
std::string fragment_sentence(Rng& rng, const std::vector<std::string>& words, std::size_t n) {
  std::string s;
  const std::size_t n_words = n == 1 ? 1 : n - 1;
  for (std::size_t i = 0; i < n_words; ++i) {
    std::string w = words[rng.uniform_below(words.size())];
    if (i == 0) {
      s = capitalize(w);
    } else {
      s += " " + w;
    }
  }
  if (n > 1) s += ".";
  return s;
}

std::string question_text(Difficulty d) {
  const auto names = variable_names(d);
  std::string list;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i > 0) list += i + 1 == names.size() ? " and " : ", ";
    list += names[i];
  }
  return "Find the secret keys " + list + " hidden in the passage and compute " + std::string(formula(d)) + ".";
}

std::string substitute(Difficulty d, const std::vector<Variable>& vars) {
  std::string out;
  for (const char c : formula(d)) {
    auto it = std::find_if(vars.begin(), vars.end(), [c](const Variable& v) { return v.name.size() == 1 && v.name[0] == c; });
    if (it != vars.end()) {
      out += std::to_string(it->value);
    } else {
      out.push_back(c);
    }
  }
  return out;
}

Problem make_problem(std::size_t index, const GeneratorConfig& cfg, const std::vector<std::string>& pool,
                     const std::vector<std::string>& words) {
  Rng rng(mix_seed(cfg.seed, index));
  Problem p;
  p.id = [&] {
    char buf[32];
    std::snprintf(buf, sizeof buf, "p%04zu", index + 1);
    return std::string(buf);
  }();

  const double u = rng.uniform01();
  double acc = 0.0;
  p.difficulty = Difficulty::D4;
  for (std::size_t k = 0; k < 4; ++k) {
    acc += cfg.difficulty_weights[k];
    if (u < acc) {
      p.difficulty = static_cast<Difficulty>(k);
      break;
    }
  }

  const auto [lo, hi] = variable_range(p.difficulty);
  std::vector<std::int64_t> values;
  for (const auto& name : variable_names(p.difficulty)) {
    values.push_back(rng.uniform_int(lo, hi));
    p.variables.push_back({name, values.back()});
  }
  p.gold_answer = compute_answer(p.difficulty, values);
  p.expression = substitute(p.difficulty, p.variables);

  std::size_t key_tokens = 0;
  std::vector<std::string> keys;
  for (const auto& v : p.variables) {
    keys.push_back(key_sentence(v.name, v.value));
    key_tokens += count_tokens(keys.back());
  }
  if (cfg.passage_target_tokens < key_tokens) {
    throw ConfigError("passage_target_tokens is smaller than the key sentences (" +
                      std::to_string(key_tokens) + " tokens)");
  }

  std::vector<std::string> filler;
  std::vector<std::size_t> filler_len;
  std::size_t remaining = cfg.passage_target_tokens - key_tokens;
  while (true) {
    std::string s = filler_sentence(rng, pool, words);
    const std::size_t n = count_tokens(s);
    if (n > remaining) break;
    remaining -= n;
    filler.push_back(std::move(s));
    filler_len.push_back(n);
  }
  if (remaining == 1 && !filler.empty()) {
    remaining += filler_len.back();
    filler.pop_back();
    filler_len.pop_back();
  }
  if (remaining > 0) filler.push_back(fragment_sentence(rng, words, remaining));

  // Insert key sentences at random slots; track where each lands.
  std::vector<std::pair<std::string, int>> sentences;
  for (auto& s : filler) sentences.emplace_back(std::move(s), -1);
  for (std::size_t k = 0; k < keys.size(); ++k) {
    const auto slot = rng.uniform_below(sentences.size() + 1);
    sentences.insert(sentences.begin() + static_cast<std::ptrdiff_t>(slot), {keys[k], static_cast<int>(k)});
  }
  p.key_sentences.resize(keys.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (i > 0) p.passage.push_back(' ');
    p.passage += sentences[i].first;
    if (sentences[i].second >= 0) {
      const auto k = static_cast<std::size_t>(sentences[i].second);
      p.key_sentences[k] = {p.variables[k].name, p.variables[k].value, keys[k], i};
    }
  }

  p.question = question_text(p.difficulty);
  std::tie(p.prompt_cot_first, p.prompt_answer_first) = render_prompts(p);
  return p;
}

const std::array<std::string_view, 4> kDifficultyNames = {"D1", "D2", "D3", "D4"};

}  // namespace

std::string_view to_string(Difficulty d) { return kDifficultyNames[static_cast<std::size_t>(d)]; }

Difficulty parse_difficulty(std::string_view name) {
  for (const Difficulty d : kAllDifficulties) {
    if (to_string(d) == name) return d;
  }
  throw ConfigError("unknown difficulty '" + std::string(name) + "'");
}

std::string_view formula(Difficulty d) {
  switch (d) {
    case Difficulty::D1: return "X + Y + Z";
    case Difficulty::D2: return "X + Y - Z";
    case Difficulty::D3: return "(X + Y) * Z";
    case Difficulty::D4: return "(X - Y * Z) * W";
  }
  return "";
}

std::pair<std::int64_t, std::int64_t> variable_range(Difficulty d) {
  switch (d) {
    case Difficulty::D1: return {1, 20};
    case Difficulty::D2: return {1, 50};
    default: return {1, 100};
  }
}

std::vector<std::string> variable_names(Difficulty d) {
  if (d == Difficulty::D4) return {"X", "Y", "Z", "W"};
  return {"X", "Y", "Z"};
}

std::int64_t compute_answer(Difficulty d, const std::vector<std::int64_t>& v) {
  if (v.size() != variable_names(d).size()) throw ConfigError("wrong number of variable values");
  switch (d) {
    case Difficulty::D1: return v[0] + v[1] + v[2];
    case Difficulty::D2: return v[0] + v[1] - v[2];
    case Difficulty::D3: return (v[0] + v[1]) * v[2];
    case Difficulty::D4: return (v[0] - v[1] * v[2]) * v[3];
  }
  return 0;
}

std::vector<std::int64_t> Problem::keys() const {
  std::vector<std::int64_t> out;
  for (const auto& v : variables) out.push_back(v.value);
  return out;
}

void GeneratorConfig::validate() const {
  double sum = 0.0;
  for (const double w : difficulty_weights) {
    if (!(w >= 0.0)) throw ConfigError("difficulty_weights: weights must be non-negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw ConfigError("difficulty_weights: weights must sum to 1");
  if (passage_target_tokens == 0) throw ConfigError("passage_target_tokens: must be positive");
}

GeneratorConfig GeneratorConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ConfigError("generator config must be a JSON object");
  GeneratorConfig cfg;
  static const std::set<std::string> known = {"schema_version", "n_problems", "difficulty_weights",
                                              "passage_target_tokens", "seed", "distractor_pool_file",
                                              "fragment_words_file", "output"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown field '" + key + "'");
  }
  auto field = [&](const char* name) -> const nlohmann::json* {
    auto it = j.find(name);
    return it == j.end() ? nullptr : &*it;
  };
  try {
    if (auto* v = field("schema_version"); v && v->get<int>() != 1) {
      throw ConfigError("schema_version: unsupported value " + v->dump());
    }
    if (auto* v = field("n_problems")) cfg.n_problems = v->get<std::size_t>();
    if (auto* v = field("passage_target_tokens")) cfg.passage_target_tokens = v->get<std::size_t>();
    if (auto* v = field("seed")) cfg.seed = v->get<std::uint64_t>();
    if (auto* v = field("difficulty_weights")) {
      if (v->is_array()) {
        if (v->size() != 4) throw ConfigError("difficulty_weights: expected 4 values");
        for (std::size_t k = 0; k < 4; ++k) cfg.difficulty_weights[k] = (*v)[k].get<double>();
      } else {
        cfg.difficulty_weights = {0, 0, 0, 0};
        for (const auto& [name, w] : v->items()) {
          cfg.difficulty_weights[static_cast<std::size_t>(parse_difficulty(name))] = w.get<double>();
        }
      }
    }
    auto resolve = [&](const std::string& p) {
      std::filesystem::path path(p);
      return path.is_relative() ? base_dir / path : path;
    };
    if (auto* v = field("distractor_pool_file")) cfg.distractor_pool = read_lines(resolve(v->get<std::string>()));
    if (auto* v = field("fragment_words_file")) cfg.fragment_words = read_lines(resolve(v->get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("generator config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::json GeneratorConfig::to_json() const {
  return {{"schema_version", 1},
          {"n_problems", n_problems},
          {"difficulty_weights", difficulty_weights},
          {"passage_target_tokens", passage_target_tokens},
          {"seed", seed},
          {"custom_distractor_pool", !distractor_pool.empty()},
          {"custom_fragment_words", !fragment_words.empty()}};
}

const std::vector<std::string>& default_distractor_pool() {
  static const std::vector<std::string> pool = split_lines(data::kDistractorSentences);
  return pool;
}

const std::vector<std::string>& default_fragment_words() {
  static const std::vector<std::string> words = split_lines(data::kFragmentWords);
  return words;
}

std::vector<Problem> generate(const GeneratorConfig& config) {
  config.validate();
  const auto& pool = config.distractor_pool.empty() ? default_distractor_pool() : config.distractor_pool;
  const auto& words = config.fragment_words.empty() ? default_fragment_words() : config.fragment_words;
  if (pool.empty()) throw ConfigError("distractor pool is empty");
  if (words.empty()) throw ConfigError("fragment word list is empty");
  for (const auto& s : pool) {
    for (const auto& tok : split_tokens(s)) {
      if (std::isdigit(static_cast<unsigned char>(tok[0]))) {
        throw ConfigError("distractor sentences may only carry numbers through {n}: '" + s + "'");
      }
    }
  }

  std::vector<Problem> problems(config.n_problems);
  std::string failure;
#pragma omp parallel for schedule(dynamic, 16)
  for (std::size_t i = 0; i < config.n_problems; ++i) {
    try {
      problems[i] = make_problem(i, config, pool, words);
    } catch (const std::exception& e) {
#pragma omp critical(mdlab_generate_error)
      if (failure.empty()) failure = e.what();
    }
  }
  if (!failure.empty()) throw ConfigError(failure);
  return problems;
}

std::string_view task_block(OutputOrder order) {
  if (order == OutputOrder::cot_first) {
    return "### YOUR TASK\n\nYou MUST output your answer in the following exact structure:\n\n"
           "Retrieval:\n(list all secret key numbers you found)\n\n"
           "Reasoning:\n(explain how you combined the numbers to obtain the final result)\n\n"
           "Answer:\n(the final num ONLY, no extra text)";
  }
  return "### YOUR TASK\n\nYou MUST output your answer in the following exact structure:\n\n"
         "Answer:\n(the final num ONLY, no extra text)\n\n"
         "Reasoning:\n(explain how you combined the numbers to obtain the final result)\n\n"
         "Retrieval:\n(list all secret key numbers you found)";
}

std::string_view generic_task_block(OutputOrder order) {
  if (order == OutputOrder::cot_first) {
    return "Explain the solution with a careful chain-of-thought before giving the final numeric result, "
           "and report the final answer inside \\boxed{}.\n"
           "You MUST output your answer in the following exact structure:\n\n"
           "Reasoning:\n(explain how you combined the numbers to obtain the final result)\n\n"
           "Answer:\\boxed{number}";
  }
  return "Begin by stating the final numeric answer inside \\boxed{} before giving the detailed "
         "chain-of-thought explanation.\n"
         "You MUST start the response with the literal text \"Answer:\" on its own line (no text before it).\n"
         "Immediately after the heading, output the numeric answer wrapped in \\boxed{}.\n"
         "Then leave a blank line and provide the reasoning under a \"Reasoning:\" heading.\n\n"
         "Answer:\n\\boxed{number}\n\n"
         "Reasoning:\n(explain how you combined the numbers to obtain the final result)";
}

std::pair<std::string, std::string> render_prompts(const Problem& p) {
  const std::string head = p.passage + "\n\n" + p.question + "\n\n";
  return {head + std::string(task_block(OutputOrder::cot_first)),
          head + std::string(task_block(OutputOrder::answer_first))};
}

std::string reasoning_lines(const Problem& p) {
  const auto k = p.keys();
  auto s = [](std::int64_t v) { return std::to_string(v); };
  switch (p.difficulty) {
    case Difficulty::D1:
      return s(k[0]) + " + " + s(k[1]) + " + " + s(k[2]) + " = " + s(p.gold_answer);
    case Difficulty::D2:
      return s(k[0]) + " + " + s(k[1]) + " - " + s(k[2]) + " = " + s(p.gold_answer);
    case Difficulty::D3: {
      const auto sum = k[0] + k[1];
      return s(k[0]) + " + " + s(k[1]) + " = " + s(sum) + "\n" + s(sum) + " * " + s(k[2]) + " = " + s(p.gold_answer);
    }
    case Difficulty::D4: {
      const auto prod = k[1] * k[2];
      const auto diff = k[0] - prod;
      return s(k[1]) + " * " + s(k[2]) + " = " + s(prod) + "\n" + s(k[0]) + " - " + s(prod) + " = " + s(diff) +
             "\n" + s(diff) + " * " + s(k[3]) + " = " + s(p.gold_answer);
    }
  }
  return "";
}

std::string reference_response(const Problem& p, OutputOrder order) {
  std::string keys;
  for (const auto v : p.keys()) {
    if (!keys.empty()) keys.push_back(' ');
    keys += std::to_string(v);
  }
  const std::string retrieval = "Retrieval:\n" + keys;
  const std::string reasoning = "Reasoning:\n" + reasoning_lines(p);
  const std::string answer = "Answer:\n" + std::to_string(p.gold_answer);
  if (order == OutputOrder::cot_first) return retrieval + "\n\n" + reasoning + "\n\n" + answer;
  return answer + "\n\n" + reasoning + "\n\n" + retrieval;
}

std::vector<TokenId> reference_tokens(const Problem& p, OutputOrder order, std::size_t gen_length,
                                      const Vocabulary& vocab) {
  auto ids = tokenize(reference_response(p, order), vocab);
  if (ids.size() > gen_length) {
    throw ConfigError("reference completion of " + p.id + " needs " + std::to_string(ids.size()) +
                      " tokens but gen_length is " + std::to_string(gen_length));
  }
  if (!vocab.eos_id()) throw ConfigError("vocabulary has no <eos> token for padding");
  ids.resize(gen_length, *vocab.eos_id());
  return ids;
}

Vocabulary build_corpus_vocabulary(const std::vector<Problem>& problems) {
  std::set<std::string> tokens;
  auto add = [&](std::string_view text) {
    for (auto& t : split_tokens(text)) tokens.insert(std::move(t));
  };
  for (int n = 0; n <= 999; ++n) tokens.insert(std::to_string(n));
  for (const char* op : {"+", "-", "*", "=", "\n", "(", ")"}) tokens.insert(op);
  for (const OutputOrder o : {OutputOrder::cot_first, OutputOrder::answer_first}) {
    add(task_block(o));
    add(generic_task_block(o));
  }
  for (const auto& w : default_fragment_words()) add(w);
  for (const auto& p : problems) {
    add(p.prompt_cot_first);
    add(p.prompt_answer_first);
    add(reference_response(p, OutputOrder::cot_first));
  }
  return Vocabulary::build({tokens.begin(), tokens.end()});
}

nlohmann::json problem_to_json(const Problem& p) {
  nlohmann::json vars = nlohmann::json::array();
  for (const auto& v : p.variables) vars.push_back({{"name", v.name}, {"value", v.value}});
  nlohmann::json keys = nlohmann::json::array();
  for (const auto& k : p.key_sentences) {
    keys.push_back({{"variable", k.variable}, {"value", k.value}, {"sentence", k.sentence}, {"index", k.index}});
  }
  return {{"id", p.id},
          {"difficulty", to_string(p.difficulty)},
          {"variables", vars},
          {"expression", p.expression},
          {"gold_answer", p.gold_answer},
          {"passage", p.passage},
          {"key_sentences", keys},
          {"question", p.question},
          {"prompts", {{"cot_first", p.prompt_cot_first}, {"answer_first", p.prompt_answer_first}}}};
}

Problem problem_from_json(const nlohmann::json& j) {
  try {
    Problem p;
    p.id = j.at("id").get<std::string>();
    p.difficulty = parse_difficulty(j.at("difficulty").get<std::string>());
    for (const auto& v : j.at("variables")) p.variables.push_back({v.at("name"), v.at("value")});
    p.expression = j.at("expression").get<std::string>();
    p.gold_answer = j.at("gold_answer").get<std::int64_t>();
    p.passage = j.at("passage").get<std::string>();
    for (const auto& k : j.at("key_sentences")) {
      p.key_sentences.push_back({k.at("variable"), k.at("value"), k.at("sentence"), k.at("index")});
    }
    p.question = j.at("question").get<std::string>();
    p.prompt_cot_first = j.at("prompts").at("cot_first").get<std::string>();
    p.prompt_answer_first = j.at("prompts").at("answer_first").get<std::string>();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed problem record: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("malformed problem record: ") + e.what());
  }
}

void write_corpus(const std::filesystem::path& path, const std::vector<Problem>& problems,
                  const GeneratorConfig& config) {
  std::string out;
  nlohmann::json header = {{"schema", "mdlab-corpus"},
                           {"schema_version", kCorpusSchemaVersion},
                           {"count", problems.size()},
                           {"generator", config.to_json()}};
  out += header.dump() + "\n";
  for (const auto& p : problems) out += problem_to_json(p).dump() + "\n";
  write_file_atomic(path, out);
}

std::vector<Problem> read_corpus(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty corpus file (missing header)");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": unreadable header: " + e.what());
  }
  if (header.value("schema", "") != "mdlab-corpus") throw FormatError(path.string() + ": not a corpus file");
  if (header.value("schema_version", 0) != kCorpusSchemaVersion) {
    throw FormatError(path.string() + ": unsupported corpus schema_version");
  }
  std::vector<Problem> problems;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      problems.push_back(problem_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (header.contains("count") && header["count"].get<std::size_t>() != problems.size()) {
    throw FormatError(path.string() + ": header count does not match records");
  }
  return problems;
}

nlohmann::json CorpusReport::to_json() const {
  nlohmann::json counts_j, props_j;
  for (const Difficulty d : kAllDifficulties) {
    counts_j[std::string(to_string(d))] = counts[static_cast<std::size_t>(d)];
    props_j[std::string(to_string(d))] = proportions[static_cast<std::size_t>(d)];
  }
  return {{"schema", "mdlab-corpus-report"},
          {"schema_version", 1},
          {"n_problems", n_problems},
          {"counts", counts_j},
          {"proportions", props_j},
          {"sha256", sha256}};
}

CorpusReport corpus_report(const std::vector<Problem>& problems, const std::filesystem::path& corpus) {
  CorpusReport r;
  r.n_problems = problems.size();
  for (const auto& p : problems) ++r.counts[static_cast<std::size_t>(p.difficulty)];
  for (std::size_t k = 0; k < 4; ++k) {
    r.proportions[k] = problems.empty() ? 0.0 : static_cast<double>(r.counts[k]) / static_cast<double>(problems.size());
  }
  r.sha256 = sha256_file(corpus);
  return r;
}

}  // namespace mdlab
