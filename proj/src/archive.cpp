#include "mdlab/archive.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "mdlab/core/digest.hpp"
#include "mdlab/core/error.hpp"

namespace mdlab {

namespace {

nlohmann::json layout_to_json(const SegmentLayout& layout) {
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& s : layout.segments) {
    nlohmann::json span = s.span ? nlohmann::json::array({s.span->begin, s.span->end}) : nlohmann::json(nullptr);
    segs.push_back({{"label", to_string(s.label)}, {"delimiter", s.delimiter}, {"span", span}});
  }
  return {{"order", to_string(layout.order)}, {"segments", segs}, {"duplicate_delimiter", layout.duplicate_delimiter}};
}

SegmentLabel parse_label(const std::string& s) {
  if (s == "retrieval") return SegmentLabel::retrieval;
  if (s == "reasoning") return SegmentLabel::reasoning;
  if (s == "answer") return SegmentLabel::answer;
  throw FormatError("unknown segment label '" + s + "'");
}

SegmentLayout layout_from_json(const nlohmann::json& j) {
  SegmentLayout l;
  l.order = parse_order(j.at("order").get<std::string>());
  l.duplicate_delimiter = j.at("duplicate_delimiter").get<bool>();
  for (const auto& s : j.at("segments")) {
    Segment seg{parse_label(s.at("label")), s.at("delimiter").get<std::string>(), std::nullopt};
    if (!s.at("span").is_null()) seg.span = TextSpan{s["span"].at(0).get<std::size_t>(), s["span"].at(1).get<std::size_t>()};
    l.segments.push_back(std::move(seg));
  }
  return l;
}

}  // namespace

nlohmann::json trace_to_json(const TraceFile& f) {
  const TraceHeader& h = f.header;
  const RunTrace& t = f.trace;
  nlohmann::json header = {{"run_id", h.run_id},
                           {"problem_id", h.problem_id},
                           {"difficulty", to_string(h.difficulty)},
                           {"gold_answer", h.gold_answer},
                           {"gold_keys", h.gold_keys},
                           {"order", to_string(h.order)},
                           {"strategy", to_string(t.config.strategy)},
                           {"cell", {{"gen_length", t.config.gen_length},
                                     {"steps", t.config.steps},
                                     {"block_length", t.config.block_length}}},
                           {"seeds", {{"run", t.config.seed}, {"oracle", h.oracle_seed}}},
                           {"predictor", h.predictor}};
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& rec : t.steps) {
    nlohmann::json scores = nlohmann::json::array();
    for (const auto& s : rec.scores) scores.push_back({s.position, s.conf, s.margin, s.entropy});
    nlohmann::json chosen = nlohmann::json::array();
    for (const auto& [pos, tok] : rec.decision.committed) chosen.push_back({pos, tok});
    steps.push_back({{"t", rec.step}, {"scores", scores}, {"argmax", rec.snapshot}, {"chosen", chosen}});
  }
  nlohmann::json body = {{"prompt", t.prompt},
                         {"prompt_len", t.prompt_len},
                         {"steps", steps},
                         {"final_tokens", t.final_tokens},
                         {"final_text", t.final_text},
                         {"layout", layout_to_json(t.layout)},
                         {"error", t.error ? nlohmann::json{{"step", t.error->step}, {"message", t.error->message}}
                                           : nlohmann::json(nullptr)}};
  return {{"schema", "mdlab-trace"}, {"schema_version", kTraceSchemaVersion}, {"header", header}, {"trace", body}};
}

TraceFile trace_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema").get<std::string>() != "mdlab-trace") throw FormatError("not a trace file");
    if (j.at("schema_version").get<int>() != kTraceSchemaVersion) {
      throw FormatError("unsupported trace schema_version " + j.at("schema_version").dump());
    }
    TraceFile f;
    const auto& h = j.at("header");
    f.header.run_id = h.at("run_id").get<std::string>();
    f.header.problem_id = h.at("problem_id").get<std::string>();
    f.header.difficulty = parse_difficulty(h.at("difficulty").get<std::string>());
    f.header.gold_answer = h.at("gold_answer").get<std::int64_t>();
    f.header.gold_keys = h.at("gold_keys").get<std::vector<std::int64_t>>();
    f.header.order = parse_order(h.at("order").get<std::string>());
    f.header.oracle_seed = h.at("seeds").at("oracle").get<std::uint64_t>();
    f.header.predictor = h.at("predictor").get<std::string>();

    RunTrace& t = f.trace;
    t.config.strategy = parse_strategy(h.at("strategy").get<std::string>());
    t.config.gen_length = h.at("cell").at("gen_length").get<std::size_t>();
    t.config.steps = h.at("cell").at("steps").get<std::size_t>();
    t.config.block_length = h.at("cell").at("block_length").get<std::size_t>();
    t.config.seed = h.at("seeds").at("run").get<std::uint64_t>();

    const auto& b = j.at("trace");
    t.prompt = b.at("prompt").get<std::vector<TokenId>>();
    t.prompt_len = b.at("prompt_len").get<std::size_t>();
    for (const auto& s : b.at("steps")) {
      StepRecord rec;
      rec.step = s.at("t").get<std::size_t>();
      rec.snapshot = s.at("argmax").get<std::vector<TokenId>>();
      for (const auto& sc : s.at("scores")) {
        PositionScore ps;
        ps.position = sc.at(0).get<std::size_t>();
        ps.conf = sc.at(1).get<double>();
        ps.margin = sc.at(2).get<double>();
        ps.entropy = sc.at(3).get<double>();
        if (ps.position < t.prompt_len || ps.position - t.prompt_len >= rec.snapshot.size()) {
          throw FormatError("score position outside the generation region");
        }
        ps.argmax = rec.snapshot[ps.position - t.prompt_len];
        rec.scores.push_back(ps);
      }
      rec.decision.step = rec.step;
      for (const auto& c : s.at("chosen")) {
        const auto pos = c.at(0).get<std::size_t>();
        rec.decision.chosen.push_back(pos);
        rec.decision.committed.emplace_back(pos, c.at(1).get<TokenId>());
      }
      t.steps.push_back(std::move(rec));
    }
    t.final_tokens = b.at("final_tokens").get<std::vector<TokenId>>();
    t.final_text = b.at("final_text").get<std::string>();
    t.layout = layout_from_json(b.at("layout"));
    if (!b.at("error").is_null()) {
      t.error = RunError{b["error"].at("step").get<std::size_t>(), b["error"].at("message").get<std::string>()};
    }
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed trace: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("malformed trace: ") + e.what());
  }
}

std::string serialize_trace(const TraceFile& file) { return trace_to_json(file).dump() + "\n"; }

void write_trace_file(const std::filesystem::path& path, const TraceFile& file) {
  write_file_atomic(path, serialize_trace(file));
}

TraceFile read_trace_file(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  try {
    return trace_from_json(j);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab) {
  nlohmann::json j = {{"schema", "mdlab-vocab"},
                      {"schema_version", 1},
                      {"mask_id", vocab.mask_id()},
                      {"tokens", vocab.tokens()}};
  write_file_atomic(path, j.dump() + "\n");
}

Vocabulary read_vocabulary(const std::filesystem::path& path) {
  try {
    const auto j = nlohmann::json::parse(read_file(path));
    if (j.at("schema").get<std::string>() != "mdlab-vocab" || j.at("schema_version").get<int>() != 1) {
      throw FormatError(path.string() + ": not a version 1 vocabulary file");
    }
    return Vocabulary(j.at("tokens").get<std::vector<std::string>>(), j.at("mask_id").get<TokenId>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<ManifestEntry> Manifest::latest() const {
  std::map<std::string, ManifestEntry> by_id;
  for (const auto& e : entries) by_id[e.run_id] = e;
  std::vector<ManifestEntry> out;
  out.reserve(by_id.size());
  for (auto& [_, e] : by_id) out.push_back(std::move(e));
  return out;
}

Manifest load_manifest(const std::filesystem::path& path) {
  Manifest m;
  if (!std::filesystem::exists(path)) return m;
  const std::string bytes = read_file(path);
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < bytes.size()) {
    const auto nl = bytes.find('\n', start);
    if (nl == std::string::npos) {
      m.truncated_tail = true;  // unterminated line: a write was interrupted
      break;
    }
    lines.push_back(bytes.substr(start, nl - start));
    start = nl + 1;
  }
  if (lines.empty()) return m;
  try {
    const auto h = nlohmann::json::parse(lines[0]);
    if (h.at("schema").get<std::string>() != "mdlab-manifest" ||
        h.at("schema_version").get<int>() != kManifestSchemaVersion) {
      throw FormatError(path.string() + ": unsupported manifest header");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad manifest header: " + e.what());
  }
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    try {
      const auto j = nlohmann::json::parse(lines[i]);
      ManifestEntry e;
      e.run_id = j.at("run_id").get<std::string>();
      e.file = j.at("file").get<std::string>();
      e.sha256 = j.at("sha256").get<std::string>();
      const auto status = j.at("status").get<std::string>();
      if (status != "ok" && status != "failed") throw FormatError("bad status");
      e.ok = status == "ok";
      e.error = j.value("error", "");
      m.entries.push_back(std::move(e));
    } catch (const std::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(i + 1) + ": malformed manifest entry: " + e.what());
    }
  }
  return m;
}

ManifestWriter::ManifestWriter(const std::filesystem::path& path) {
  bool need_header = true;
  if (std::filesystem::exists(path)) {
    std::string bytes = read_file(path);
    const auto last_nl = bytes.rfind('\n');
    const std::size_t keep = last_nl == std::string::npos ? 0 : last_nl + 1;
    if (keep != bytes.size()) std::filesystem::resize_file(path, keep);
    need_header = keep == 0;
  }
  out_.open(path, std::ios::binary | std::ios::app);
  if (!out_) throw FormatError("cannot open manifest " + path.string());
  if (need_header) {
    out_ << nlohmann::json{{"schema", "mdlab-manifest"}, {"schema_version", kManifestSchemaVersion}}.dump() << '\n';
    out_.flush();
  }
}

void ManifestWriter::append(const ManifestEntry& e) {
  nlohmann::json j = {{"run_id", e.run_id},
                      {"file", e.file},
                      {"sha256", e.sha256},
                      {"status", e.ok ? "ok" : "failed"},
                      {"error", e.error}};
  out_ << j.dump() << '\n';
  out_.flush();
  if (!out_) throw FormatError("manifest write failed");
}

}  // namespace mdlab
