#include "mdlab/experiment.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <set>

#include "mdlab/core/digest.hpp"
#include "mdlab/core/error.hpp"
#include "mdlab/core/rng.hpp"
#include "mdlab/core/tokenizer.hpp"
#include "mdlab/remote.hpp"

namespace mdlab {

namespace {

void check_fields(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError(where + "unknown field '" + key + "'");
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

}  // namespace

void ExperimentSpec::validate() const {
  if (corpus.empty()) throw ConfigError("corpus: path is required");
  if (strategies.empty()) throw ConfigError("strategies: at least one strategy is required");
  if (orders.empty()) throw ConfigError("orders: at least one order is required");
  if (grid.empty()) throw ConfigError("grid: at least one cell is required");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    RunConfig rc;
    rc.gen_length = grid[i].gen_length;
    rc.steps = grid[i].steps;
    rc.block_length = grid[i].block_length;
    try {
      rc.validate();
    } catch (const ConfigError& e) {
      throw ConfigError("grid[" + std::to_string(i) + "]: " + e.what());
    }
  }
  if (output_dir.empty()) throw ConfigError("output_dir: path is required");
  if (workers == 0) throw ConfigError("workers: must be at least 1");
  if (predictor.kind == PredictorChoice::Kind::remote) Endpoint::parse(predictor.endpoint);
  if (predictor.top_k < 2) throw ConfigError("predictor.top_k: must be at least 2");
  predictor.oracle.validate();
}

ExperimentSpec ExperimentSpec::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ConfigError("experiment spec must be a JSON object");
  check_fields(j, {"schema_version", "corpus", "strategies", "orders", "grid", "predictor", "output_dir", "seed",
                   "workers", "max_problems", "difficulties"},
               "");
  ExperimentSpec s;
  std::string field;
  try {
    field = "schema_version";
    if (j.value("schema_version", 1) != 1) throw ConfigError("schema_version: unsupported value");
    field = "corpus";
    s.corpus = resolve(base_dir, j.at("corpus").get<std::string>());
    field = "strategies";
    if (auto it = j.find("strategies"); it != j.end()) {
      for (const auto& v : *it) s.strategies.push_back(parse_strategy(v.get<std::string>()));
    } else {
      s.strategies.assign(kAllStrategies.begin(), kAllStrategies.end());
    }
    field = "orders";
    if (auto it = j.find("orders"); it != j.end()) {
      for (const auto& v : *it) s.orders.push_back(parse_order(v.get<std::string>()));
    } else {
      s.orders = {OutputOrder::cot_first, OutputOrder::answer_first};
    }
    field = "grid";
    if (auto it = j.find("grid"); it != j.end()) {
      for (const auto& c : *it) {
        check_fields(c, {"gen_length", "steps", "block_length"}, "grid: ");
        GridCell cell;
        cell.gen_length = c.at("gen_length").get<std::size_t>();
        cell.steps = c.value("steps", cell.gen_length);
        cell.block_length = c.value("block_length", cell.gen_length);
        s.grid.push_back(cell);
      }
    } else {
      s.grid.push_back(GridCell{});
    }
    field = "predictor";
    if (auto it = j.find("predictor"); it != j.end()) {
      check_fields(*it, {"kind", "params", "params_file", "endpoint", "top_k", "timeout_seconds"}, "predictor: ");
      const auto kind = it->value("kind", std::string("oracle"));
      if (kind == "oracle") {
        s.predictor.kind = PredictorChoice::Kind::oracle;
      } else if (kind == "remote") {
        s.predictor.kind = PredictorChoice::Kind::remote;
        s.predictor.endpoint = it->at("endpoint").get<std::string>();
      } else {
        throw ConfigError("predictor.kind: expected 'oracle' or 'remote'");
      }
      s.predictor.top_k = it->value("top_k", s.predictor.top_k);
      s.predictor.timeout_seconds = it->value("timeout_seconds", s.predictor.timeout_seconds);
      if (auto p = it->find("params_file"); p != it->end()) {
        const auto path = resolve(base_dir, p->get<std::string>());
        try {
          s.predictor.oracle = OracleParams::from_json(nlohmann::json::parse(read_file(path)));
        } catch (const nlohmann::json::exception& e) {
          throw ConfigError("predictor.params_file: " + std::string(e.what()));
        }
      }
      if (auto p = it->find("params"); p != it->end()) s.predictor.oracle = OracleParams::from_json(*p);
    }
    field = "output_dir";
    s.output_dir = resolve(base_dir, j.value("output_dir", std::string("out")));
    field = "seed";
    s.seed = j.value("seed", s.seed);
    field = "workers";
    s.workers = j.value("workers", s.workers);
    field = "max_problems";
    s.max_problems = j.value("max_problems", s.max_problems);
    field = "difficulties";
    if (auto it = j.find("difficulties"); it != j.end()) {
      for (const auto& v : *it) s.difficulties.push_back(parse_difficulty(v.get<std::string>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(field + ": " + e.what());
  } catch (const FormatError& e) {
    throw ConfigError(field + ": " + e.what());
  }
  s.validate();
  return s;
}

ExperimentSpec ExperimentSpec::load(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  return from_json(j, path.parent_path());
}

nlohmann::json ExperimentSpec::to_json() const {
  nlohmann::json strategies_j = nlohmann::json::array();
  for (const auto s : strategies) strategies_j.push_back(to_string(s));
  nlohmann::json orders_j = nlohmann::json::array();
  for (const auto o : orders) orders_j.push_back(to_string(o));
  nlohmann::json grid_j = nlohmann::json::array();
  for (const auto& c : grid) {
    grid_j.push_back({{"gen_length", c.gen_length}, {"steps", c.steps}, {"block_length", c.block_length}});
  }
  nlohmann::json pred = {{"kind", predictor.kind == PredictorChoice::Kind::oracle ? "oracle" : "remote"},
                         {"top_k", predictor.top_k},
                         {"timeout_seconds", predictor.timeout_seconds}};
  if (predictor.kind == PredictorChoice::Kind::oracle) {
    pred["params"] = predictor.oracle.to_json();
  } else {
    pred["endpoint"] = predictor.endpoint;
  }
  nlohmann::json diffs = nlohmann::json::array();
  for (const auto d : difficulties) diffs.push_back(to_string(d));
  return {{"schema_version", 1},  {"corpus", corpus.string()},   {"strategies", strategies_j},
          {"orders", orders_j},   {"grid", grid_j},              {"predictor", pred},
          {"output_dir", output_dir.string()}, {"seed", seed},   {"workers", workers},
          {"max_problems", max_problems}, {"difficulties", diffs}};
}

std::string run_id(const std::string& problem_id, Strategy strategy, OutputOrder order, const GridCell& cell) {
  return problem_id + "__" + std::string(to_string(strategy)) + "__" + std::string(to_string(order)) + "__L" +
         std::to_string(cell.gen_length) + "_T" + std::to_string(cell.steps) + "_B" +
         std::to_string(cell.block_length);
}

std::uint64_t oracle_seed(std::uint64_t experiment_seed, const std::string& problem_id) {
  return mix_seed(mix_seed(experiment_seed, hash_label("oracle")), hash_label(problem_id));
}

std::uint64_t run_seed(std::uint64_t experiment_seed, const std::string& id) {
  return mix_seed(mix_seed(experiment_seed, hash_label("run")), hash_label(id));
}

std::vector<PlannedRun> plan_runs(const ExperimentSpec& spec, const std::vector<Problem>& problems) {
  std::vector<PlannedRun> out;
  std::size_t taken = 0;
  for (const auto& p : problems) {
    if (!spec.difficulties.empty() &&
        std::find(spec.difficulties.begin(), spec.difficulties.end(), p.difficulty) == spec.difficulties.end()) {
      continue;
    }
    if (spec.max_problems && taken == spec.max_problems) break;
    ++taken;
    for (const auto& cell : spec.grid) {
      for (const auto order : spec.orders) {
        for (const auto strategy : spec.strategies) {
          out.push_back({run_id(p.id, strategy, order, cell), &p, strategy, order, cell});
        }
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const PlannedRun& a, const PlannedRun& b) { return a.run_id < b.run_id; });
  return out;
}

TraceFile execute_run(const PlannedRun& r, const ExperimentSpec& spec, const Vocabulary& vocab) {
  const Problem& p = *r.problem;
  TraceFile f;
  f.header.run_id = r.run_id;
  f.header.problem_id = p.id;
  f.header.difficulty = p.difficulty;
  f.header.gold_answer = p.gold_answer;
  f.header.gold_keys = p.keys();
  f.header.order = r.order;

  RunConfig rc;
  rc.gen_length = r.cell.gen_length;
  rc.steps = r.cell.steps;
  rc.block_length = r.cell.block_length;
  rc.strategy = r.strategy;
  rc.seed = run_seed(spec.seed, r.run_id);

  const auto prompt = tokenize(p.prompt(r.order), vocab);
  const auto layout = SegmentLayout::reason_order_qa(r.order);
  auto fail = [&](const std::string& message) {
    f.trace.config = rc;
    f.trace.prompt = prompt;
    f.trace.prompt_len = prompt.size();
    f.trace.final_tokens.assign(rc.gen_length, vocab.mask_id());
    f.trace.final_text = detokenize_text(f.trace.final_tokens, vocab, RenderMode::output);
    f.trace.layout = resolve_segments(f.trace.final_text, layout);
    f.trace.error = RunError{0, message};
    return f;
  };

  std::unique_ptr<PredictorSession> session;
  if (spec.predictor.kind == PredictorChoice::Kind::oracle) {
    f.header.oracle_seed = oracle_seed(spec.seed, p.id);
    f.header.predictor = "oracle";
    session = std::make_unique<OracleSession>(
        build_oracle_spec(p, r.order, rc.gen_length, vocab, spec.predictor.oracle, prompt.size(), f.header.oracle_seed));
  } else {
    f.header.predictor = spec.predictor.endpoint;
    try {
      RemotePredictor remote(Endpoint::parse(spec.predictor.endpoint), vocab, spec.predictor.top_k,
                             std::chrono::milliseconds(static_cast<long>(spec.predictor.timeout_seconds * 1000)));
      session = remote.open_session(prompt, prompt.size() + rc.gen_length);
    } catch (const ProtocolError& e) {
      return fail(e.what());
    }
  }
  f.trace = run(prompt, layout, rc, *session, vocab);
  return f;
}

RunSummary run_experiment(const ExperimentSpec& spec, Execution mode) {
  spec.validate();
  namespace fs = std::filesystem;
  const auto problems = read_corpus(spec.corpus);
  const Vocabulary vocab = build_corpus_vocabulary(problems);

  fs::create_directories(spec.output_dir / "traces");
  const fs::path vocab_path = spec.output_dir / "vocab.json";
  if (fs::exists(vocab_path)) {
    if (read_vocabulary(vocab_path).tokens() != vocab.tokens()) {
      throw ConfigError("output_dir: existing archive was built from a different corpus");
    }
  } else {
    write_vocabulary(vocab_path, vocab);
  }
  write_file_atomic(spec.output_dir / "experiment.json", spec.to_json().dump(2) + "\n");

  const auto plan = plan_runs(spec, problems);
  const fs::path manifest_path = spec.output_dir / "manifest.jsonl";
  std::set<std::string> done;
  for (const auto& e : load_manifest(manifest_path).latest()) {
    if (!e.ok) continue;
    const fs::path file = spec.output_dir / e.file;
    if (fs::exists(file) && sha256_file(file) == e.sha256) done.insert(e.run_id);
  }

  std::vector<const PlannedRun*> pending;
  for (const auto& r : plan) {
    if (!done.count(r.run_id)) pending.push_back(&r);
  }

  RunSummary summary;
  summary.planned = plan.size();
  summary.skipped = plan.size() - pending.size();
  ManifestWriter manifest(manifest_path);

  auto one = [&](const PlannedRun& r) {
    ManifestEntry entry;
    entry.run_id = r.run_id;
    entry.file = "traces/" + r.run_id + ".json";
    try {
      const TraceFile f = execute_run(r, spec, vocab);
      const std::string bytes = serialize_trace(f);
      write_file_atomic(spec.output_dir / entry.file, bytes);
      entry.sha256 = sha256_hex(bytes);
      entry.ok = !f.trace.error.has_value();
      if (f.trace.error) {
        entry.error = "step " + std::to_string(f.trace.error->step) + ": " + f.trace.error->message;
      }
    } catch (const std::exception& e) {
      entry.ok = false;
      entry.error = e.what();
    }
#pragma omp critical(mdlab_manifest)
    {
      manifest.append(entry);
      ++summary.executed;
      if (!entry.ok) {
        ++summary.failed;
        summary.failures.push_back(entry.run_id + ": " + entry.error);
      }
    }
  };

  const auto n = static_cast<std::ptrdiff_t>(pending.size());
  if (mode == Execution::serial) {
    for (std::ptrdiff_t i = 0; i < n; ++i) one(*pending[static_cast<std::size_t>(i)]);
  } else {
#pragma omp parallel for schedule(dynamic, 1) num_threads(static_cast<int>(spec.workers))
    for (std::ptrdiff_t i = 0; i < n; ++i) one(*pending[static_cast<std::size_t>(i)]);
  }
  std::sort(summary.failures.begin(), summary.failures.end());
  return summary;
}

}  // namespace mdlab
