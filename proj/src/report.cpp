#include "mdlab/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mdlab/core/digest.hpp"
#include "mdlab/core/error.hpp"

namespace mdlab {

std::optional<double> relative_drop(double cot, double af) {
  if (cot == 0.0) return std::nullopt;
  return (af - cot) / cot;
}

std::string format_relative_drop(std::optional<double> drop) {
  if (!drop) return "NA";
  double pct = std::round(*drop * 1000.0) / 10.0;
  if (pct == 0.0) pct = 0.0;  // no "-0.0%"
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", pct);
  return buf;
}

std::string cell_label(std::size_t gen_length, std::size_t steps, std::size_t block_length) {
  return "L" + std::to_string(gen_length) + "_T" + std::to_string(steps) + "_B" + std::to_string(block_length);
}

RunMetrics compute_run_metrics(const TraceFile& file, const Vocabulary& vocab) {
  const RunTrace& t = file.trace;
  RunMetrics m;
  m.run_id = file.header.run_id;
  m.problem_id = file.header.problem_id;
  m.difficulty = file.header.difficulty;
  m.strategy = t.config.strategy;
  m.order = file.header.order;
  m.gen_length = t.config.gen_length;
  m.steps = t.config.steps;
  m.block_length = t.config.block_length;
  m.retrieval = retrieval_f1(t.final_text, file.header.gold_keys, t.layout);
  m.answer = reasoning_accuracy(t.final_text, file.header.gold_answer, t.layout);
  m.retrieval_exposure = exposure_step(t, SegmentLabel::retrieval, vocab);
  m.reasoning_exposure = exposure_step(t, SegmentLabel::reasoning, vocab);
  m.answer_exposure = exposure_step(t, SegmentLabel::answer, vocab);
  m.entropy_gap = entropy_gap(t, vocab);
  m.duplicate_delimiter = t.layout.duplicate_delimiter;

  const LatentCurve curve = latent_f1_curve(t, file.header.gold_keys, vocab);
  m.latent_f1 = curve.f1;
  m.latent_crossing = curve.crossing;
  SegmentLayout blank = t.layout;
  for (auto& s : blank.segments) s.span.reset();
  std::size_t masked = t.config.gen_length;
  for (std::size_t s = 0; s < t.steps.size(); ++s) {
    const std::string text = latent_generation_text(t, s, vocab);
    const SegmentLayout layout = resolve_segments(text, blank);
    m.latent_correct.push_back(reasoning_accuracy(text, file.header.gold_answer, layout).correct ? 1 : 0);
    masked -= t.steps[s].decision.chosen.size();
    m.masked_remaining.push_back(masked);
  }
  const ConfidenceRecord rec = confidence_record(t);
  m.answer_conf = answer_confidence(t, rec, vocab);
  return m;
}

void write_grid(const std::filesystem::path& path, const Grid& grid) {
  std::string bytes = "MDLGRID1";
  auto put = [&](auto v) {
    unsigned char b[sizeof v];
    for (std::size_t i = 0; i < sizeof v; ++i) b[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF);
    bytes.append(reinterpret_cast<const char*>(b), sizeof v);
  };
  put(kGridVersion);
  put(kGridDtypeFloat64);
  put(static_cast<std::uint64_t>(grid.rows));
  put(static_cast<std::uint64_t>(grid.cols));
  for (const double d : grid.data) {
    std::uint64_t u;
    std::memcpy(&u, &d, sizeof u);
    put(u);
  }
  write_file_atomic(path, bytes);
}

Grid read_grid(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  std::size_t at = 0;
  auto get = [&](std::size_t n) {
    if (at + n > bytes.size()) throw FormatError(path.string() + ": truncated grid file");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
    at += n;
    return v;
  };
  if (bytes.compare(0, 8, "MDLGRID1") != 0) throw FormatError(path.string() + ": not a grid file");
  at = 8;
  if (get(4) != kGridVersion) throw FormatError(path.string() + ": unsupported grid version");
  if (get(4) != kGridDtypeFloat64) throw FormatError(path.string() + ": unsupported grid dtype");
  Grid g;
  g.rows = get(8);
  g.cols = get(8);
  if (bytes.size() - at != g.rows * g.cols * 8) throw FormatError(path.string() + ": grid size mismatch");
  g.data.resize(g.rows * g.cols);
  for (auto& d : g.data) {
    const std::uint64_t u = get(8);
    std::memcpy(&d, &u, sizeof d);
  }
  return g;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : "NA"; }

class Csv {
 public:
  explicit Csv(std::string header) { out_ << header << '\n'; }
  template <typename... Ts>
  void row(const Ts&... cols) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cols, first = false), ...);
    out_ << '\n';
  }
  void save(const std::filesystem::path& path) const { write_file_atomic(path, out_.str()); }

 private:
  std::ostringstream out_;
};

struct Mean {
  double sum = 0.0;
  std::size_t n = 0;
  void add(double v) {
    sum += v;
    ++n;
  }
  std::string str() const { return n ? fmt(sum / static_cast<double>(n)) : "NA"; }
  double value() const { return n ? sum / static_cast<double>(n) : 0.0; }
};

std::string cell_of(const RunMetrics& m) { return cell_label(m.gen_length, m.steps, m.block_length); }

}  // namespace

AnalyzeSummary analyze(const std::filesystem::path& archive, const std::filesystem::path& out_dir,
                       const AnalyzeOptions& options) {
  namespace fs = std::filesystem;
  AnalyzeSummary summary;
  const Manifest manifest = load_manifest(archive / "manifest.jsonl");
  if (manifest.truncated_tail) summary.warnings.push_back("manifest ends in a truncated line; ignored");

  std::vector<ManifestEntry> entries;
  for (auto& e : manifest.latest()) {
    if (!e.ok) {
      ++summary.skipped;
      summary.warnings.push_back(e.run_id + ": failed run skipped");
      continue;
    }
    entries.push_back(std::move(e));
  }
  if (entries.empty()) summary.warnings.push_back("archive has no complete runs; reports are empty");

  std::optional<Vocabulary> vocab;
  if (!entries.empty()) vocab = read_vocabulary(archive / "vocab.json");

  std::vector<std::optional<RunMetrics>> metrics(entries.size());
  std::vector<std::string> problems(entries.size());
  const auto n = static_cast<std::ptrdiff_t>(entries.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const fs::path file = archive / entries[k].file;
    try {
      const std::string bytes = read_file(file);
      if (sha256_hex(bytes) != entries[k].sha256) {
        problems[k] = entries[k].run_id + ": digest mismatch; skipped";
        continue;
      }
      metrics[k] = compute_run_metrics(trace_from_json(nlohmann::json::parse(bytes)), *vocab);
    } catch (const std::exception& e) {
      problems[k] = entries[k].run_id + ": " + e.what();
    }
  }
  std::vector<const RunMetrics*> rows;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    if (metrics[k]) {
      rows.push_back(&*metrics[k]);
    } else {
      ++summary.skipped;
      summary.warnings.push_back(problems[k]);
    }
  }
  summary.runs = rows.size();

  fs::create_directories(out_dir);

  Csv per_run(
      "run_id,problem_id,difficulty,strategy,order,cell,retrieval_precision,retrieval_recall,retrieval_f1,"
      "answer_correct,answer_parse_failure,retrieval_exposure,reasoning_exposure,answer_exposure,entropy_gap,"
      "latent_f1_crossing,answer_conf_masked,answer_conf_all,duplicate_delimiter");
  for (const auto* m : rows) {
    auto ex = [](const Exposure& e) { return e.empty ? std::string("NA") : std::to_string(e.step); };
    per_run.row(m->run_id, m->problem_id, to_string(m->difficulty), to_string(m->strategy), to_string(m->order),
                cell_of(*m), fmt(m->retrieval.precision), fmt(m->retrieval.recall), fmt(m->retrieval.f1),
                m->answer.correct ? 1 : 0, m->answer.parse_failure ? 1 : 0, ex(m->retrieval_exposure),
                ex(m->reasoning_exposure), ex(m->answer_exposure), fmt_opt(m->entropy_gap), m->latent_crossing,
                m->answer_conf ? fmt(m->answer_conf->masked_only) : "NA",
                m->answer_conf ? fmt(m->answer_conf->all_steps) : "NA", m->duplicate_delimiter ? 1 : 0);
  }
  per_run.save(out_dir / "metrics.csv");

  // Per-level aggregates keyed by (difficulty, strategy, order, cell).
  struct LevelAgg {
    Mean f1, acc, ex_retrieval, ex_reasoning, ex_answer, gap, crossing, conf_masked, conf_all;
  };
  using LevelKey = std::tuple<std::string, std::string, std::string, std::string>;
  std::map<LevelKey, LevelAgg> levels;
  for (const auto* m : rows) {
    auto& a = levels[{std::string(to_string(m->difficulty)), std::string(to_string(m->strategy)),
                      std::string(to_string(m->order)), cell_of(*m)}];
    a.f1.add(m->retrieval.f1);
    a.acc.add(m->answer.correct ? 1.0 : 0.0);
    if (!m->retrieval_exposure.empty) a.ex_retrieval.add(static_cast<double>(m->retrieval_exposure.step));
    if (!m->reasoning_exposure.empty) a.ex_reasoning.add(static_cast<double>(m->reasoning_exposure.step));
    if (!m->answer_exposure.empty) a.ex_answer.add(static_cast<double>(m->answer_exposure.step));
    if (m->entropy_gap) a.gap.add(*m->entropy_gap);
    a.crossing.add(static_cast<double>(m->latent_crossing));
    if (m->answer_conf) {
      a.conf_masked.add(m->answer_conf->masked_only);
      a.conf_all.add(m->answer_conf->all_steps);
    }
  }
  Csv level_csv(
      "difficulty,strategy,order,cell,n,retrieval_f1,accuracy,retrieval_exposure,reasoning_exposure,answer_exposure,"
      "entropy_gap,latent_f1_crossing,answer_conf_masked,answer_conf_all");
  Csv exposure_csv("difficulty,strategy,order,cell,segment,n,mean_exposure");
  for (const auto& [k, a] : levels) {
    const auto& [d, s, o, c] = k;
    level_csv.row(d, s, o, c, a.f1.n, a.f1.str(), a.acc.str(), a.ex_retrieval.str(), a.ex_reasoning.str(),
                  a.ex_answer.str(), a.gap.str(), a.crossing.str(), a.conf_masked.str(), a.conf_all.str());
    exposure_csv.row(d, s, o, c, "answer", a.ex_answer.n, a.ex_answer.str());
    exposure_csv.row(d, s, o, c, "reasoning", a.ex_reasoning.n, a.ex_reasoning.str());
    exposure_csv.row(d, s, o, c, "retrieval", a.ex_retrieval.n, a.ex_retrieval.str());
  }
  level_csv.save(out_dir / "levels.csv");
  exposure_csv.save(out_dir / "exposure.csv");

  // Strategy x order accuracy with the relative change from CoT-First to
  // Answer-First, one table per cell, rows by Answer-First accuracy.
  struct AccRow {
    std::string cell, strategy;
    Mean cot, af;
  };
  std::map<std::pair<std::string, std::string>, AccRow> acc;
  for (const auto* m : rows) {
    auto& r = acc[{cell_of(*m), std::string(to_string(m->strategy))}];
    r.cell = cell_of(*m);
    r.strategy = to_string(m->strategy);
    (m->order == OutputOrder::cot_first ? r.cot : r.af).add(m->answer.correct ? 1.0 : 0.0);
  }
  std::vector<const AccRow*> acc_rows;
  for (const auto& [_, r] : acc) acc_rows.push_back(&r);
  std::stable_sort(acc_rows.begin(), acc_rows.end(), [](const AccRow* a, const AccRow* b) {
    if (a->cell != b->cell) return a->cell < b->cell;
    const double x = a->af.n ? a->af.value() : -1.0;
    const double y = b->af.n ? b->af.value() : -1.0;
    if (x != y) return x > y;
    return a->strategy < b->strategy;
  });
  Csv acc_csv("cell,strategy,cot_first_accuracy,answer_first_accuracy,n_cot_first,n_answer_first,delta_rel");
  for (const auto* r : acc_rows) {
    const auto drop = r->cot.n && r->af.n ? relative_drop(r->cot.value(), r->af.value()) : std::nullopt;
    acc_csv.row(r->cell, r->strategy, r->cot.str(), r->af.str(), r->cot.n, r->af.n, format_relative_drop(drop));
  }
  acc_csv.save(out_dir / "accuracy.csv");

  Csv traj("run_id,step,latent_retrieval_f1,latent_answer_correct,masked_remaining");
  struct StepAgg {
    Mean f1, correct;
  };
  std::map<std::tuple<std::string, std::string, std::string, std::size_t>, StepAgg> traj_sum;
  for (const auto* m : rows) {
    for (std::size_t s = 0; s < m->latent_f1.size(); ++s) {
      traj.row(m->run_id, s, fmt(m->latent_f1[s]), m->latent_correct[s], m->masked_remaining[s]);
      auto& a = traj_sum[{std::string(to_string(m->strategy)), std::string(to_string(m->order)), cell_of(*m), s}];
      a.f1.add(m->latent_f1[s]);
      a.correct.add(m->latent_correct[s]);
    }
  }
  traj.save(out_dir / "trajectories.csv");
  Csv traj_summary("strategy,order,cell,step,n,mean_latent_retrieval_f1,latent_accuracy");
  for (const auto& [k, a] : traj_sum) {
    const auto& [s, o, c, step] = k;
    traj_summary.row(s, o, c, step, a.f1.n, a.f1.str(), a.correct.str());
  }
  traj_summary.save(out_dir / "trajectory_summary.csv");

  Csv scatter("run_id,difficulty,strategy,order,cell,reasoning_exposure,answer_exposure,outcome");
  for (const auto* m : rows) {
    if (m->reasoning_exposure.empty || m->answer_exposure.empty) continue;
    scatter.row(m->run_id, to_string(m->difficulty), to_string(m->strategy), to_string(m->order), cell_of(*m),
                m->reasoning_exposure.step, m->answer_exposure.step, m->answer.correct ? "correct" : "wrong");
  }
  scatter.save(out_dir / "exposure_scatter.csv");

  if (options.heatmaps && !rows.empty()) {
    fs::create_directories(out_dir / "heatmaps");
    std::set<LevelKey> seen;
    Csv land("run_id,step,mean_conf,sigma_conf");
    for (std::size_t k = 0; k < entries.size(); ++k) {
      if (!metrics[k]) continue;
      const RunMetrics& m = *metrics[k];
      if (!seen.insert({std::string(to_string(m.difficulty)), std::string(to_string(m.strategy)),
                        std::string(to_string(m.order)), cell_of(m)})
               .second) {
        continue;
      }
      const ConfidenceRecord rec = confidence_record(read_trace_file(archive / entries[k].file).trace);
      write_grid(out_dir / "heatmaps" / (m.run_id + ".conf.grid"), rec.conf);
      write_grid(out_dir / "heatmaps" / (m.run_id + ".entropy.grid"), rec.entropy);
      const LandscapeStats ls = landscape(rec.conf);
      for (std::size_t s = 0; s < ls.mean.size(); ++s) land.row(m.run_id, s, fmt(ls.mean[s]), fmt(ls.sigma[s]));
    }
    land.save(out_dir / "landscape.csv");
  }
  return summary;
}

}  // namespace mdlab
