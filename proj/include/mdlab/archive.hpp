#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "mdlab/benchmark.hpp"
#include "mdlab/engine.hpp"

namespace mdlab {

inline constexpr int kTraceSchemaVersion = 1;
inline constexpr int kManifestSchemaVersion = 1;

struct TraceHeader {
  std::string run_id;
  std::string problem_id;
  Difficulty difficulty = Difficulty::D1;
  std::int64_t gold_answer = 0;
  std::vector<std::int64_t> gold_keys;
  OutputOrder order = OutputOrder::cot_first;
  std::uint64_t oracle_seed = 0;  // 0 for remote predictors
  std::string predictor;          // "oracle" or the endpoint
};

struct TraceFile {
  TraceHeader header;
  RunTrace trace;
};

nlohmann::json trace_to_json(const TraceFile& file);
// Throws FormatError on schema mismatch or malformed content.
TraceFile trace_from_json(const nlohmann::json& j);

// Serialized bytes, as written to disk.
std::string serialize_trace(const TraceFile& file);
void write_trace_file(const std::filesystem::path& path, const TraceFile& file);
TraceFile read_trace_file(const std::filesystem::path& path);

void write_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab);
Vocabulary read_vocabulary(const std::filesystem::path& path);

struct ManifestEntry {
  std::string run_id;
  std::string file;  // relative to the archive root
  std::string sha256;
  bool ok = false;
  std::string error;
};

struct Manifest {
  std::vector<ManifestEntry> entries;  // file order; later entries supersede earlier ones
  bool truncated_tail = false;         // last line was cut short and ignored

  // Latest entry per run_id, sorted by run_id.
  std::vector<ManifestEntry> latest() const;
};

// Missing file yields an empty manifest. Throws FormatError on a bad header or
// a malformed line that is not the last one.
Manifest load_manifest(const std::filesystem::path& path);

// Append-only writer. Opening repairs a torn final line left by an
// interrupted writer. Not thread-safe; callers serialize access.
class ManifestWriter {
 public:
  explicit ManifestWriter(const std::filesystem::path& path);
  void append(const ManifestEntry& entry);

 private:
  std::ofstream out_;
};

}  // namespace mdlab
