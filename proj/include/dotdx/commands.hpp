#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dotdx/config.hpp"
#include "dotdx/llm_client.hpp"
#include "dotdx/metrics.hpp"
#include "dotdx/strategy.hpp"

namespace dotdx::cli {

enum ExitCode : int { kExitOk = 0, kExitFatal = 1, kExitPartial = 2 };

/// Invalid configuration; every message starts with the offending key.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// Resolved experiment configuration. Serialized as `key = value` lines; the
/// frozen copy written next to results re-creates the identical run.
struct RunConfig {
  std::string dataset;
  std::string schema = "default";  // default | kaggle | path to a mapping file
  std::string aliases;             // optional alias table
  std::string model_id = "gpt-3.5-turbo";
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key_env = "OPENAI_API_KEY";
  std::string strategy = "dot";  // direct | zcot | dot | matrix
  int stage_count = 3;
  DotMode mode = DotMode::kSequential;
  int runs = 5;
  double temperature = 1.0;
  int max_tokens = 1024;
  std::string cache;
  CacheMode cache_mode = CacheMode::kOff;
  std::string output_dir = "out";
  std::uint64_t seed = 42;
  double train_fraction = 0.8;
  std::size_t concurrency = 4;
  std::size_t limit = 0;  // 0 keeps the whole test split
  bool inline_instruction = false;
  int final_turns = 1;
  metrics::ScoringPolicy policy;
  std::string prompt_dir;
  int timeout_seconds = 120;

  /// Unknown keys and malformed values raise ConfigError naming the keys.
  static RunConfig from_kv(const KeyValueFile& kv);
  KeyValueFile to_kv() const;

  /// Structural checks: runs >= 1, a dataset path, an existing cache file
  /// for strict-replay, and so on.
  void validate() const;

  /// Strategies selected by `strategy` (matrix = direct, zcot, dot).
  std::vector<Strategy> strategies() const;
};

/// Loads `config_path` when given, then applies `overrides` on top.
RunConfig resolve_config(const std::optional<std::string>& config_path,
                         const KeyValueFile& overrides);

/// Builds the network client for a config. Tests substitute their own.
using LiveClientFactory = std::function<std::shared_ptr<ChatClient>(const RunConfig&)>;

/// OpenAI-compatible client, created on first use so that fully cached runs
/// need no credentials.
std::shared_ptr<ChatClient> default_live_client(const RunConfig& config);

struct Context {
  std::ostream& out;
  std::ostream& err;
  LiveClientFactory live_factory = default_live_client;
};

/// Output subdirectory for one strategy inside a matrix or ablation run.
std::string strategy_dir_name(const Strategy& strategy);

/// Runs every selected strategy on the test split and writes results.jsonl,
/// report.json, report.txt and per_class.csv per strategy plus
/// config.frozen (and table.txt for a matrix). Returns kExitPartial when any
/// example was skipped or failed.
int cmd_run(const RunConfig& config, Context& ctx);

/// Runs S1, S1+S2 and S1+S2+S3 with one shared cache and writes an
/// ablation table.
int cmd_ablate(const RunConfig& config, Context& ctx);

struct ReportArgs {
  std::vector<std::string> results;  // one or more results.jsonl files
  std::optional<std::string> out_dir;
};
/// Rescores results against the configured dataset's golds.
int cmd_report(const RunConfig& config, const ReportArgs& args, Context& ctx);

struct ExportReviewArgs {
  std::string results;
  std::size_t n = 100;
  std::uint64_t seed = 1;
  std::string out_dir;
};
/// `config.dataset` is optional here; when set, packet speech comes from it.
int cmd_export_review(const RunConfig& config, const ExportReviewArgs& args, Context& ctx);

struct IngestRatingsArgs {
  std::vector<std::string> sheets;
  std::optional<std::string> out_dir;
};
int cmd_ingest_ratings(const IngestRatingsArgs& args, Context& ctx);

/// Writes the default prompt files; review packets quote the same bytes.
int cmd_export_prompts(const std::string& out_dir, Context& ctx);

/// Loads and checks the dataset; writes records.jsonl and rejects.csv when
/// `out_dir` is given. Returns kExitPartial when rows were rejected.
int cmd_validate_dataset(const RunConfig& config, const std::optional<std::string>& out_dir,
                         Context& ctx);

}  // namespace dotdx::cli
