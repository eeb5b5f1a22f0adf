#include "dotdx/commands.hpp"

#include <charconv>
#include <filesystem>
#include <mutex>
#include <ostream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "dotdx/dataset.hpp"
#include "dotdx/human_eval.hpp"
#include "dotdx/pipeline.hpp"
#include "dotdx/prompts.hpp"
#include "dotdx/taxonomy.hpp"
#include "dotdx/text.hpp"

namespace dotdx::cli {

namespace fs = std::filesystem;

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error([&] {
        std::string msg = "invalid configuration:";
        for (const auto& p : problems) msg += "\n  " + p;
        return msg;
      }()),
      problems_(std::move(problems)) {}

namespace {

template <class T>
bool parse_number(const std::string& s, T& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

std::optional<bool> parse_bool(std::string_view s) {
  if (s == "true" || s == "yes" || s == "1" || s == "on") return true;
  if (s == "false" || s == "no" || s == "0" || s == "off") return false;
  return std::nullopt;
}

std::optional<int> parse_stages(std::string_view s) {
  const std::string norm = text::normalize_key(s);  // "s1+s2" -> "s1 s2", "1-3" -> "1 3"
  if (norm == "s1" || norm == "1") return 1;
  if (norm == "s1 s2" || norm == "2" || norm == "1 2") return 2;
  if (norm == "s1 s2 s3" || norm == "3" || norm == "1 3") return 3;
  return std::nullopt;
}

std::string stages_string(int n) {
  std::string out;
  for (int i = 1; i <= n; ++i) out += (i > 1 ? "+s" : "s") + std::to_string(i);
  return out;
}

std::string_view alignment_string(metrics::Alignment a) {
  return a == metrics::Alignment::kStrict ? "strict" : "lenient";
}

struct LoadedData {
  std::unique_ptr<AliasTable> aliases;
  LoadResult load;
};

SchemaMapping resolve_schema(const std::string& schema) {
  if (schema.empty() || schema == "default") return SchemaMapping{};
  if (schema == "kaggle") return SchemaMapping::kaggle();
  return SchemaMapping::load(schema);
}

LoadedData load_data(const RunConfig& config, Context& ctx) {
  if (config.dataset.empty()) throw ConfigError({"dataset: required"});
  LoadedData data;
  if (!config.aliases.empty()) {
    data.aliases = std::make_unique<AliasTable>(AliasTable::load(config.aliases));
  }
  data.load = load_dataset(config.dataset, resolve_schema(config.schema), data.aliases.get());
  if (!data.load.rejects.empty()) {
    ctx.err << fmt::format("warning: {} dataset row(s) rejected\n", data.load.rejects.size());
  }
  return data;
}

class DeferredClient : public ChatClient {
 public:
  explicit DeferredClient(std::function<std::shared_ptr<ChatClient>()> make)
      : make_(std::move(make)) {}

  ChatResponse complete(const ChatRequest& request) override {
    std::shared_ptr<ChatClient> inner;
    {
      std::lock_guard lock(mutex_);
      if (!inner_) inner_ = make_();
      inner = inner_;
    }
    return inner->complete(request);
  }

 private:
  std::function<std::shared_ptr<ChatClient>()> make_;
  std::mutex mutex_;
  std::shared_ptr<ChatClient> inner_;
};

struct ClientStack {
  std::shared_ptr<ChatClient> client;
  std::shared_ptr<CachingClient> caching;  // null when caching is off
};

ClientStack make_client(const RunConfig& config, Context& ctx) {
  ClientStack stack;
  if (config.cache_mode == CacheMode::kOff) {
    stack.client = ctx.live_factory(config);
    return stack;
  }
  auto cache = std::make_shared<ReplayCache>(config.cache);
  std::shared_ptr<ChatClient> live;
  if (config.cache_mode != CacheMode::kStrictReplay) live = ctx.live_factory(config);
  stack.caching = std::make_shared<CachingClient>(cache, config.cache_mode, live);
  stack.client = stack.caching;
  return stack;
}

std::vector<PatientRecord> test_records(const RunConfig& config,
                                        const std::vector<PatientRecord>& records) {
  auto sp = split(records, config.train_fraction, config.seed);
  auto test = std::move(sp.test);
  if (config.limit > 0 && config.limit < test.size()) test.resize(config.limit);
  if (test.empty()) throw std::runtime_error("test split is empty");
  return test;
}

void write_report_files(const fs::path& dir, const metrics::MetricReport& report) {
  fs::create_directories(dir);
  text::write_file((dir / "report.json").string(), metrics::to_json(report).dump(2) + "\n");
  text::write_file((dir / "report.txt").string(), metrics::render_report(report));
  text::write_file((dir / "per_class.csv").string(), metrics::per_class_csv(report));
}

metrics::TableRow table_row(const metrics::MetricReport& report, const Strategy& strategy) {
  return {metrics::method_label(report.model_id, strategy), report.assessment_f1,
          report.classification_weighted_f1,
          metrics::published_reference(report.model_id, strategy)};
}

struct StrategyOutcome {
  metrics::MetricReport report;
  bool partial = false;
};

StrategyOutcome run_strategy(const RunConfig& config, const Strategy& strategy,
                             std::span<const PatientRecord> test, ChatClient& client,
                             const BundleSet& bundles, const AliasTable* aliases,
                             const fs::path& dir, Context& ctx) {
  fs::create_directories(dir);
  ExperimentOptions opts;
  opts.pipeline.model_id = config.model_id;
  opts.pipeline.temperature = config.temperature;
  opts.pipeline.max_tokens = config.max_tokens;
  opts.pipeline.assemble.inline_instruction = config.inline_instruction;
  opts.pipeline.assemble.final_turns = config.final_turns;
  opts.pipeline.aliases = aliases;
  opts.runs = config.runs;
  opts.concurrency = config.concurrency;
  const auto journal = (dir / "journal.jsonl").string();
  fs::remove(journal);
  opts.journal_path = journal;

  ctx.out << fmt::format("running {} on {} example(s) x {} run(s)\n", strategy.tag(), test.size(),
                         config.runs)
          << std::flush;
  auto results =
      run_experiment(test, strategy, client, bundles.for_kind(strategy.kind()), opts);
  write_results((dir / "results.jsonl").string(), {strategy.tag(), config.model_id, config.runs},
                results);
  fs::remove(journal);

  StrategyOutcome outcome;
  outcome.report = metrics::score(results, test, config.policy, config.model_id);
  outcome.partial = outcome.report.skipped + outcome.report.failed > 0;
  write_report_files(dir, outcome.report);
  ctx.out << metrics::render_report(outcome.report) << std::flush;
  for (const auto& r : results) {
    if (r.status == ResultStatus::kFailed) {
      ctx.err << fmt::format("failed: run {} example {}: {}\n", r.run_index, r.example_id,
                             r.failure_reason);
    }
  }
  return outcome;
}

void report_cache(const ClientStack& stack, Context& ctx) {
  if (stack.caching) {
    ctx.out << fmt::format("cache: {} hit(s), {} live call(s)\n", stack.caching->hits(),
                           stack.caching->live_calls());
  }
}

std::optional<std::string> opt_dir(const std::string& s) {
  return s.empty() ? std::nullopt : std::optional<std::string>(s);
}

}  // namespace

RunConfig RunConfig::from_kv(const KeyValueFile& kv) {
  RunConfig c;
  std::vector<std::string> problems;
  auto bad = [&](const std::string& key, const std::string& value, std::string_view expected) {
    problems.push_back(fmt::format("{}: '{}' is not {}", key, value, expected));
  };

  for (const auto& [key, value] : kv.values()) {
    if (key == "dataset") c.dataset = value;
    else if (key == "schema") c.schema = value;
    else if (key == "aliases") c.aliases = value;
    else if (key == "model_id") c.model_id = value;
    else if (key == "base_url") c.base_url = value;
    else if (key == "api_key_env") c.api_key_env = value;
    else if (key == "cache") c.cache = value;
    else if (key == "output_dir") c.output_dir = value;
    else if (key == "prompt_dir") c.prompt_dir = value;
    else if (key == "strategy") {
      if (value == "direct" || value == "zcot" || value == "dot" || value == "matrix") {
        c.strategy = value;
      } else {
        bad(key, value, "one of direct, zcot, dot, matrix");
      }
    } else if (key == "stages") {
      if (auto n = parse_stages(value)) c.stage_count = *n;
      else bad(key, value, "one of s1, s1+s2, s1+s2+s3 (or 1, 1-2, 1-3)");
    } else if (key == "mode") {
      if (auto m = parse_dot_mode(value)) c.mode = *m;
      else bad(key, value, "sequential or combined");
    } else if (key == "cache_mode") {
      if (auto m = parse_cache_mode(value)) c.cache_mode = *m;
      else bad(key, value, "one of off, record, replay, strict-replay");
    } else if (key == "alignment") {
      if (value == "lenient") c.policy.alignment = metrics::Alignment::kLenient;
      else if (value == "strict") c.policy.alignment = metrics::Alignment::kStrict;
      else bad(key, value, "lenient or strict");
    } else if (key == "include_no_distortion" || key == "inline_instruction") {
      auto b = parse_bool(value);
      if (!b) bad(key, value, "a boolean");
      else if (key == "inline_instruction") c.inline_instruction = *b;
      else c.policy.include_no_distortion_class = *b;
    } else if (key == "runs") {
      if (!parse_number(value, c.runs)) bad(key, value, "an integer");
    } else if (key == "max_tokens") {
      if (!parse_number(value, c.max_tokens)) bad(key, value, "an integer");
    } else if (key == "final_turns") {
      if (!parse_number(value, c.final_turns)) bad(key, value, "an integer");
    } else if (key == "timeout_seconds") {
      if (!parse_number(value, c.timeout_seconds)) bad(key, value, "an integer");
    } else if (key == "seed") {
      if (!parse_number(value, c.seed)) bad(key, value, "a non-negative integer");
    } else if (key == "concurrency") {
      if (!parse_number(value, c.concurrency)) bad(key, value, "a non-negative integer");
    } else if (key == "limit") {
      if (!parse_number(value, c.limit)) bad(key, value, "a non-negative integer");
    } else if (key == "temperature") {
      if (!parse_number(value, c.temperature)) bad(key, value, "a number");
    } else if (key == "train_fraction") {
      if (!parse_number(value, c.train_fraction)) bad(key, value, "a number");
    } else {
      problems.push_back(key + ": unknown key");
    }
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return c;
}

KeyValueFile RunConfig::to_kv() const {
  KeyValueFile kv;
  kv.set("dataset", dataset);
  kv.set("schema", schema);
  kv.set("aliases", aliases);
  kv.set("model_id", model_id);
  kv.set("base_url", base_url);
  kv.set("api_key_env", api_key_env);
  kv.set("strategy", strategy);
  kv.set("stages", stages_string(stage_count));
  kv.set("mode", std::string(to_string(mode)));
  kv.set("runs", std::to_string(runs));
  kv.set("temperature", fmt::format("{}", temperature));
  kv.set("max_tokens", std::to_string(max_tokens));
  kv.set("cache", cache);
  kv.set("cache_mode", std::string(to_string(cache_mode)));
  kv.set("output_dir", output_dir);
  kv.set("seed", std::to_string(seed));
  kv.set("train_fraction", fmt::format("{}", train_fraction));
  kv.set("concurrency", std::to_string(concurrency));
  kv.set("limit", std::to_string(limit));
  kv.set("inline_instruction", inline_instruction ? "true" : "false");
  kv.set("final_turns", std::to_string(final_turns));
  kv.set("include_no_distortion", policy.include_no_distortion_class ? "true" : "false");
  kv.set("alignment", std::string(alignment_string(policy.alignment)));
  kv.set("prompt_dir", prompt_dir);
  kv.set("timeout_seconds", std::to_string(timeout_seconds));
  return kv;
}

void RunConfig::validate() const {
  std::vector<std::string> problems;
  if (dataset.empty()) problems.push_back("dataset: required");
  if (model_id.empty()) problems.push_back("model_id: required");
  if (runs < 1) problems.push_back(fmt::format("runs: must be >= 1 (got {})", runs));
  if (stage_count < 1 || stage_count > 3) problems.push_back("stages: must be s1..s3 prefix");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    problems.push_back(fmt::format("train_fraction: must be in (0, 1) (got {})", train_fraction));
  }
  if (temperature < 0.0) problems.push_back("temperature: must be >= 0");
  if (max_tokens < 1) problems.push_back("max_tokens: must be >= 1");
  if (concurrency < 1) problems.push_back("concurrency: must be >= 1");
  if (final_turns != 1 && final_turns != 2) problems.push_back("final_turns: must be 1 or 2");
  if (timeout_seconds < 1) problems.push_back("timeout_seconds: must be >= 1");
  if (cache_mode != CacheMode::kOff && cache.empty()) {
    problems.push_back(fmt::format("cache: required for cache_mode {}", to_string(cache_mode)));
  }
  if (cache_mode == CacheMode::kStrictReplay && !cache.empty() && !fs::is_regular_file(cache)) {
    problems.push_back("cache: strict-replay needs an existing cache file, '" + cache +
                       "' not found");
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));
}

std::vector<Strategy> RunConfig::strategies() const {
  if (strategy == "direct") return {Strategy::direct()};
  if (strategy == "zcot") return {Strategy::zero_shot_cot()};
  if (strategy == "matrix") {
    return {Strategy::direct(), Strategy::zero_shot_cot(), Strategy::dot(3, mode)};
  }
  return {Strategy::dot(stage_count, mode)};
}

RunConfig resolve_config(const std::optional<std::string>& config_path,
                         const KeyValueFile& overrides) {
  KeyValueFile kv;
  if (config_path) kv = KeyValueFile::load(*config_path);
  for (const auto& [k, v] : overrides.values()) kv.set(k, v);
  return RunConfig::from_kv(kv);
}

std::shared_ptr<ChatClient> default_live_client(const RunConfig& config) {
  return std::make_shared<DeferredClient>([config]() -> std::shared_ptr<ChatClient> {
    EndpointConfig endpoint;
    endpoint.base_url = config.base_url;
    endpoint.api_key = api_key_from_env(config.api_key_env);
    endpoint.max_in_flight = config.concurrency;
    return std::make_shared<OpenAICompatibleClient>(
        endpoint, make_http_transport(config.base_url, std::chrono::seconds(config.timeout_seconds)));
  });
}

std::string strategy_dir_name(const Strategy& strategy) {
  std::string name;
  switch (strategy.kind()) {
    case StrategyKind::kDirect: name = "direct"; break;
    case StrategyKind::kZeroShotCot: name = "zcot"; break;
    case StrategyKind::kDot: name = "dot_" + stages_string(strategy.stage_count()); break;
  }
  if (strategy.kind() == StrategyKind::kDot && strategy.mode() == DotMode::kCombined) {
    name += "_combined";
  }
  return name;
}

int cmd_run(const RunConfig& config, Context& ctx) {
  config.validate();
  auto data = load_data(config, ctx);
  const auto test = test_records(config, data.load.records);
  const auto bundles = build_bundles(canonical_types(), opt_dir(config.prompt_dir));
  auto stack = make_client(config, ctx);

  const fs::path out(config.output_dir);
  fs::create_directories(out);
  text::write_file((out / "config.frozen").string(), config.to_kv().render());
  if (!data.load.rejects.empty()) {
    text::write_file((out / "rejects.csv").string(), rejects_csv(data.load.rejects));
  }

  const auto strategies = config.strategies();
  const bool matrix = strategies.size() > 1;
  std::vector<metrics::TableRow> rows;
  bool partial = false;
  for (const auto& s : strategies) {
    const auto dir = matrix ? out / strategy_dir_name(s) : out;
    auto outcome =
        run_strategy(config, s, test, *stack.client, bundles, data.aliases.get(), dir, ctx);
    partial = partial || outcome.partial;
    rows.push_back(table_row(outcome.report, s));
  }
  if (matrix) {
    const auto table = metrics::render_table(rows);
    text::write_file((out / "table.txt").string(), table);
    ctx.out << "\n" << table;
  }
  report_cache(stack, ctx);
  return partial ? kExitPartial : kExitOk;
}

int cmd_ablate(const RunConfig& config, Context& ctx) {
  config.validate();
  auto data = load_data(config, ctx);
  const auto test = test_records(config, data.load.records);
  const auto bundles = build_bundles(canonical_types(), opt_dir(config.prompt_dir));
  auto stack = make_client(config, ctx);

  const fs::path out(config.output_dir);
  fs::create_directories(out);
  text::write_file((out / "config.frozen").string(), config.to_kv().render());

  std::vector<metrics::TableRow> rows;
  bool partial = false;
  for (int n = 1; n <= 3; ++n) {
    const auto s = Strategy::dot(n, config.mode);
    auto outcome = run_strategy(config, s, test, *stack.client, bundles, data.aliases.get(),
                                out / strategy_dir_name(s), ctx);
    partial = partial || outcome.partial;
    rows.push_back(table_row(outcome.report, s));
  }
  const auto table = metrics::render_table(rows);
  text::write_file((out / "ablation.txt").string(), table);
  ctx.out << "\n" << table;
  report_cache(stack, ctx);
  return partial ? kExitPartial : kExitOk;
}

int cmd_report(const RunConfig& config, const ReportArgs& args, Context& ctx) {
  if (args.results.empty()) throw ConfigError({"results: at least one file required"});
  auto data = load_data(config, ctx);

  std::vector<metrics::TableRow> rows;
  bool partial = false;
  for (const auto& path : args.results) {
    auto file = read_results(path);
    auto strategy = Strategy::from_tag(file.header.strategy);
    if (!strategy) throw std::runtime_error(path + ": unknown strategy " + file.header.strategy);
    auto report =
        metrics::score(file.results, data.load.records, config.policy, file.header.model_id);
    partial = partial || report.skipped + report.failed > 0;
    ctx.out << path << "\n" << metrics::render_report(report) << "\n";
    if (args.out_dir) {
      const fs::path dir(*args.out_dir);
      write_report_files(args.results.size() == 1 ? dir : dir / strategy_dir_name(*strategy),
                         report);
    }
    rows.push_back(table_row(report, *strategy));
  }
  const auto table = metrics::render_table(rows);
  ctx.out << table;
  if (args.out_dir) text::write_file((fs::path(*args.out_dir) / "table.txt").string(), table);
  return partial ? kExitPartial : kExitOk;
}

int cmd_export_review(const RunConfig& config, const ExportReviewArgs& args, Context& ctx) {
  if (args.out_dir.empty()) throw ConfigError({"out: output directory required"});
  const auto file = read_results(args.results);
  std::vector<PatientRecord> records;
  if (!config.dataset.empty()) records = load_data(config, ctx).load.records;
  const auto bundles = build_bundles(canonical_types(), opt_dir(config.prompt_dir));
  const auto summary = human_eval::export_review_packets(file.results, records, bundles.dot,
                                                         args.n, args.seed, args.out_dir);
  ctx.out << fmt::format("wrote {} packet(s) and {} ({} rows)\n", summary.packet_paths.size(),
                         summary.sheet_path, summary.sheet_rows);
  return kExitOk;
}

int cmd_ingest_ratings(const IngestRatingsArgs& args, Context& ctx) {
  if (args.sheets.empty()) throw ConfigError({"sheets: at least one rating sheet required"});
  std::vector<human_eval::RatingRecord> all;
  for (const auto& path : args.sheets) {
    try {
      auto recs = human_eval::parse_rating_sheet(text::read_file(path));
      all.insert(all.end(), recs.begin(), recs.end());
    } catch (const human_eval::RatingValidationError& e) {
      std::vector<std::string> problems;
      for (const auto& p : e.problems()) problems.push_back(path + ": " + p);
      throw human_eval::RatingValidationError(std::move(problems));
    }
  }
  const auto summary = human_eval::aggregate_ratings(all);
  const auto table = human_eval::render_table(summary);
  ctx.out << table;
  if (args.out_dir) {
    const fs::path dir(*args.out_dir);
    fs::create_directories(dir);
    text::write_file((dir / "ratings_summary.json").string(),
                     human_eval::to_json(summary).dump(2) + "\n");
    text::write_file((dir / "ratings_table.txt").string(), table);
  }
  return kExitOk;
}

int cmd_export_prompts(const std::string& out_dir, Context& ctx) {
  export_prompts(out_dir, canonical_types());
  std::vector<std::string_view> names = {prompt_files::kGeneralDirect, prompt_files::kGeneralDot,
                                         prompt_files::kDotBlock};
  names.insert(names.end(), prompt_files::kStages.begin(), prompt_files::kStages.end());
  names.push_back(prompt_files::kFinalQuestions);
  names.push_back(prompt_files::kZcotTrigger);
  for (auto n : names) ctx.out << (fs::path(out_dir) / n).string() << "\n";
  return kExitOk;
}

int cmd_validate_dataset(const RunConfig& config, const std::optional<std::string>& out_dir,
                         Context& ctx) {
  auto data = load_data(config, ctx);
  const auto& records = data.load.records;
  ctx.out << render(sanity_report(records));
  if (!records.empty()) {
    const auto sp = split(records, config.train_fraction, config.seed);
    ctx.out << fmt::format("split: {} train / {} test ({})\n", sp.train.size(), sp.test.size(),
                           sp.from_split_column
                               ? std::string("from split column")
                               : fmt::format("fraction {}, seed {}", config.train_fraction,
                                             config.seed));
  }
  for (const auto& r : data.load.rejects) {
    ctx.err << fmt::format("rejected row {}: {}\n", r.row, r.reason);
  }
  if (out_dir) {
    const fs::path dir(*out_dir);
    fs::create_directories(dir);
    text::write_file((dir / "records.jsonl").string(), to_jsonl(records));
    text::write_file((dir / "rejects.csv").string(), rejects_csv(data.load.rejects));
  }
  return data.load.rejects.empty() ? kExitOk : kExitPartial;
}

}  // namespace dotdx::cli
