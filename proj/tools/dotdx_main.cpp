#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "dotdx/commands.hpp"
#include "dotdx/human_eval.hpp"
#include "dotdx/text.hpp"

namespace {

using dotdx::KeyValueFile;

struct ConfigFlag {
  const char* flag;
  const char* key;
  const char* help;
};

// Flags shared by commands that consume a RunConfig; each maps to one key.
constexpr ConfigFlag kDataFlags[] = {
    {"--dataset", "dataset", "dataset CSV"},
    {"--schema", "schema", "default, kaggle, or a column mapping file"},
    {"--aliases", "aliases", "label alias table (alias<TAB>canonical name)"},
    {"--prompt-dir", "prompt_dir", "directory of prompt override files"},
    {"--seed", "seed", "split seed"},
    {"--train-fraction", "train_fraction", "train share for seeded splits"},
    {"--alignment", "alignment", "lenient or strict label alignment"},
    {"--include-no-distortion", "include_no_distortion", "score a No distortion class (true/false)"},
};

constexpr ConfigFlag kRunFlags[] = {
    {"--model", "model_id", "model id sent to the endpoint"},
    {"--base-url", "base_url", "endpoint base URL"},
    {"--api-key-env", "api_key_env", "environment variable holding the API key"},
    {"--strategy", "strategy", "direct, zcot, dot or matrix"},
    {"--stages", "stages", "DoT stages: s1, s1+s2 or s1+s2+s3"},
    {"--mode", "mode", "DoT mode: sequential or combined"},
    {"--runs", "runs", "independent runs"},
    {"--temperature", "temperature", "sampling temperature"},
    {"--max-tokens", "max_tokens", "max tokens per call"},
    {"--cache", "cache", "replay cache JSONL path"},
    {"--cache-mode", "cache_mode", "off, record, replay or strict-replay"},
    {"--out", "output_dir", "output directory"},
    {"--concurrency", "concurrency", "in-flight request bound"},
    {"--limit", "limit", "use only the first N test examples"},
    {"--inline-instruction", "inline_instruction", "put the instruction in the first user turn"},
    {"--final-turns", "final_turns", "ask the final questions in 1 or 2 turns"},
    {"--timeout", "timeout_seconds", "HTTP timeout in seconds"},
};

struct ConfigOptions {
  std::optional<std::string> config_path;
  std::vector<std::string> sets;
  std::vector<std::pair<CLI::Option*, const char*>> flags;
  std::vector<std::string> storage;

  KeyValueFile overrides() const {
    KeyValueFile kv;
    for (const auto& s : sets) {
      auto eq = s.find('=');
      if (eq == std::string::npos) {
        throw dotdx::cli::ConfigError({"--set: expected key=value, got '" + s + "'"});
      }
      kv.set(std::string(dotdx::text::trim(s.substr(0, eq))),
             std::string(dotdx::text::trim(s.substr(eq + 1))));
    }
    for (std::size_t i = 0; i < flags.size(); ++i) {
      if (flags[i].first->count() > 0) kv.set(flags[i].second, storage[i]);
    }
    return kv;
  }

  dotdx::cli::RunConfig resolve() const {
    return dotdx::cli::resolve_config(config_path, overrides());
  }
};

template <std::size_t N>
void add_flags(CLI::App* app, ConfigOptions& opts, const ConfigFlag (&flags)[N]) {
  for (const auto& f : flags) {
    opts.storage.emplace_back();
    opts.flags.emplace_back(nullptr, f.key);
  }
  // Storage is stable from here on; bind options to it.
  const auto base = opts.storage.size() - N;
  for (std::size_t i = 0; i < N; ++i) {
    opts.flags[base + i].first = app->add_option(flags[i].flag, opts.storage[base + i], flags[i].help);
  }
}

void add_config_file(CLI::App* app, ConfigOptions& opts) {
  app->add_option("--config", opts.config_path, "key = value config file");
  app->add_option("--set", opts.sets, "override any config key (key=value)");
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("dotdx"));
  spdlog::set_pattern("%^%l%$: %v");

  CLI::App app{"Diagnosis-of-Thought prompting and evaluation for cognitive distortion detection"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  // Each subcommand gets its own storage; reserve keeps bindings valid.
  ConfigOptions run_opts, ablate_opts, report_opts, review_opts, validate_opts;
  for (auto* o : {&run_opts, &ablate_opts, &report_opts, &review_opts, &validate_opts}) {
    o->storage.reserve(64);
    o->flags.reserve(64);
  }

  auto* run = app.add_subcommand("run", "run a strategy (or the full matrix) on the test split");
  add_config_file(run, run_opts);
  add_flags(run, run_opts, kDataFlags);
  add_flags(run, run_opts, kRunFlags);

  auto* ablate = app.add_subcommand("ablate", "run the S1, S1+S2 and S1+S2+S3 ablations");
  add_config_file(ablate, ablate_opts);
  add_flags(ablate, ablate_opts, kDataFlags);
  add_flags(ablate, ablate_opts, kRunFlags);

  dotdx::cli::ReportArgs report_args;
  std::string report_out;
  auto* report = app.add_subcommand("report", "rescore results files and print tables");
  add_config_file(report, report_opts);
  add_flags(report, report_opts, kDataFlags);
  report->add_option("results", report_args.results, "results.jsonl files")->required();
  report->add_option("--out", report_out, "write report files here");

  dotdx::cli::ExportReviewArgs review_args;
  auto* review = app.add_subcommand("export-review", "export rationale review packets");
  add_config_file(review, review_opts);
  add_flags(review, review_opts, kDataFlags);
  review->add_option("--results", review_args.results, "DoT results.jsonl")->required();
  review->add_option("-n,--count", review_args.n, "number of examples")->capture_default_str();
  review->add_option("--sample-seed", review_args.seed, "sampling seed")->capture_default_str();
  review->add_option("--out", review_args.out_dir, "packet directory")->required();

  dotdx::cli::IngestRatingsArgs ingest_args;
  std::string ingest_out;
  auto* ingest = app.add_subcommand("ingest-ratings", "validate and aggregate rating sheets");
  ingest->add_option("sheets", ingest_args.sheets, "completed rating sheet CSVs")->required();
  ingest->add_option("--out", ingest_out, "write ratings_summary.json and ratings_table.txt");

  std::string prompts_out;
  auto* prompts = app.add_subcommand("export-prompts", "write every prompt text to files");
  prompts->add_option("--out", prompts_out, "output directory")->required();

  std::string validate_out;
  auto* validate = app.add_subcommand("validate-dataset", "load a dataset and report its sanity");
  add_config_file(validate, validate_opts);
  add_flags(validate, validate_opts, kDataFlags);
  validate->add_option("--out", validate_out, "write records.jsonl and rejects.csv");

  CLI11_PARSE(app, argc, argv);
  if (verbose) spdlog::set_level(spdlog::level::debug);

  dotdx::cli::Context ctx{std::cout, std::cerr};
  auto opt = [](const std::string& s) {
    return s.empty() ? std::nullopt : std::optional<std::string>(s);
  };
  try {
    if (*run) return dotdx::cli::cmd_run(run_opts.resolve(), ctx);
    if (*ablate) return dotdx::cli::cmd_ablate(ablate_opts.resolve(), ctx);
    if (*report) {
      report_args.out_dir = opt(report_out);
      return dotdx::cli::cmd_report(report_opts.resolve(), report_args, ctx);
    }
    if (*review) return dotdx::cli::cmd_export_review(review_opts.resolve(), review_args, ctx);
    if (*ingest) {
      ingest_args.out_dir = opt(ingest_out);
      return dotdx::cli::cmd_ingest_ratings(ingest_args, ctx);
    }
    if (*prompts) return dotdx::cli::cmd_export_prompts(prompts_out, ctx);
    if (*validate) return dotdx::cli::cmd_validate_dataset(validate_opts.resolve(), opt(validate_out), ctx);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return dotdx::cli::kExitFatal;
  }
  return dotdx::cli::kExitFatal;
}
