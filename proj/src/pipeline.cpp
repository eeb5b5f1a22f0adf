#include "dotdx/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "dotdx/text.hpp"

namespace dotdx {

using nlohmann::json;

std::string_view to_string(ResultStatus s) {
  switch (s) {
    case ResultStatus::kOk: return "ok";
    case ResultStatus::kSkippedTokenLimit: return "skipped_token_limit";
    case ResultStatus::kFailed: return "failed";
  }
  return "failed";
}

std::string make_run_tag(const Strategy& strategy, int run_index, std::string_view example_id) {
  return fmt::format("{}/run{}/{}", strategy.tag(), run_index, example_id);
}

DiagnosisResult diagnose(const PatientRecord& record, const Strategy& strategy, ChatClient& client,
                         const PromptBundle& bundle, const PipelineOptions& options,
                         int run_index) {
  DiagnosisResult result;
  result.example_id = record.id;
  result.strategy = strategy.tag();
  result.run_index = run_index;

  const auto plan = assemble(record, bundle, strategy, options.assemble);
  std::vector<std::string> replies;
  replies.reserve(plan.user_turns.size());

  ChatRequest request;
  request.model_id = options.model_id;
  request.temperature = options.temperature;
  request.max_tokens = options.max_tokens;
  request.run_tag = make_run_tag(strategy, run_index, record.id);

  auto record_transcript = [&] {
    auto conv = plan.materialize(replies);
    for (auto& m : conv.messages) {
      if (m.role != Role::kSystem) result.transcript.push_back(std::move(m));
    }
  };

  try {
    for (const auto& turn : plan.user_turns) {
      request.messages = plan.materialize(replies);
      auto response = client.complete(request);
      result.prompt_tokens += response.prompt_tokens;
      result.completion_tokens += response.completion_tokens;
      result.truncated = result.truncated || response.finish_reason == FinishReason::kLength;
      switch (turn.purpose) {
        case TurnPurpose::kStage:
          if (turn.stage) {
            result.rationales[*turn.stage] = response.text;
          } else {
            result.rationales = split_combined_rationales(response.text, strategy.stage_count());
          }
          break;
        case TurnPurpose::kReasoning:
          result.reasoning = response.text;
          break;
        case TurnPurpose::kDirect:
        case TurnPurpose::kFinal:
          result.raw_assessment = response.text;
          result.raw_classification = response.text;
          break;
        case TurnPurpose::kFinalAssessment:
          result.raw_assessment = response.text;
          break;
        case TurnPurpose::kFinalClassification:
          result.raw_classification = response.text;
          break;
      }
      replies.push_back(std::move(response.text));
    }
  } catch (const AuthError&) {
    throw;
  } catch (const TokenLimitError& e) {
    result.status = ResultStatus::kSkippedTokenLimit;
    result.failure_reason = e.what();
    record_transcript();
    return result;
  } catch (const LlmError& e) {
    result.status = ResultStatus::kFailed;
    result.failure_reason = e.what();
    record_transcript();
    return result;
  }

  record_transcript();
  result.assessment = parse_assessment(result.raw_assessment);
  auto parsed = parse_classification_detailed(result.raw_classification, options.aliases);
  result.predicted_labels = std::move(parsed.labels);
  result.classification_unparseable = parsed.status == ClassificationStatus::kUnparseable;
  if (parsed.overflow > 0) {
    spdlog::info("{}: answer listed {} extra distortion type(s); kept the first two",
                 request.run_tag, parsed.overflow);
  }
  return result;
}

std::vector<DiagnosisResult> run_experiment(std::span<const PatientRecord> records,
                                            const Strategy& strategy, ChatClient& client,
                                            const PromptBundle& bundle,
                                            const ExperimentOptions& options) {
  if (options.runs < 1) throw std::invalid_argument("runs must be >= 1");

  const std::size_t total = records.size() * static_cast<std::size_t>(options.runs);
  std::vector<DiagnosisResult> results(total);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr fatal;
  std::mutex io_mutex;

  std::ofstream journal;
  if (options.journal_path) {
    journal.open(*options.journal_path, std::ios::binary | std::ios::app);
    if (!journal) throw std::runtime_error("cannot open journal " + *options.journal_path);
  }

  auto worker = [&] {
    while (!stop.load()) {
      const auto task = next.fetch_add(1);
      if (task >= total) return;
      const int run = static_cast<int>(task / records.size()) + 1;
      const auto& rec = records[task % records.size()];
      try {
        results[task] = diagnose(rec, strategy, client, bundle, options.pipeline, run);
      } catch (...) {
        std::lock_guard lock(io_mutex);
        if (!fatal) fatal = std::current_exception();
        stop = true;
        return;
      }
      if (journal.is_open()) {
        std::lock_guard lock(io_mutex);
        journal << to_json(results[task]).dump() << '\n';
        journal.flush();
      }
    }
  };

  const auto n_threads = std::max<std::size_t>(1, std::min(options.concurrency, total));
  {
    std::vector<std::jthread> pool;
    pool.reserve(n_threads);
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  }
  if (fatal) std::rethrow_exception(fatal);

  std::stable_sort(results.begin(), results.end(), [](const auto& a, const auto& b) {
    if (a.run_index != b.run_index) return a.run_index < b.run_index;
    return a.example_id < b.example_id;
  });
  return results;
}

// --- JSON ----------------------------------------------------------------------

json to_json(const DiagnosisResult& r) {
  json rationales = json::object();
  for (const auto& [stage, t] : r.rationales) rationales[std::string(to_string(stage))] = t;
  json transcript = json::array();
  for (const auto& m : r.transcript) {
    transcript.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  json j = {{"example_id", r.example_id},
            {"strategy", r.strategy},
            {"run_index", r.run_index},
            {"status", to_string(r.status)},
            {"rationales", rationales},
            {"raw_assessment", r.raw_assessment},
            {"raw_classification", r.raw_classification},
            {"classification_unparseable", r.classification_unparseable},
            {"truncated", r.truncated},
            {"prompt_tokens", r.prompt_tokens},
            {"completion_tokens", r.completion_tokens},
            {"transcript", transcript}};
  if (!r.reasoning.empty()) j["reasoning"] = r.reasoning;
  if (!r.failure_reason.empty()) j["failure_reason"] = r.failure_reason;
  if (r.assessment) j["assessment"] = to_string(*r.assessment);
  if (r.predicted_labels) {
    json labels = json::array();
    for (auto d : *r.predicted_labels) labels.push_back(name_of(d));
    j["predicted_labels"] = labels;
  }
  return j;
}

DiagnosisResult result_from_json(const json& j) {
  DiagnosisResult r;
  r.example_id = j.at("example_id").get<std::string>();
  r.strategy = j.at("strategy").get<std::string>();
  r.run_index = j.at("run_index").get<int>();
  const auto status = j.at("status").get<std::string>();
  if (status == "ok") {
    r.status = ResultStatus::kOk;
  } else if (status == "skipped_token_limit") {
    r.status = ResultStatus::kSkippedTokenLimit;
  } else if (status == "failed") {
    r.status = ResultStatus::kFailed;
  } else {
    throw std::runtime_error("unknown result status '" + status + "'");
  }
  const json rationales = j.value("rationales", json::object());
  for (const auto& [k, v] : rationales.items()) {
    auto stage = parse_stage(k);
    if (!stage) throw std::runtime_error("unknown stage key '" + k + "'");
    r.rationales[*stage] = v.get<std::string>();
  }
  r.reasoning = j.value("reasoning", std::string{});
  r.raw_assessment = j.value("raw_assessment", std::string{});
  r.raw_classification = j.value("raw_classification", std::string{});
  r.classification_unparseable = j.value("classification_unparseable", false);
  r.truncated = j.value("truncated", false);
  r.prompt_tokens = j.value("prompt_tokens", 0);
  r.completion_tokens = j.value("completion_tokens", 0);
  r.failure_reason = j.value("failure_reason", std::string{});
  if (j.contains("assessment")) {
    const auto a = j["assessment"].get<std::string>();
    r.assessment = a == "yes" ? Assessment::kYes
                   : a == "no" ? Assessment::kNo
                               : Assessment::kUnparseable;
  }
  if (j.contains("predicted_labels")) {
    std::vector<Distortion> labels;
    for (const auto& name : j["predicted_labels"]) {
      auto d = from_canonical_name(name.get<std::string>());
      if (!d) throw std::runtime_error("unknown distortion label " + name.dump());
      labels.push_back(*d);
    }
    r.predicted_labels = std::move(labels);
  }
  for (const auto& m : j.value("transcript", json::array())) {
    auto role = parse_role(m.at("role").get<std::string>());
    if (!role) throw std::runtime_error("unknown role in transcript");
    r.transcript.push_back({*role, m.at("content").get<std::string>()});
  }
  return r;
}

std::string results_jsonl(const ResultsHeader& header, std::span<const DiagnosisResult> results) {
  json head = {{"schema", "dotdx-results"},
               {"version", kResultsSchemaVersion},
               {"strategy", header.strategy},
               {"model_id", header.model_id},
               {"runs", header.runs}};
  std::string out = head.dump() + "\n";
  for (const auto& r : results) out += to_json(r).dump() + "\n";
  return out;
}

void write_results(const std::string& path, const ResultsHeader& header,
                   std::span<const DiagnosisResult> results) {
  text::write_file(path, results_jsonl(header, results));
}

ResultsFile parse_results(std::string_view content) {
  ResultsFile file;
  bool have_header = false;
  std::size_t line_no = 0;
  for (const auto& line : text::split_lines(content)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      auto j = json::parse(line);
      if (!have_header) {
        if (j.value("schema", std::string{}) != "dotdx-results") {
          throw std::runtime_error("missing results header line");
        }
        const int version = j.at("version").get<int>();
        if (version != kResultsSchemaVersion) {
          throw std::runtime_error("unsupported results schema version " +
                                   std::to_string(version));
        }
        file.header.strategy = j.at("strategy").get<std::string>();
        file.header.model_id = j.at("model_id").get<std::string>();
        file.header.runs = j.at("runs").get<int>();
        have_header = true;
        continue;
      }
      file.results.push_back(result_from_json(j));
    } catch (const std::exception& e) {
      throw std::runtime_error(fmt::format("results line {}: {}", line_no, e.what()));
    }
  }
  if (!have_header) throw std::runtime_error("results file is empty");
  return file;
}

ResultsFile read_results(const std::string& path) { return parse_results(text::read_file(path)); }

}  // namespace dotdx
