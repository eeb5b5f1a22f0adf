#include "dotdx/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>
#include <nlohmann/json.hpp>

#include "dotdx/config.hpp"
#include "dotdx/csv.hpp"
#include "dotdx/sampling.hpp"
#include "dotdx/text.hpp"

namespace dotdx {

using nlohmann::json;

std::string_view to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::kTrain: return "train";
    case SplitTag::kTest: return "test";
    case SplitTag::kNone: break;
  }
  return "";
}

SchemaMapping SchemaMapping::kaggle() {
  SchemaMapping m;
  m.id_column = "Id_Number";
  m.speech_column = "Patient Question";
  m.primary_label_column = "Dominant Distortion";
  m.secondary_label_column = "Secondary Distortion (Optional)";
  m.split_column = "split";
  return m;
}

SchemaMapping SchemaMapping::load(const std::string& path) {
  auto kv = KeyValueFile::load(path);
  SchemaMapping m;
  if (auto preset = kv.get("preset"); preset && *preset == "kaggle") m = kaggle();
  if (auto v = kv.get("id")) m.id_column = *v;
  if (auto v = kv.get("speech")) m.speech_column = *v;
  if (auto v = kv.get("label_1")) m.primary_label_column = *v;
  if (auto v = kv.get("label_2")) m.secondary_label_column = *v;
  if (auto v = kv.get("split")) m.split_column = *v;
  if (auto v = kv.get("none_markers")) {
    m.none_markers.clear();
    std::size_t start = 0;
    while (start <= v->size()) {
      auto bar = v->find('|', start);
      auto piece = text::trim(std::string_view(*v).substr(
          start, bar == std::string::npos ? std::string::npos : bar - start));
      if (!piece.empty()) m.none_markers.emplace_back(piece);
      if (bar == std::string::npos) break;
      start = bar + 1;
    }
  }
  return m;
}

namespace {

std::optional<std::size_t> find_column(const std::vector<std::string>& header,
                                       const std::string& name) {
  if (name.empty()) return std::nullopt;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (text::trim(header[i]) == name) return i;
  }
  return std::nullopt;
}

std::size_t require_column(const std::vector<std::string>& header, const std::string& name,
                           std::string_view role) {
  auto idx = find_column(header, name);
  if (!idx) {
    throw DatasetError(fmt::format("dataset header has no {} column '{}'", role, name));
  }
  return *idx;
}

}  // namespace

LoadResult parse_dataset(std::string_view csv_content, const SchemaMapping& schema,
                         const AliasTable* aliases) {
  const auto clean = text::sanitize_utf8(csv_content);
  if (clean.size() != csv_content.size() || clean != csv_content) {
    spdlog::warn("dataset contains invalid UTF-8; offending bytes replaced with U+FFFD");
  }
  std::vector<csv::Row> rows;
  try {
    rows = csv::parse(clean);
  } catch (const csv::ParseError& e) {
    throw DatasetError(std::string("malformed CSV: ") + e.what());
  }
  if (rows.empty()) throw DatasetError("dataset is empty (no header row)");

  const auto& header = rows.front().fields;
  const auto id_col = find_column(header, schema.id_column);
  if (!schema.id_column.empty() && !id_col) {
    throw DatasetError("dataset header has no id column '" + schema.id_column + "'");
  }
  const auto speech_col = require_column(header, schema.speech_column, "speech");
  const auto label1_col = require_column(header, schema.primary_label_column, "primary label");
  const auto label2_col = find_column(header, schema.secondary_label_column);
  const auto split_col = find_column(header, schema.split_column);

  std::set<std::string> none_keys;
  for (const auto& marker : schema.none_markers) none_keys.insert(text::normalize_key(marker));

  LoadResult out;
  std::set<std::string> seen_ids;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& fields = rows[r].fields;
    const std::size_t data_row = r;
    if (fields.size() != header.size()) {
      throw DatasetError(fmt::format("malformed CSV: row {} (line {}) has {} fields, header has {}",
                                     data_row, rows[r].line, fields.size(), header.size()));
    }
    auto reject = [&](std::string reason) {
      out.rejects.push_back({data_row, std::move(reason)});
    };

    PatientRecord rec;
    rec.id = id_col ? std::string(text::trim(fields[*id_col])) : fmt::format("row-{}", data_row);
    if (rec.id.empty()) {
      reject("empty id");
      continue;
    }
    rec.speech = std::string(text::trim(fields[speech_col]));
    if (rec.speech.empty()) {
      reject("empty speech");
      continue;
    }

    auto label_cell = [&](std::size_t col) -> std::string {
      auto cell = std::string(text::trim(fields[col]));
      if (none_keys.contains(text::normalize_key(cell))) return {};
      return cell;
    };
    const std::string label1 = label_cell(label1_col);
    const std::string label2 = label2_col ? label_cell(*label2_col) : std::string{};
    if (label1.empty() && !label2.empty()) {
      reject("secondary label '" + label2 + "' without a primary label");
      continue;
    }
    bool bad_label = false;
    for (const auto* cell : {&label1, &label2}) {
      if (cell->empty()) continue;
      auto resolved = normalize_label(*cell, aliases);
      if (!resolved) {
        reject("unresolvable gold label '" + *cell + "'");
        bad_label = true;
        break;
      }
      if (std::find(rec.gold_labels.begin(), rec.gold_labels.end(), *resolved) ==
          rec.gold_labels.end()) {
        rec.gold_labels.push_back(*resolved);
      }
    }
    if (bad_label) continue;
    rec.has_distortion = !rec.gold_labels.empty();

    if (split_col) {
      auto tag = text::normalize_key(fields[*split_col]);
      if (tag == "train") {
        rec.split_tag = SplitTag::kTrain;
      } else if (tag == "test") {
        rec.split_tag = SplitTag::kTest;
      } else if (!tag.empty()) {
        reject("unknown split value '" + fields[*split_col] + "'");
        continue;
      }
    }

    if (!seen_ids.insert(rec.id).second) {
      reject("duplicate id '" + rec.id + "'");
      continue;
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

LoadResult load_dataset(const std::string& path, const SchemaMapping& schema,
                        const AliasTable* aliases) {
  if (!std::filesystem::is_regular_file(path)) {
    throw DatasetError("dataset file not found: " + path);
  }
  return parse_dataset(text::read_file(path), schema, aliases);
}

DatasetSplit split(std::span<const PatientRecord> records, double train_fraction,
                   std::uint64_t seed) {
  if (records.empty()) throw DatasetError("cannot split an empty dataset");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw DatasetError("train fraction must lie strictly between 0 and 1");
  }
  DatasetSplit out;
  out.seed = seed;

  const bool tagged = std::any_of(records.begin(), records.end(),
                                  [](const auto& r) { return r.split_tag != SplitTag::kNone; });
  if (tagged) {
    out.from_split_column = true;
    for (const auto& r : records) {
      (r.split_tag == SplitTag::kTest ? out.test : out.train).push_back(r);
    }
    return out;
  }

  const auto n = records.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  auto perm = seeded_permutation(n, seed);
  std::vector<bool> is_train(n, false);
  for (std::size_t i = 0; i < n_train; ++i) is_train[perm[i]] = true;
  for (std::size_t i = 0; i < n; ++i) {
    (is_train[i] ? out.train : out.test).push_back(records[i]);
  }
  return out;
}

std::string to_jsonl(std::span<const PatientRecord> records) {
  std::string out;
  for (const auto& r : records) {
    json labels = json::array();
    for (auto d : r.gold_labels) labels.push_back(name_of(d));
    json j = {{"id", r.id},
              {"speech", r.speech},
              {"has_distortion", r.has_distortion},
              {"gold_labels", labels},
              {"split", to_string(r.split_tag)}};
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<PatientRecord> from_jsonl(std::string_view content) {
  std::vector<PatientRecord> out;
  std::size_t line_no = 0;
  for (const auto& line : text::split_lines(content)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      auto j = json::parse(line);
      PatientRecord r;
      r.id = j.at("id").get<std::string>();
      r.speech = j.at("speech").get<std::string>();
      r.has_distortion = j.at("has_distortion").get<bool>();
      for (const auto& name : j.at("gold_labels")) {
        auto d = from_canonical_name(name.get<std::string>());
        if (!d) throw DatasetError("unknown label " + name.dump());
        r.gold_labels.push_back(*d);
      }
      auto split = j.value("split", std::string{});
      r.split_tag = split == "train" ? SplitTag::kTrain
                    : split == "test" ? SplitTag::kTest
                                      : SplitTag::kNone;
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw DatasetError(fmt::format("JSONL line {}: {}", line_no, e.what()));
    }
  }
  return out;
}

std::string rejects_csv(std::span<const RejectedRow> rejects) {
  std::string out = csv::format_row({"row", "reason"});
  for (const auto& r : rejects) out += csv::format_row({std::to_string(r.row), r.reason});
  return out;
}

SanityReport sanity_report(std::span<const PatientRecord> records) {
  SanityReport rep;
  rep.record_count = records.size();
  if (records.empty()) return rep;
  std::size_t tokens = 0;
  for (const auto& r : records) {
    tokens += text::split_whitespace(r.speech).size();
    if (r.has_distortion) {
      ++rep.distorted_count;
      ++rep.primary_label_counts[r.gold_labels.front()];
    }
  }
  const auto n = static_cast<double>(records.size());
  rep.distorted_fraction = static_cast<double>(rep.distorted_count) / n;
  rep.mean_tokens = static_cast<double>(tokens) / n;
  if (rep.distorted_count > 0) {
    const double mean_freq = static_cast<double>(rep.distorted_count) / kDistortionCount;
    std::size_t max_count = 0;
    for (const auto& [_, c] : rep.primary_label_counts) max_count = std::max(max_count, c);
    rep.max_class_to_mean_ratio = static_cast<double>(max_count) / mean_freq;
  }
  return rep;
}

std::string render(const SanityReport& report) {
  std::string out;
  out += fmt::format("records:            {}\n", report.record_count);
  out += fmt::format("distorted:          {} ({:.1f}%)\n", report.distorted_count,
                     100.0 * report.distorted_fraction);
  out += fmt::format("mean speech tokens: {:.1f}\n", report.mean_tokens);
  out += "primary label counts:\n";
  for (const auto& t : canonical_types()) {
    auto it = report.primary_label_counts.find(t.id);
    out += fmt::format("  {:<24} {}\n", t.canonical_name,
                       it == report.primary_label_counts.end() ? 0 : it->second);
  }
  out += fmt::format("max class / mean:   {:.2f}{}\n", report.max_class_to_mean_ratio,
                     report.labels_roughly_balanced() ? "" : "  (WARNING: imbalanced)");
  return out;
}

}  // namespace dotdx
