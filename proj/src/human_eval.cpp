#include "dotdx/human_eval.hpp"

#include <algorithm>
#include <filesystem>
#include <set>
#include <tuple>

#include <fmt/format.h>

#include "dotdx/csv.hpp"
#include "dotdx/sampling.hpp"
#include "dotdx/text.hpp"

namespace dotdx::human_eval {

using nlohmann::json;

std::string_view to_string(Rating r) {
  switch (r) {
    case Rating::kComprehensive: return "Comprehensive";
    case Rating::kPartiallyGood: return "PartiallyGood";
    case Rating::kInvalid: return "Invalid";
  }
  return "Invalid";
}

std::optional<Rating> parse_rating(std::string_view s) {
  for (auto r : {Rating::kComprehensive, Rating::kPartiallyGood, Rating::kInvalid}) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

namespace {

std::string_view stage_title(Stage s) {
  switch (s) {
    case Stage::kS1: return "Subjectivity assessment";
    case Stage::kS2: return "Contrastive reasoning";
    case Stage::kS3: return "Schema analysis";
  }
  return "";
}

std::string fenced(std::string_view body) {
  return "````text\n" + std::string(body) + "\n````\n";
}

std::string safe_file_stem(std::string_view id) {
  std::string out;
  for (char c : id) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
              c == '-' || c == '_' || c == '.';
    out.push_back(ok ? c : '_');
  }
  if (out.empty() || out.front() == '.') out.insert(out.begin(), '_');
  return out;
}

}  // namespace

std::string ReviewPacket::render_markdown() const {
  std::string out = fmt::format("# Review packet: {}\n\n## Patient speech\n\n", example_id);
  out += fenced(speech);
  out += "\n## Prompts\n";
  int turn = 0;
  for (const auto& m : prompts) {
    if (m.role == Role::kSystem) {
      out += "\n### General instruction\n\n";
    } else {
      out += fmt::format("\n### User turn {}\n\n", ++turn);
    }
    out += fenced(m.content);
  }
  out += "\n## Rationales\n";
  for (const auto& [stage, rationale] : rationales) {
    out += fmt::format("\n### {}: {}\n\n", to_string(stage), stage_title(stage));
    out += fenced(rationale);
  }
  out +=
      "\n## Rating\n\nFor each stage, enter one of Comprehensive (correct and comprehensive), "
      "PartiallyGood (reasonable but not comprehensive) or Invalid (not reasonable) in the "
      "rating sheet.\n";
  return out;
}

InsufficientResultsError::InsufficientResultsError(std::size_t wanted, std::size_t available)
    : std::runtime_error(fmt::format(
          "need {} eligible DoT results with all three stages, found {} (short by {})", wanted,
          available, wanted - available)),
      wanted_(wanted),
      available_(available) {}

std::vector<ReviewPacket> select_review_packets(std::span<const DiagnosisResult> results,
                                                std::span<const PatientRecord> records,
                                                const PromptBundle& dot_bundle, std::size_t n,
                                                std::uint64_t seed) {
  std::map<std::string, const DiagnosisResult*> eligible;
  for (const auto& r : results) {
    if (r.status != ResultStatus::kOk || r.rationales.size() != 3) continue;
    auto strategy = Strategy::from_tag(r.strategy);
    if (!strategy || strategy->kind() != StrategyKind::kDot) continue;
    auto [it, inserted] = eligible.emplace(r.example_id, &r);
    if (!inserted && r.run_index < it->second->run_index) it->second = &r;
  }
  if (eligible.size() < n) throw InsufficientResultsError(n, eligible.size());

  std::vector<const DiagnosisResult*> pool;
  for (const auto& [_, r] : eligible) pool.push_back(r);
  auto perm = seeded_permutation(pool.size(), seed);
  std::vector<const DiagnosisResult*> chosen;
  for (std::size_t i = 0; i < n; ++i) chosen.push_back(pool[perm[i]]);
  std::sort(chosen.begin(), chosen.end(),
            [](const auto* a, const auto* b) { return a->example_id < b->example_id; });

  std::map<std::string, const PatientRecord*> by_id;
  for (const auto& rec : records) by_id[rec.id] = &rec;

  std::vector<ReviewPacket> packets;
  for (const auto* r : chosen) {
    ReviewPacket p;
    p.example_id = r->example_id;
    if (auto it = by_id.find(r->example_id); it != by_id.end()) p.speech = it->second->speech;
    p.prompts.push_back({Role::kSystem, dot_bundle.general_instruction});
    for (const auto& m : r->transcript) {
      if (m.role == Role::kUser) p.prompts.push_back(m);
    }
    if (p.speech.empty() && p.prompts.size() > 1) {
      // Recover the speech from the first user turn: "<speech block>\n\n<questions>".
      const std::string prefix = speech_block("");
      std::string_view first = p.prompts[1].content;
      if (first.starts_with(prefix)) first.remove_prefix(prefix.size());
      p.speech = std::string(first.substr(0, first.find("\n\n")));
    }
    p.rationales = r->rationales;
    packets.push_back(std::move(p));
  }
  return packets;
}

std::string blank_rating_sheet(std::span<const ReviewPacket> packets) {
  std::string out = csv::format_row({"rater_id", "example_id", "stage", "rating"});
  for (const auto& p : packets) {
    for (const auto& [stage, _] : p.rationales) {
      out += csv::format_row({"", p.example_id, std::string(to_string(stage)), ""});
    }
  }
  return out;
}

ExportSummary export_review_packets(std::span<const DiagnosisResult> results,
                                    std::span<const PatientRecord> records,
                                    const PromptBundle& dot_bundle, std::size_t n,
                                    std::uint64_t seed, const std::string& out_dir) {
  auto packets = select_review_packets(results, records, dot_bundle, n, seed);
  std::filesystem::create_directories(out_dir);
  ExportSummary summary;
  std::set<std::string> used;
  for (const auto& p : packets) {
    auto stem = safe_file_stem(p.example_id);
    while (!used.insert(stem).second) stem += "_";
    auto path = (std::filesystem::path(out_dir) / (stem + ".md")).string();
    text::write_file(path, p.render_markdown());
    summary.packet_paths.push_back(path);
    summary.sheet_rows += p.rationales.size();
  }
  summary.sheet_path = (std::filesystem::path(out_dir) / "rating_sheet.csv").string();
  text::write_file(summary.sheet_path, blank_rating_sheet(packets));
  return summary;
}

RatingValidationError::RatingValidationError(std::vector<std::string> problems)
    : std::runtime_error([&] {
        std::string msg = fmt::format("{} rating problem(s):", problems.size());
        for (const auto& p : problems) msg += "\n  " + p;
        return msg;
      }()),
      problems_(std::move(problems)) {}

std::vector<RatingRecord> parse_rating_sheet(std::string_view csv_content) {
  std::vector<csv::Row> rows;
  try {
    rows = csv::parse(csv_content);
  } catch (const csv::ParseError& e) {
    throw RatingValidationError({e.what()});
  }
  if (rows.empty()) throw RatingValidationError({"rating sheet is empty"});

  const auto& header = rows.front().fields;
  auto col = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (text::trim(header[i]) == name) return i;
    }
    return std::nullopt;
  };
  const auto c_rater = col("rater_id"), c_example = col("example_id"), c_stage = col("stage"),
             c_rating = col("rating");
  if (!c_rater || !c_example || !c_stage || !c_rating) {
    throw RatingValidationError({"header must contain rater_id, example_id, stage, rating"});
  }

  std::vector<RatingRecord> out;
  std::vector<std::string> problems;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r].fields;
    const auto where = fmt::format("row {}", r);
    if (f.size() != header.size()) {
      problems.push_back(where + ": expected " + std::to_string(header.size()) + " fields");
      continue;
    }
    RatingRecord rec;
    rec.rater_id = std::string(text::trim(f[*c_rater]));
    rec.example_id = std::string(text::trim(f[*c_example]));
    const auto stage_cell = std::string(text::trim(f[*c_stage]));
    const auto rating_cell = std::string(text::trim(f[*c_rating]));
    bool ok = true;
    if (rec.rater_id.empty()) {
      problems.push_back(where + ": blank rater_id");
      ok = false;
    }
    if (rec.example_id.empty()) {
      problems.push_back(where + ": blank example_id");
      ok = false;
    }
    if (auto s = parse_stage(stage_cell)) {
      rec.stage = *s;
    } else {
      problems.push_back(where + ": unknown stage '" + stage_cell + "'");
      ok = false;
    }
    if (rating_cell.empty()) {
      problems.push_back(where + " (" + rec.example_id + " " + stage_cell + "): blank rating");
      ok = false;
    } else if (auto rt = parse_rating(rating_cell)) {
      rec.rating = *rt;
    } else {
      problems.push_back(where + ": rating '" + rating_cell +
                         "' is not Comprehensive, PartiallyGood or Invalid");
      ok = false;
    }
    if (ok) out.push_back(std::move(rec));
  }
  if (!problems.empty()) throw RatingValidationError(std::move(problems));
  return out;
}

RatingSummary aggregate_ratings(std::span<const RatingRecord> records) {
  using PairKey = std::pair<std::string, Stage>;
  std::map<std::string, std::map<PairKey, Rating>> by_rater;
  std::vector<std::string> problems;
  for (const auto& r : records) {
    auto [it, inserted] = by_rater[r.rater_id].emplace(PairKey{r.example_id, r.stage}, r.rating);
    if (!inserted) {
      problems.push_back(fmt::format("rater {} rated {} {} more than once", r.rater_id,
                                     r.example_id, to_string(r.stage)));
    }
  }
  if (by_rater.size() != 2) {
    throw RatingValidationError(
        {fmt::format("expected exactly 2 raters, found {}", by_rater.size())});
  }
  const auto& [rater_a, ratings_a] = *by_rater.begin();
  const auto& [rater_b, ratings_b] = *std::next(by_rater.begin());
  for (const auto& [key, _] : ratings_a) {
    if (!ratings_b.contains(key)) {
      problems.push_back(fmt::format("{} {} rated by {} but not by {}", key.first,
                                     to_string(key.second), rater_a, rater_b));
    }
  }
  for (const auto& [key, _] : ratings_b) {
    if (!ratings_a.contains(key)) {
      problems.push_back(fmt::format("{} {} rated by {} but not by {}", key.first,
                                     to_string(key.second), rater_b, rater_a));
    }
  }
  if (!problems.empty()) throw RatingValidationError(std::move(problems));

  RatingSummary summary;
  summary.raters = {rater_a, rater_b};
  std::map<Stage, std::array<std::size_t, 3>> counts;  // summed over both raters
  std::map<Stage, std::pair<std::size_t, std::size_t>> agree;  // (same, pairs)
  for (const auto& [key, ra] : ratings_a) {
    const auto rb = ratings_b.at(key);
    ++counts[key.second][static_cast<std::size_t>(ra)];
    ++counts[key.second][static_cast<std::size_t>(rb)];
    auto& [same, pairs] = agree[key.second];
    ++pairs;
    if (ra == rb) ++same;
  }

  std::size_t same_total = 0;
  for (const auto& [stage, c] : counts) {
    StageSummary s;
    s.stage = stage;
    s.pairs = agree[stage].second;
    // Each rater's percentage averaged equals the pooled share over 2 * pairs.
    const double denom = 2.0 * static_cast<double>(s.pairs);
    s.comprehensive = 100.0 * static_cast<double>(c[0]) / denom;
    s.partially_good = 100.0 * static_cast<double>(c[1]) / denom;
    s.invalid = 100.0 * static_cast<double>(c[2]) / denom;
    s.agreement = 100.0 * static_cast<double>(agree[stage].first) / static_cast<double>(s.pairs);
    summary.pairs += s.pairs;
    same_total += agree[stage].first;
    summary.stages.push_back(s);
  }
  summary.agreement =
      summary.pairs == 0 ? 0.0
                         : 100.0 * static_cast<double>(same_total) / static_cast<double>(summary.pairs);
  return summary;
}

json to_json(const RatingSummary& summary) {
  json stages = json::array();
  for (const auto& s : summary.stages) {
    stages.push_back({{"stage", to_string(s.stage)},
                      {"title", stage_title(s.stage)},
                      {"pairs", s.pairs},
                      {"comprehensive_pct", s.comprehensive},
                      {"partially_good_pct", s.partially_good},
                      {"invalid_pct", s.invalid},
                      {"agreement_pct", s.agreement}});
  }
  return {{"raters", summary.raters},
          {"pairs", summary.pairs},
          {"agreement_pct", summary.agreement},
          {"stages", stages}};
}

std::string render_table(const RatingSummary& summary) {
  std::vector<std::string> header = {"Quality"};
  for (const auto& s : summary.stages) header.emplace_back(stage_title(s.stage));
  std::vector<std::vector<std::string>> rows = {header};
  auto add = [&](std::string label, auto getter) {
    std::vector<std::string> row = {std::move(label)};
    for (const auto& s : summary.stages) row.push_back(fmt::format("{:.1f}%", getter(s)));
    rows.push_back(std::move(row));
  };
  add("Comprehensive", [](const StageSummary& s) { return s.comprehensive; });
  add("Partially good", [](const StageSummary& s) { return s.partially_good; });
  add("Invalid", [](const StageSummary& s) { return s.invalid; });
  add("Agreement", [](const StageSummary& s) { return s.agreement; });

  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  std::string out;
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i > 0) line += "  ";
      line += fmt::format("{:<{}}", r[i], width[i]);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  out += fmt::format("pooled agreement: {:.1f}% over {} pairs (raters: {}, {})\n",
                     summary.agreement, summary.pairs, summary.raters[0], summary.raters[1]);
  return out;
}

}  // namespace dotdx::human_eval
