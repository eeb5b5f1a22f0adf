#include <gtest/gtest.h>

#include <random>
#include <set>

#include "dotdx/dataset.hpp"
#include "dotdx/text.hpp"
#include "test_support.hpp"

namespace dotdx {
namespace {

using testing::TempDir;

TEST(Dataset, LoadsWellFormedRows) {
  const std::string csv =
      "id,speech,distortion_1,distortion_2,split\n"
      "a,I always fail.,Overgeneralization,,\n"
      "b,They think I'm dumb.,Mind Reading,Labeling,\n"
      "c,Nice day.,,,\n"
      "d,It's all my fault.,Personalization,,\n"
      "e,I'll fail tomorrow.,fortune telling,,\n";
  auto res = parse_dataset(csv);
  ASSERT_EQ(res.records.size(), 5u);
  EXPECT_TRUE(res.rejects.empty());
  EXPECT_EQ(res.records[1].gold_labels,
            (std::vector<Distortion>{Distortion::kMindReading, Distortion::kLabeling}));
  EXPECT_FALSE(res.records[2].has_distortion);
  EXPECT_TRUE(res.records[2].gold_labels.empty());
  EXPECT_EQ(res.records[4].gold_labels.front(), Distortion::kFortuneTelling);
}

TEST(Dataset, RecordInvariantsHold) {
  auto res = parse_dataset(testing::sample_csv());
  ASSERT_EQ(res.records.size(), 10u);
  for (const auto& r : res.records) {
    EXPECT_EQ(r.has_distortion, !r.gold_labels.empty());
    EXPECT_LE(r.gold_labels.size(), 2u);
    std::set<Distortion> uniq(r.gold_labels.begin(), r.gold_labels.end());
    EXPECT_EQ(uniq.size(), r.gold_labels.size());
    EXPECT_FALSE(text::trim(r.speech).empty());
  }
}

TEST(Dataset, RejectsAreReportedPerRowAndLoadContinues) {
  const std::string csv =
      "id,speech,distortion_1,distortion_2,split\n"
      "a,ok speech,Catastrophizing,,\n"
      "b,   ,Labeling,,\n"
      "c,fine,,Labeling,\n"
      "d,fine,Labeling,,sometimes\n"
      "e,fine,Labeling,,\n"
      "e,again,Labeling,,\n"
      "f,dup label,Labeling,labeling,\n";
  auto res = parse_dataset(csv);
  ASSERT_EQ(res.records.size(), 2u);
  EXPECT_EQ(res.records[0].id, "e");
  EXPECT_EQ(res.records[1].gold_labels.size(), 1u);  // duplicate collapsed
  ASSERT_EQ(res.rejects.size(), 5u);
  EXPECT_EQ(res.rejects[0].row, 1u);
  EXPECT_NE(res.rejects[0].reason.find("Catastrophizing"), std::string::npos);
  EXPECT_EQ(res.rejects[1].reason, "empty speech");
  EXPECT_NE(res.rejects[2].reason.find("without a primary"), std::string::npos);
  EXPECT_NE(res.rejects[3].reason.find("split"), std::string::npos);
  EXPECT_NE(res.rejects[4].reason.find("duplicate"), std::string::npos);

  auto report = rejects_csv(res.rejects);
  EXPECT_TRUE(report.starts_with("row,reason\n1,"));
}

TEST(Dataset, ErrorsForMissingFileAndMalformedCsv) {
  EXPECT_THROW(load_dataset("/nonexistent/data.csv"), DatasetError);
  try {
    parse_dataset("id,speech,distortion_1\na,\"unterminated,x\n");
    FAIL();
  } catch (const DatasetError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
  }
  try {
    parse_dataset("id,speech,distortion_1\na,b\n");
    FAIL();
  } catch (const DatasetError& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_dataset("id,text\n"), DatasetError);
}

TEST(Dataset, KaggleSchemaMapping) {
  const std::string csv =
      "Id_Number,Patient Question,Distorted part,Dominant Distortion,Secondary Distortion (Optional)\n"
      "4500,\"I feel like my friends hate me.\",\"friends hate me\",Mind Reading,\n"
      "4501,I enjoyed the concert.,,No Distortion,\n"
      "4502,I'm a failure.,,Labeling,Overgeneralization\n";
  auto res = parse_dataset(csv, SchemaMapping::kaggle());
  ASSERT_EQ(res.records.size(), 3u);
  EXPECT_EQ(res.records[0].id, "4500");
  EXPECT_FALSE(res.records[1].has_distortion);
  EXPECT_EQ(res.records[2].gold_labels.size(), 2u);
}

TEST(Dataset, SchemaFileBindsColumns) {
  TempDir dir;
  text::write_file(dir.file("schema.conf"),
                   "id = key\nspeech = text\nlabel_1 = main\nlabel_2 =\nsplit =\n"
                   "none_markers = none | n/a\n");
  auto schema = SchemaMapping::load(dir.file("schema.conf"));
  auto res = parse_dataset("key,text,main\nx,hello,n/a\ny,bye,Labeling\n", schema);
  ASSERT_EQ(res.records.size(), 2u);
  EXPECT_FALSE(res.records[0].has_distortion);
  EXPECT_TRUE(res.records[1].has_distortion);
}

TEST(Split, ArithmeticAndDeterminism) {
  auto res = parse_dataset(testing::sample_csv());
  auto a = split(res.records, 0.8, 7);
  EXPECT_EQ(a.train.size(), 8u);
  EXPECT_EQ(a.test.size(), 2u);
  EXPECT_FALSE(a.from_split_column);
  auto b = split(res.records, 0.8, 7);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
}

TEST(Split, SplitColumnOverridesSeed) {
  std::string csv = "id,speech,distortion_1,distortion_2,split\n";
  std::size_t expected_test = 0;
  for (int i = 0; i < 20; ++i) {
    const bool test = i % 3 == 0;
    expected_test += test;
    csv += "r" + std::to_string(i) + ",speech " + std::to_string(i) + ",,," +
           (test ? "test" : (i % 2 ? "train" : "")) + "\n";
  }
  auto res = parse_dataset(csv);
  for (std::uint64_t seed : {1u, 2u, 99u}) {
    auto s = split(res.records, 0.8, seed);
    EXPECT_TRUE(s.from_split_column);
    EXPECT_EQ(s.test.size(), expected_test);
    EXPECT_EQ(s.train.size(), 20u - expected_test);
  }
}

TEST(Split, Errors) {
  EXPECT_THROW(split({}, 0.8, 1), DatasetError);
  auto res = parse_dataset(testing::sample_csv());
  EXPECT_THROW(split(res.records, 0.0, 1), DatasetError);
  EXPECT_THROW(split(res.records, 1.0, 1), DatasetError);
}

// Property: partition, disjointness, size and determinism for random sizes.
TEST(Split, PropertyPartition) {
  std::mt19937_64 rng(5);
  for (int iter = 0; iter < 50; ++iter) {
    const auto n = 1 + rng() % 60;
    std::vector<PatientRecord> recs;
    for (std::size_t i = 0; i < n; ++i) {
      recs.push_back(testing::make_record("id" + std::to_string(i), "s"));
    }
    const double frac = 0.05 + 0.9 * static_cast<double>(rng() % 1000) / 1000.0;
    const auto seed = rng();
    auto s = split(recs, frac, seed);
    EXPECT_EQ(s.train.size(), static_cast<std::size_t>(std::llround(frac * static_cast<double>(n))));
    std::set<std::string> ids;
    for (const auto& r : s.train) ids.insert(r.id);
    for (const auto& r : s.test) EXPECT_FALSE(ids.contains(r.id));
    for (const auto& r : s.test) ids.insert(r.id);
    EXPECT_EQ(ids.size(), n);
    EXPECT_EQ(split(recs, frac, seed).test, s.test);
  }
}

// Property: JSONL sidecar round-trips arbitrary records exactly.
TEST(Jsonl, PropertyRoundTrip) {
  std::mt19937_64 rng(11);
  const std::vector<std::string> chars = {"a", "b", "c", " ", "X", ",", "\"", "\n", "\t", "\\",
                                          "\xe2\x80\x99", "\xc3\xa9"};
  for (int iter = 0; iter < 30; ++iter) {
    std::vector<PatientRecord> recs;
    const auto n = rng() % 8;
    for (std::size_t i = 0; i < n; ++i) {
      PatientRecord r;
      r.id = "id" + std::to_string(rng() % 1000) + "_" + std::to_string(i);
      for (int k = 0; k < 1 + static_cast<int>(rng() % 30); ++k) {
        r.speech += chars[rng() % chars.size()];
      }
      const auto labels = rng() % 3;
      for (std::size_t k = 0; k < labels; ++k) {
        auto d = static_cast<Distortion>(rng() % kDistortionCount);
        if (std::find(r.gold_labels.begin(), r.gold_labels.end(), d) == r.gold_labels.end()) {
          r.gold_labels.push_back(d);
        }
      }
      r.has_distortion = !r.gold_labels.empty();
      r.split_tag = static_cast<SplitTag>(rng() % 3);
      recs.push_back(r);
    }
    EXPECT_EQ(from_jsonl(to_jsonl(recs)), recs);
  }
}

TEST(Dataset, InvalidUtf8IsReplaced) {
  auto res = parse_dataset("id,speech,distortion_1\na,caf\xe9 time,\n");
  ASSERT_EQ(res.records.size(), 1u);
  EXPECT_EQ(res.records[0].speech, "caf\xEF\xBF\xBD time");
  EXPECT_NO_THROW(to_jsonl(res.records));
}

TEST(Jsonl, LoadedCsvRoundTrips) {
  auto res = parse_dataset(testing::sample_csv());
  EXPECT_EQ(from_jsonl(to_jsonl(res.records)), res.records);
  EXPECT_THROW(from_jsonl("{not json}\n"), DatasetError);
}

TEST(Sanity, ReportCountsAndBalance) {
  auto res = parse_dataset(testing::sample_csv());
  auto rep = sanity_report(res.records);
  EXPECT_EQ(rep.record_count, 10u);
  EXPECT_EQ(rep.distorted_count, 7u);
  EXPECT_DOUBLE_EQ(rep.distorted_fraction, 0.7);
  std::size_t tokens = 0;
  for (const auto& r : res.records) tokens += text::split_whitespace(r.speech).size();
  EXPECT_DOUBLE_EQ(rep.mean_tokens, static_cast<double>(tokens) / 10.0);
  // 7 distinct primaries over 10 classes: max 1 vs mean 0.7.
  EXPECT_NEAR(rep.max_class_to_mean_ratio, 1.0 / 0.7, 1e-12);
  EXPECT_TRUE(rep.labels_roughly_balanced());
  EXPECT_NE(render(rep).find("records:            10"), std::string::npos);
}

}  // namespace
}  // namespace dotdx
