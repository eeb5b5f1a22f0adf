#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "dotdx/metrics.hpp"
#include "metric_oracle.hpp"
#include "test_support.hpp"

namespace dotdx::metrics {
namespace {

using D = Distortion;
using testing::make_record;

std::vector<bool> bools(std::initializer_list<int> v) {
  return std::vector<bool>(v.begin(), v.end());
}

double weighted(const std::vector<std::optional<int>>& pred, const std::vector<int>& gold) {
  return weighted_f1<int>(std::span<const std::optional<int>>(pred), std::span<const int>(gold));
}

TEST(BinaryF1, KernelExamples) {
  EXPECT_DOUBLE_EQ(binary_f1(bools({1, 0, 1}), bools({1, 0, 1})), 1.0);
  EXPECT_DOUBLE_EQ(binary_f1(bools({0, 0}), bools({1, 1})), 0.0);
  // TP=2 FP=1 FN=1 TN=3.
  auto pred = bools({1, 1, 1, 0, 0, 0, 0});
  auto gold = bools({1, 1, 0, 1, 0, 0, 0});
  auto c = binary_counts(pred, gold);
  EXPECT_EQ(c.tp, 2u);
  EXPECT_EQ(c.fp, 1u);
  EXPECT_EQ(c.fn, 1u);
  EXPECT_EQ(c.tn, 3u);
  EXPECT_NEAR(binary_f1(pred, gold), 2.0 / 3.0, 1e-12);
}

TEST(BinaryF1, ZeroDenominatorAndErrors) {
  EXPECT_DOUBLE_EQ(binary_f1(bools({0, 0}), bools({0, 0})), 0.0);
  EXPECT_THROW(binary_f1(bools({1}), bools({1, 0})), MetricsError);
  EXPECT_THROW(binary_f1({}, {}), MetricsError);
}

TEST(WeightedF1, KernelExamples) {
  const int A = 0, B = 1;
  std::vector<int> gold = {A, A, B};
  std::vector<std::optional<int>> pred = {A, B, B};
  EXPECT_NEAR(weighted(pred, gold), 2.0 / 3.0, 1e-12);
  auto per = per_class_f1<int>(std::span<const std::optional<int>>(pred), std::span<const int>(gold));
  EXPECT_NEAR(*per.at(A), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(*per.at(B), 2.0 / 3.0, 1e-12);

  std::vector<std::optional<int>> perfect = {A, A, B};
  EXPECT_DOUBLE_EQ(weighted(perfect, gold), 1.0);
  std::vector<std::optional<int>> disjoint = {2, 2, 3};
  EXPECT_DOUBLE_EQ(weighted(disjoint, gold), 0.0);
}

TEST(WeightedF1, AbsentClassesAreUndefined) {
  std::vector<int> gold = {0, 1};
  std::vector<std::optional<int>> pred = {0, 2};
  auto per = per_class_f1<int>(std::span<const std::optional<int>>(pred), std::span<const int>(gold));
  EXPECT_FALSE(per.at(2).has_value());  // predicted only: no gold support
  EXPECT_FALSE(per.contains(3));        // in neither
  EXPECT_DOUBLE_EQ(*per.at(1), 0.0);
}

TEST(WeightedF1, MissingPredictionIsOnlyAMiss) {
  std::vector<int> gold = {0, 0};
  std::vector<std::optional<int>> pred = {0, std::nullopt};
  auto counts = one_vs_rest_counts<int>(std::span<const std::optional<int>>(pred),
                                        std::span<const int>(gold));
  EXPECT_EQ(counts.size(), 1u);
  EXPECT_EQ(counts.at(0).tp, 1u);
  EXPECT_EQ(counts.at(0).fn, 1u);
  EXPECT_EQ(counts.at(0).fp, 0u);
}

TEST(WeightedF1, Errors) {
  std::vector<int> gold = {0};
  std::vector<std::optional<int>> pred = {0, 1};
  EXPECT_THROW(weighted(pred, gold), MetricsError);
  EXPECT_THROW(weighted({}, {}), MetricsError);
}

TEST(Aggregate, KernelExamples) {
  std::vector<double> v = {1, 2, 3, 4, 5};
  auto a = aggregate_runs(v);
  EXPECT_DOUBLE_EQ(a.mean, 3.0);
  EXPECT_NEAR(a.std, std::sqrt(2.0), 1e-12);
  std::vector<double> same = {0.7, 0.7, 0.7};
  EXPECT_EQ(aggregate_runs(same).std, 0.0);
  std::vector<double> one = {0.42};
  EXPECT_EQ(aggregate_runs(one), (MeanStd{0.42, 0.0}));
  EXPECT_THROW(aggregate_runs({}), MetricsError);
}

TEST(Format, MeanStdAsPercent) {
  EXPECT_EQ(format_mean_std({0.8119, 0.0011}), "81.19 (0.11)");
  EXPECT_EQ(format_mean_std({1.0, 0.0}), "100.00 (0.00)");
}

// Property: random fixtures agree with the brute-force oracle.
TEST(Metrics, PropertyMatchesBruteForceOracle) {
  std::mt19937_64 rng(99);
  for (int iter = 0; iter < 500; ++iter) {
    auto f = testing::random_fixture(rng);
    std::vector<std::optional<int>> pred;
    for (int p : f.pred) pred.push_back(p < 0 ? std::nullopt : std::optional<int>(p));
    EXPECT_NEAR(weighted(pred, f.gold), testing::oracle_weighted_f1(f), 1e-12);
    auto per = per_class_f1<int>(std::span<const std::optional<int>>(pred), std::span<const int>(f.gold));
    for (int c = 0; c < f.classes; ++c) {
      auto expected = testing::oracle_class_f1(f, c);
      auto it = per.find(c);
      if (!expected) {
        EXPECT_TRUE(it == per.end() || !it->second.has_value());
      } else {
        ASSERT_NE(it, per.end());
        EXPECT_NEAR(*it->second, *expected, 1e-12);
      }
    }
    std::vector<bool> bp, bg;
    for (std::size_t i = 0; i < f.gold.size(); ++i) {
      bg.push_back(f.gold[i] == 0);
      bp.push_back(f.pred[i] == 0);
    }
    EXPECT_NEAR(binary_f1(bp, bg), testing::oracle_binary_f1(bp, bg), 1e-12);
  }
}

// Property: shuffling pairs changes nothing; weighted lies within the
// per-class range.
TEST(Metrics, PropertyPermutationInvarianceAndBounds) {
  std::mt19937_64 rng(7);
  for (int iter = 0; iter < 300; ++iter) {
    auto f = testing::random_fixture(rng, 20, 6);
    std::vector<std::optional<int>> pred;
    for (int p : f.pred) pred.push_back(p < 0 ? std::nullopt : std::optional<int>(p));
    const double w = weighted(pred, f.gold);

    std::vector<std::size_t> idx(f.gold.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<int> g2;
    std::vector<std::optional<int>> p2;
    for (auto i : idx) {
      g2.push_back(f.gold[i]);
      p2.push_back(pred[i]);
    }
    EXPECT_NEAR(weighted(p2, g2), w, 1e-12);

    double lo = 1.0, hi = 0.0;
    for (const auto& [c, v] : per_class_f1<int>(std::span<const std::optional<int>>(pred),
                                                 std::span<const int>(f.gold))) {
      if (!v) continue;
      lo = std::min(lo, *v);
      hi = std::max(hi, *v);
    }
    EXPECT_GE(w, lo - 1e-12);
    EXPECT_LE(w, hi + 1e-12);
  }
}

// Property: flipping one FN to TP never lowers binary F-1.
TEST(Metrics, PropertyBinaryMonotone) {
  std::mt19937_64 rng(13);
  for (int iter = 0; iter < 300; ++iter) {
    const auto n = 1 + rng() % 15;
    std::vector<bool> pred, gold;
    for (std::size_t i = 0; i < n; ++i) {
      pred.push_back(rng() % 2);
      gold.push_back(rng() % 2);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (gold[i] && !pred[i]) {
        auto flipped = pred;
        flipped[i] = true;
        EXPECT_GE(binary_f1(flipped, gold), binary_f1(pred, gold));
      }
    }
  }
}

// --- scoring -------------------------------------------------------------------

DiagnosisResult answer(std::string id, int run, Assessment a, std::vector<D> labels) {
  DiagnosisResult r;
  r.example_id = std::move(id);
  r.strategy = "dot:s1+s2+s3:sequential";
  r.run_index = run;
  r.assessment = a;
  r.classification_unparseable = labels.empty();
  r.predicted_labels = std::move(labels);
  return r;
}

std::vector<PatientRecord> four_golds() {
  return {make_record("r1", "s", {D::kMindReading}),
          make_record("r2", "s", {D::kLabeling, D::kOvergeneralization}),
          make_record("r3", "s"), make_record("r4", "s", {D::kPersonalization})};
}

// Hand-worked fixture. Run 1:
//   r1 yes [MR]      gold MR
//   r2 no  [Overgen] gold {Labeling, Overgen}
//   r3 yes [Labeling] gold none
//   r4 unparseable [] gold Personalization
// Assessment: TP=1 (r1) FP=1 (r3) FN=2 (r2, r4) -> 2/(2+1+2) = 0.4.
// Lenient classification over r1, r2, r4: MR 1, Overgen 1, Pers 0 -> 2/3.
// Strict: r2 becomes Labeling vs Overgen -> MR 1, Labeling 0, Pers 0 -> 1/3.
// Run 2 is all correct: 1.0 and 1.0.
std::vector<DiagnosisResult> four_results() {
  return {answer("r1", 1, Assessment::kYes, {D::kMindReading}),
          answer("r2", 1, Assessment::kNo, {D::kOvergeneralization}),
          answer("r3", 1, Assessment::kYes, {D::kLabeling}),
          answer("r4", 1, Assessment::kUnparseable, {}),
          answer("r1", 2, Assessment::kYes, {D::kMindReading}),
          answer("r2", 2, Assessment::kYes, {D::kLabeling}),
          answer("r3", 2, Assessment::kNo, {}),
          answer("r4", 2, Assessment::kYes, {D::kPersonalization})};
}

TEST(Score, HandComputedFixtureLenient) {
  auto golds = four_golds();
  auto results = four_results();
  auto rep = score(results, golds);
  ASSERT_EQ(rep.per_run.size(), 2u);
  EXPECT_NEAR(rep.per_run[0].assessment_f1, 0.4, 1e-12);
  EXPECT_EQ(rep.per_run[0].unparseable_assessments, 1u);
  EXPECT_EQ(rep.per_run[0].classification_examples, 3u);
  EXPECT_NEAR(rep.per_run[0].classification_weighted_f1, 2.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(rep.per_run[1].assessment_f1, 1.0);
  EXPECT_DOUBLE_EQ(rep.per_run[1].classification_weighted_f1, 1.0);
  EXPECT_NEAR(rep.assessment_f1.mean, 0.7, 1e-12);
  EXPECT_NEAR(rep.assessment_f1.std, 0.3, 1e-12);
  EXPECT_NEAR(rep.classification_weighted_f1.mean, 5.0 / 6.0, 1e-12);
  EXPECT_NEAR(rep.classification_weighted_f1.std, 1.0 / 6.0, 1e-12);

  const auto& pers = rep.per_run[0].per_class[static_cast<int>(D::kPersonalization)];
  EXPECT_EQ(pers.name, "Personalization");
  EXPECT_EQ(pers.f1, 0.0);
  EXPECT_FALSE(rep.per_run[0].per_class[static_cast<int>(D::kFortuneTelling)].f1.has_value());
  EXPECT_EQ(rep.per_run[0].per_class.size(), 10u);
}

TEST(Score, HandComputedFixtureStrict) {
  auto golds = four_golds();
  auto results = four_results();
  ScoringPolicy strict;
  strict.alignment = Alignment::kStrict;
  auto rep = score(results, golds, strict);
  EXPECT_NEAR(rep.per_run[0].classification_weighted_f1, 1.0 / 3.0, 1e-12);
  // Overgeneralization is predicted but has no gold support in this run.
  EXPECT_FALSE(rep.per_run[0].per_class[static_cast<int>(D::kOvergeneralization)].f1.has_value());
}

TEST(Score, NoDistortionClassOption) {
  auto golds = four_golds();
  auto results = four_results();
  ScoringPolicy policy;
  policy.include_no_distortion_class = true;
  auto rep = score(results, golds, policy);
  // r1 MR->MR, r2 Labeling->none (assessed no), r3 none->Labeling,
  // r4 Pers->none: only MR scores, 1 of 4 support.
  EXPECT_EQ(rep.per_run[0].classification_examples, 4u);
  EXPECT_NEAR(rep.per_run[0].classification_weighted_f1, 0.25, 1e-12);
  EXPECT_DOUBLE_EQ(rep.per_run[1].classification_weighted_f1, 1.0);
  EXPECT_EQ(rep.per_run[0].per_class.size(), 11u);
  EXPECT_EQ(rep.per_run[0].per_class.back().name, "No distortion");
}

TEST(Score, SkipsAndFailuresExcludedAndCounted) {
  auto golds = four_golds();
  auto results = four_results();
  results[1].status = ResultStatus::kSkippedTokenLimit;
  results[1].assessment.reset();
  results[1].predicted_labels.reset();
  results[3].status = ResultStatus::kFailed;
  auto rep = score(results, golds);
  EXPECT_EQ(rep.skipped, 1u);
  EXPECT_EQ(rep.failed, 1u);
  EXPECT_EQ(rep.per_run[0].assessment_examples, 2u);
  // r1 TP, r3 FP -> 2/3; classification over r1 only -> 1.
  EXPECT_NEAR(rep.per_run[0].assessment_f1, 2.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(rep.per_run[0].classification_weighted_f1, 1.0);
}

TEST(Score, IdenticalRunsHaveZeroStd) {
  auto golds = four_golds();
  auto results = four_results();
  for (auto& r : results) {
    if (r.run_index == 2) r = answer(r.example_id, 2, Assessment::kYes, {D::kMindReading});
  }
  for (std::size_t i = 0; i < 4; ++i) {
    results[4 + i] = results[i];
    results[4 + i].run_index = 2;
  }
  auto rep = score(results, golds);
  EXPECT_EQ(rep.assessment_f1.std, 0.0);
  EXPECT_EQ(rep.classification_weighted_f1.std, 0.0);
}

TEST(Score, DeterministicAndOrderFree) {
  auto golds = four_golds();
  auto results = four_results();
  auto a = to_json(score(results, golds));
  std::reverse(results.begin(), results.end());
  auto b = to_json(score(results, golds));
  EXPECT_EQ(a.dump(), b.dump());
}

TEST(Score, Errors) {
  auto golds = four_golds();
  auto results = four_results();
  for (auto& r : results) r.status = ResultStatus::kSkippedTokenLimit;
  try {
    score(results, golds);
    FAIL();
  } catch (const MetricsError& e) {
    EXPECT_NE(std::string(e.what()).find("empty evaluation set"), std::string::npos);
  }
  auto orphan = four_results();
  orphan[0].example_id = "zz";
  EXPECT_THROW(score(orphan, golds), MetricsError);
  EXPECT_THROW(score({}, golds), MetricsError);
}

TEST(Report, TableAndCsvShapes) {
  auto golds = four_golds();
  auto results = four_results();
  auto rep = score(results, golds, {}, "gpt-3.5-turbo");
  auto text = render_report(rep);
  EXPECT_NE(text.find("ChatGPT + DoT"), std::string::npos);
  EXPECT_NE(text.find("70.00 (30.00)"), std::string::npos);
  EXPECT_NE(text.find("81.19 (0.11)"), std::string::npos);  // published column
  auto csv = per_class_csv(rep);
  EXPECT_TRUE(csv.starts_with("class,run_1,run_2,mean,std\n"));
  EXPECT_NE(csv.find("Personalization,0.000000,1.000000,0.500000,0.500000"), std::string::npos);
  EXPECT_NE(csv.find("Fortune-telling,,,,"), std::string::npos);
}

TEST(Report, MethodLabels) {
  EXPECT_EQ(method_label("gpt-3.5-turbo", Strategy::direct()), "ChatGPT");
  EXPECT_EQ(method_label("gpt-4", Strategy::zero_shot_cot()), "GPT-4 + ZCoT");
  EXPECT_EQ(method_label("gpt-3.5-turbo", Strategy::dot(2)), "ChatGPT + S1 + S2");
  EXPECT_EQ(method_label("local-model", Strategy::dot(3)), "local-model + DoT");
  EXPECT_FALSE(published_reference("local-model", Strategy::dot(3)).has_value());
}

}  // namespace
}  // namespace dotdx::metrics
