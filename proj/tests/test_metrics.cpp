#include <gtest/gtest.h>

#include <cmath>

#include "fewshot/classifier_ops.hpp"
#include "fewshot/metrics.hpp"
#include "fewshot/random.hpp"
#include "metrics_oracle.hpp"

using namespace fewshot;

namespace {
LabelSet ab() { return LabelSet("t", {"A", "B"}); }
}  // namespace

TEST(Metrics, HandCase) {
  const std::vector<std::string> golds{"A", "A", "A", "B"}, preds{"A", "A", "B", "B"};
  const auto r = report(confusion(golds, preds, ab()));
  EXPECT_DOUBLE_EQ(r.accuracy, 0.75);
  // F1(A) = 0.8, F1(B) = 2/3
  EXPECT_NEAR(r.macro_f1, (0.8 + 2.0 / 3.0) / 2.0, 1e-15);
  EXPECT_NEAR(r.weighted_f1, 0.8 * 0.75 + 2.0 / 3.0 * 0.25, 1e-15);
  EXPECT_NEAR(r.macro_f1, 0.7333, 1e-4);
  EXPECT_NEAR(r.weighted_f1, 0.7667, 1e-4);
  EXPECT_EQ(r.per_class[0].support, 3u);
}

TEST(Metrics, MatchesBruteForceOn200RandomFixtures) {
  Rng rng(2024);
  for (int fixture = 0; fixture < 200; ++fixture) {
    const std::size_t k = 2 + rng.uniform_index(4);
    const std::size_t n = 1 + rng.uniform_index(60);
    std::vector<std::string> names;
    for (std::size_t c = 0; c < k; ++c) names.push_back("L" + std::to_string(c));
    const LabelSet labels("t", names);
    std::vector<std::size_t> g(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = rng.uniform_index(k);
      p[i] = rng.coin() ? g[i] : rng.uniform_index(k);
    }
    const auto r = report(confusion_from_ids(g, p, labels));
    const auto o = oracle::brute_force(g, p, k);
    ASSERT_NEAR(r.accuracy, o.accuracy, 1e-12) << fixture;
    ASSERT_NEAR(r.macro_f1, o.macro_f1, 1e-12) << fixture;
    ASSERT_NEAR(r.weighted_f1, o.weighted_f1, 1e-12) << fixture;
  }
}

TEST(Metrics, ZeroDivisionIsZero) {
  // Label B never predicted and never gold.
  const auto r = report(confusion_from_ids(std::vector<std::size_t>{0, 0}, std::vector<std::size_t>{0, 0}, ab()));
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(r.per_class[1].f1, 0.0);
  EXPECT_DOUBLE_EQ(r.macro_f1, 0.5);
  EXPECT_DOUBLE_EQ(r.weighted_f1, 1.0);
}

TEST(Metrics, Errors) {
  const std::vector<std::string> one{"A"}, two{"A", "B"};
  EXPECT_THROW(confusion(one, two, ab()), ShapeError);
  const std::vector<std::string> none;
  EXPECT_THROW(report(confusion(none, none, ab())), EmptyEvalError);
  const std::vector<std::string> lower{"a"};
  EXPECT_THROW(confusion(lower, one, ab()), UnknownLabelError);
  EXPECT_THROW(metric_value(EvalReport{}, "bleu"), ConfigError);
}

TEST(Replicates, SampleStdAndZeroForSingleReplicate) {
  auto rep = [](double acc) {
    auto r = report(confusion_from_ids(std::vector<std::size_t>{0, 1}, std::vector<std::size_t>{0, 1}, ab()));
    r.accuracy = acc;
    return r;
  };
  const std::vector<EvalReport> three{rep(0.8), rep(0.9), rep(1.0)};
  const auto s = aggregate_replicates(three);
  EXPECT_NEAR(s.accuracy.mean, 0.9, 1e-15);
  EXPECT_NEAR(s.accuracy.std, 0.1, 1e-15);
  const std::vector<EvalReport> one{rep(0.7)};
  EXPECT_EQ(aggregate_replicates(one).accuracy.std, 0.0);
  EXPECT_THROW(aggregate_replicates(std::vector<EvalReport>{}), EmptyEvalError);
}

TEST(Formatting, MeanStdToOneDecimalPercent) {
  EXPECT_EQ(format_mean_std({0.9066, 0.0138}), "90.7±1.4");
  EXPECT_EQ(format_mean_std({0.96, 0.002}), "96.0±0.2");
  EXPECT_EQ(format_mean_std({1.0, 0.0}), "100.0±0.0");
}

TEST(Json, EvalReportAndSummaryRoundTrip) {
  const auto r = report(confusion_from_ids(std::vector<std::size_t>{0, 1, 1}, std::vector<std::size_t>{0, 0, 1}, ab()));
  EXPECT_EQ(eval_report_from_json(to_json(r)), r);
  const std::vector<EvalReport> rs{r, r};
  const auto s = aggregate_replicates(rs);
  const auto back = replicate_summary_from_json(to_json(s));
  EXPECT_EQ(back.accuracy.mean, s.accuracy.mean);
  EXPECT_EQ(back.macro_f1.std, s.macro_f1.std);
  EXPECT_EQ(back.replicates, s.replicates);
}
