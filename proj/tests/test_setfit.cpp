#include <gtest/gtest.h>

#include "fewshot/setfit.hpp"
#include "fewshot/synthetic.hpp"
#include "fewshot/toy_backend.hpp"
#include "gradcheck.hpp"

using namespace fewshot;

namespace {

Dataset balanced(std::size_t labels, std::size_t per_class) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < labels; ++c) names.push_back("L" + std::to_string(c));
  const LabelSet ls("t", names);
  std::vector<LabeledExample> ex;
  for (std::size_t c = 0; c < labels; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      ex.push_back({{"u " + std::to_string(c) + " " + std::to_string(i), "v " + std::to_string(i)}, names[c]});
    }
  }
  return Dataset(std::move(ex), ls, DatasetKind::train);
}

}  // namespace

TEST(Contrastive, CountAndProvenance) {
  for (std::size_t k = 2; k <= 5; ++k) {
    const auto train = balanced(k, 5);
    for (std::size_t R = 1; R <= 8; ++R) {
      const auto t = generate_contrastive(train, R, R * 31 + k);
      ASSERT_EQ(t.size(), 2 * R * k);
      for (std::size_t i = 0; i < t.size(); ++i) {
        const auto c = i / (2 * R);  // grouped by label, R positives then R negatives
        const bool positive = (i % (2 * R)) < R;
        EXPECT_EQ(t[i].similarity, positive ? 1 : 0);
        EXPECT_NE(t[i].source_a, t[i].source_b);
        EXPECT_EQ(train.label_id(t[i].source_a), c);
        if (positive) {
          EXPECT_EQ(train.label_id(t[i].source_b), c);
        } else {
          EXPECT_NE(train.label_id(t[i].source_b), c);
        }
      }
    }
  }
}

TEST(Contrastive, ClassWithOneExampleIsInfeasible) {
  auto ex = balanced(2, 3).examples();
  ex.pop_back();
  ex.pop_back();
  const Dataset d(ex, LabelSet("t", {"L0", "L1"}), DatasetKind::train);
  EXPECT_THROW(generate_contrastive(d, 2, 0), InfeasibleError);
}

TEST(Contrastive, DeterministicPerSeed) {
  const auto train = balanced(3, 5);
  const auto a = generate_contrastive(train, 6, 1), b = generate_contrastive(train, 6, 1);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].source_b, b[i].source_b);
}

TEST(LogisticHead, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto r = gradcheck::logistic_head(40, seed);
    EXPECT_LT(r.worst_relative, 1e-6) << seed;
  }
}

TEST(LogisticHead, ObjectiveTraceIsMonotone) {
  Rng rng(3);
  std::vector<std::vector<double>> xs(30, std::vector<double>(4));
  std::vector<std::size_t> ys(30);
  for (std::size_t i = 0; i < 30; ++i) {
    for (auto& x : xs[i]) x = rng.normal();
    ys[i] = rng.uniform_index(3);
  }
  LogisticHead h(3, 4);
  h.fit(xs, ys, 1e-3, 200, 1e-9);
  const auto& trace = h.objective_trace();
  ASSERT_GE(trace.size(), 2u);
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1]);
}

TEST(LogisticHead, ShapeErrorsAndJson) {
  LogisticHead h(2, 3);
  EXPECT_THROW(h.logits(std::vector<double>{1, 2}), ShapeError);
  const std::vector<std::vector<double>> xs{{1, 2}};
  const std::vector<std::size_t> ys{0};
  EXPECT_THROW(h.fit(xs, ys, 0, 10, 1e-6), ShapeError);
  h.coefficients()[1] = 0.5;
  const auto back = LogisticHead::from_json(h.to_json());
  EXPECT_EQ(back.coefficients(), h.coefficients());
  auto bad = h.to_json();
  bad["coefficients"].push_back(1.0);
  EXPECT_THROW(LogisticHead::from_json(bad), LoadError);
}

TEST(EncoderGradient, MatchesFiniteDifferences) {
  const auto r = gradcheck::encoder(60, 2);
  EXPECT_LT(r.worst_relative, 1e-4);
}

TEST(SetFit, SeparableTaskAccuracyAndDeterminism) {
  ToyBackend backend;
  for (const char* task : {"so_duplicate", "srs_conflict"}) {
    const auto b = make_synthetic_bundle(task, 200, 400, 0, 5);
    const auto train = sample_training_set(b.pool, 50, 5);
    SetFitConfig cfg;
    cfg.seed = 5;
    const auto m = setfit_fit(cfg, train, backend);
    EXPECT_EQ(m.triplet_count, 2 * cfg.R * train.label_set().size());
    const auto r1 = evaluate_setfit(m, b.test);
    EXPECT_GE(r1.accuracy, 0.85) << task;
    const auto r2 = evaluate_setfit(setfit_fit(cfg, train, backend), b.test);
    EXPECT_EQ(to_json(r1).dump(), to_json(r2).dump());
  }
}

TEST(SetFit, BundleRoundTrip) {
  ToyBackend backend;
  const auto b = make_synthetic_bundle("bugzilla_duplicate", 100, 100, 0, 6);
  const auto train = sample_training_set(b.pool, 20, 6);
  SetFitConfig cfg;
  cfg.R = 3;
  const auto m = setfit_fit(cfg, train, backend);
  const auto back = load_setfit_bundle(nlohmann::json::parse(setfit_bundle(m, backend).dump()), backend);
  EXPECT_EQ(to_json(evaluate_setfit(back, b.test)).dump(), to_json(evaluate_setfit(m, b.test)).dump());
  auto bad = setfit_bundle(m, backend);
  bad["version"] = 99;
  EXPECT_THROW(load_setfit_bundle(bad, backend), LoadError);
}

TEST(SetFit, EpochsToSteps) {
  EXPECT_EQ(epochs_to_steps(40, 16, 1), 3u);
  EXPECT_EQ(epochs_to_steps(32, 16, 2), 4u);
  EXPECT_EQ(epochs_to_steps(0, 16, 3), 0u);
  EXPECT_THROW(epochs_to_steps(1, 0, 1), ConfigError);
}
