#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fewshot/finetune.hpp"
#include "fewshot/log.hpp"
#include "fewshot/pet.hpp"
#include "fewshot/synthetic.hpp"
#include "fewshot/toy_backend.hpp"
#include "pet_oracles.hpp"

using namespace fewshot;
using pet_oracle::member;

namespace {

const SentencePair kPair{"a question", "another question"};
const LabelSet kLabels = builtin_label_set("so_duplicate");

std::vector<double> aggregate(const std::vector<EnsembleMember>& ms) {
  return aggregate_scores(ms, kPair, kLabels, InputFormat{});
}

PetConfig small_config(const std::string& task) {
  PetConfig c;
  c.pvps = builtin_pvps(task);
  c.mlm_steps = 200;
  c.distill_steps = 400;
  return c;
}

}  // namespace

TEST(Soften, OracleValue) {
  const auto p = soften(std::vector<double>{2.0, 0.0}, 2.0);
  const double e = std::exp(1.0);
  EXPECT_NEAR(p[0], e / (1 + e), 1e-9);
  EXPECT_NEAR(p[1], 1 / (1 + e), 1e-9);
}

TEST(Soften, ArgmaxPreservingAndShiftInvariant) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> s(2 + rng.uniform_index(4));
    for (auto& x : s) x = 10 * rng.normal();
    const double t = 0.1 + 5 * rng.uniform01();
    const auto p = soften(s, t);
    EXPECT_EQ(argmax(p), argmax(s));
    auto shifted = s;
    const double c = 100 * rng.normal();
    for (auto& x : shifted) x += c;
    const auto q = soften(shifted, t);
    for (std::size_t k = 0; k < s.size(); ++k) ASSERT_NEAR(p[k], q[k], 1e-12);
  }
}

TEST(Soften, RejectsBadTemperature) {
  EXPECT_THROW(soften(std::vector<double>{1.0, 2.0}, 0.0), NumericError);
  EXPECT_THROW(soften(std::vector<double>{1.0, 2.0}, -1.0), NumericError);
}

TEST(Aggregate, WeightedMeanOracle) {
  const auto s = aggregate({member({0, 1}, 1), member({1, 0}, 3)});
  EXPECT_EQ(s, (std::vector<double>{0.75, 0.25}));
}

TEST(Aggregate, InvariantUnderRescalingAndZeroWeightMembers) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<EnsembleMember> ms;
    const auto n = 1 + rng.uniform_index(5);
    for (std::size_t i = 0; i < n; ++i) ms.push_back(member({rng.normal(), rng.normal()}, 0.1 + rng.uniform01()));
    const auto base = aggregate(ms);
    auto scaled = ms;
    const double c = 0.01 + 100 * rng.uniform01();
    for (auto& m : scaled) m.weight *= c;
    auto padded = ms;
    padded.insert(padded.begin() + static_cast<std::ptrdiff_t>(rng.uniform_index(n + 1)),
                  member({1e6, -1e6}, 0.0));
    const auto a = aggregate(scaled), b = aggregate(padded);
    for (std::size_t k = 0; k < 2; ++k) {
      ASSERT_NEAR(a[k], base[k], 1e-12);
      ASSERT_NEAR(b[k], base[k], 1e-12);
    }
  }
}

TEST(Aggregate, AllZeroWeightsFallBackToUniformWithWarning) {
  std::vector<std::string> warnings;
  auto previous = set_warning_sink([&](std::string_view w) { warnings.emplace_back(w); });
  const auto s = aggregate({member({0, 1}, 0), member({1, 0}, 0)});
  set_warning_sink(previous);
  EXPECT_EQ(s, (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(Aggregate, EmptyEnsembleAndBadWeights) {
  EXPECT_THROW(aggregate({}), EmptyEnsembleError);
  EXPECT_THROW(aggregate({member({0, 1}, -1)}), NumericError);
}

TEST(TrainEnsemble, WeightIsUntrainedAccuracy) {
  ToyBackend backend;
  const auto train = make_synthetic_task("so_duplicate", 30, 1);
  auto cfg = small_config("so_duplicate");
  cfg.seeds = {4};
  const auto members = train_ensemble(cfg, train, backend);
  ASSERT_EQ(members.size(), 3u);
  const auto format = InputFormat::for_backend(backend, cfg.max_len);
  for (const auto& m : members) {
    EnsembleMember fresh{m.pvp, m.seed, backend.make_scorer(m.seed), 0.0};
    EXPECT_EQ(m.weight, untrained_accuracy(fresh, train, format));
    EXPECT_GE(m.weight, 0.0);
    EXPECT_LE(m.weight, 1.0);
  }
}

TEST(TrainEnsemble, ParallelMembersMatchSequential) {
  ToyBackend backend;
  const auto train = make_synthetic_task("srs_conflict", 30, 2);
  auto cfg = small_config("srs_conflict");
  cfg.seeds = {1, 2};
  const auto seq = train_ensemble(cfg, train, backend);
  cfg.workers = 4;
  const auto par = train_ensemble(cfg, train, backend);
  ASSERT_EQ(seq.size(), par.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    EXPECT_EQ(seq[i].weight, par[i].weight);
    EXPECT_EQ(seq[i].model->save(), par[i].model->save());
  }
}

TEST(TrainEnsemble, UnknownVerbalizerTokenFailsBeforeTraining) {
  ToyBackend backend;
  auto cfg = small_config("so_duplicate");
  cfg.pvps[1].verbalizer = Verbalizer({{"Neutral", "Nope"}, {"Duplicate", "Yep"}});
  EXPECT_THROW(train_ensemble(cfg, make_synthetic_task("so_duplicate", 10, 1), backend), VocabularyError);
}

TEST(Distill, SoftLabelsAreDistributionsAndRowsIncludeLabeledData) {
  ToyBackend backend;
  const auto train = make_synthetic_task("bugzilla_entailment", 20, 3);
  const auto unlabeled = make_synthetic_task("bugzilla_entailment", 40, 4, DatasetKind::unlabeled);
  auto cfg = small_config("bugzilla_entailment");
  const auto members = train_ensemble(cfg, train, backend);
  const auto out = distill(members, train, unlabeled, cfg, backend);
  ASSERT_EQ(out.soft_labeled.size(), 40u);
  for (const auto& s : out.soft_labeled) EXPECT_NO_THROW(check_distribution(s.distribution));
}

TEST(Distill, WithNoUnlabeledDataEqualsFinetuning) {
  ToyBackend backend;
  const auto bundle = make_synthetic_bundle("srs_conflict", 200, 200, 0, 6);
  const auto train = sample_training_set(bundle.pool, 40, 6);
  auto cfg = small_config("srs_conflict");
  cfg.classifier_seed = 17;
  const auto members = train_ensemble(cfg, train, backend);
  const Dataset none({}, train.label_set(), DatasetKind::unlabeled);
  const auto out = distill(members, train, none, cfg, backend);

  FinetuneConfig ft;
  ft.steps = cfg.distill_steps;
  ft.batch = cfg.batch;
  ft.seed = cfg.classifier_seed;
  const auto clf = finetune(ft, train, backend);
  const auto format = InputFormat::for_backend(backend, cfg.max_len);
  for (const auto& ex : bundle.test.examples()) {
    EXPECT_EQ(classify_pair(*out.classifier, ex.pair, train.label_set(), format).scores,
              classify_pair(*clf, ex.pair, train.label_set(), format).scores);
  }
}

TEST(RunPet, SeparableTaskAccuracyAndArtifacts) {
  ToyBackend backend;
  const auto bundle = make_synthetic_bundle("so_duplicate", 200, 500, 1000, 8);
  const auto train = sample_training_set(bundle.pool, 50, 8);
  PetConfig cfg;
  cfg.pvps = builtin_pvps("so_duplicate");
  const auto r = run_pet(cfg, train, bundle.unlabeled, bundle.test, backend);
  EXPECT_GE(r.ensemble_report.accuracy, 0.9);
  EXPECT_GE(r.report.accuracy, 0.9);
  EXPECT_EQ(r.members.size(), 9u);

  const auto dir = std::filesystem::temp_directory_path() / "fewshot_pet_artifacts";
  std::filesystem::remove_all(dir);
  write_pet_artifacts(dir, r, cfg, train.label_set(), backend);
  for (const char* f : {"member_weights.json", "soft_labels.jsonl", "classifier.json", "metadata.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  std::ifstream meta(dir / "metadata.json");
  const auto j = nlohmann::json::parse(meta);
  EXPECT_EQ(j.at("config_hash"), config_hash(to_json(cfg)));
  auto clf = backend.load_classifier(nlohmann::json::parse(std::ifstream(dir / "classifier.json")).at("state"));
  const auto format = InputFormat::for_backend(backend, cfg.max_len);
  EXPECT_EQ(clf->predict(format.join(bundle.test[0].pair)), r.classifier->predict(format.join(bundle.test[0].pair)));
}

TEST(RunPet, StageFailuresNameTheStage) {
  ToyBackend backend;
  auto cfg = small_config("so_duplicate");
  const Dataset empty({}, kLabels, DatasetKind::train);
  try {
    run_pet(cfg, empty, empty.with_kind(DatasetKind::unlabeled), empty.with_kind(DatasetKind::test), backend);
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage, "train_ensemble");
  }
}
