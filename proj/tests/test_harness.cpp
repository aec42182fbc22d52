#include <gtest/gtest.h>

#include "fewshot/harness.hpp"
#include "fewshot/toy_backend.hpp"

using namespace fewshot;

namespace {

// Toy backend whose classifiers cannot be created for one seed.
class FlakyBackend final : public Backend {
 public:
  explicit FlakyBackend(std::uint64_t bad_seed) : bad_(bad_seed) {}
  std::string name() const override { return "flaky"; }
  std::unique_ptr<MaskedScorer> make_scorer(std::uint64_t s) const override { return toy_.make_scorer(s); }
  std::unique_ptr<SequenceClassifier> make_classifier(std::size_t k, std::uint64_t s) const override {
    if (s == bad_) throw BackendError("simulated device failure");
    return toy_.make_classifier(k, s);
  }
  std::unique_ptr<SentenceEncoder> make_encoder(std::uint64_t s) const override { return toy_.make_encoder(s); }
  std::unique_ptr<MaskedScorer> load_scorer(const nlohmann::json& j) const override { return toy_.load_scorer(j); }
  std::unique_ptr<SequenceClassifier> load_classifier(const nlohmann::json& j) const override {
    return toy_.load_classifier(j);
  }
  std::unique_ptr<SentenceEncoder> load_encoder(const nlohmann::json& j) const override {
    return toy_.load_encoder(j);
  }
  std::size_t token_count(std::string_view t) const override { return toy_.token_count(t); }
  std::string separator() const override { return toy_.separator(); }
  void check_tokens(std::span<const std::string> t) const override { toy_.check_tokens(t); }
  double default_lr() const override { return toy_.default_lr(); }
  double default_encoder_lr() const override { return toy_.default_encoder_lr(); }

 private:
  ToyBackend toy_;
  std::uint64_t bad_;
};

ExperimentConfig quick(const std::string& method = "finetune") {
  ExperimentConfig c;
  c.method = method;
  c.sizes = {10, 20};
  c.replicates = 2;
  c.test_size = 100;
  c.unlabeled_size = 100;
  c.finetune_steps = 40;
  c.mlm_steps = 30;
  c.distill_steps = 40;
  c.setfit_R = 3;
  return c;
}

SweepResult fake_result(const std::string& backend, const std::vector<double>& means) {
  ExperimentConfig c = quick();
  c.backend = backend;
  c.sizes.clear();
  SweepResult r;
  for (std::size_t i = 0; i < means.size(); ++i) c.sizes.push_back(10 * (i + 1));
  r.config = to_json(c);
  for (std::size_t i = 0; i < means.size(); ++i) {
    ReplicateSummary s;
    s.replicates = 3;
    s.accuracy = s.macro_f1 = s.weighted_f1 = {means[i], 0.01};
    r.sizes.push_back({c.sizes[i], 3, 0, s});
  }
  return r;
}

}  // namespace

TEST(Config, DefaultsGiveFifteenCellsAndValidate) {
  const ExperimentConfig c;
  EXPECT_EQ(c.sizes.size() * c.replicates, 15u);
  EXPECT_EQ(c.replicate_seed(2), 2u);
  ExperimentConfig d;
  d.sizes = {50, 25};
  EXPECT_THROW(d.validate(), ConfigError);
  d.sizes = {25, 25};
  EXPECT_THROW(d.validate(), ConfigError);
  d.sizes = {25};
  d.method = "lora";
  EXPECT_THROW(d.validate(), ConfigError);
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
  ExperimentConfig c = quick("pet");
  c.lr = 0.25;
  c.seed_base = 7;
  const auto back = experiment_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  auto j = to_json(c);
  j["sizez"] = {1};
  EXPECT_THROW(experiment_config_from_json(j), ConfigError);
}

TEST(Sweep, RunsEveryCellAndSummarizesEachSize) {
  ToyBackend backend;
  const auto c = quick();
  const auto r = run_sweep(c, synthetic_sweep_data(c), backend);
  ASSERT_EQ(r.cells.size(), 4u);
  EXPECT_TRUE(r.complete());
  ASSERT_EQ(r.sizes.size(), 2u);
  for (const auto& s : r.sizes) {
    EXPECT_EQ(s.completed, 2u);
    ASSERT_TRUE(s.summary);
    EXPECT_EQ(s.summary->replicates, 2u);
  }
  EXPECT_EQ(r.cells[1].seed, c.replicate_seed(1));
}

TEST(Sweep, SingleReplicateHasZeroStd) {
  ToyBackend backend;
  auto c = quick();
  c.replicates = 1;
  const auto r = run_sweep(c, synthetic_sweep_data(c), backend);
  for (const auto& s : r.sizes) EXPECT_EQ(s.summary->accuracy.std, 0.0);
}

TEST(Sweep, IdenticalConfigsGiveByteIdenticalResults) {
  ToyBackend backend;
  for (const char* method : {"finetune", "pet", "setfit"}) {
    auto c = quick(method);
    const auto data = synthetic_sweep_data(c);
    const auto a = to_json(run_sweep(c, data, backend));
    EXPECT_EQ(a.dump(2), to_json(run_sweep(c, data, backend)).dump(2)) << method;
    c.workers = 3;
    EXPECT_EQ(a.at("cells"), to_json(run_sweep(c, data, backend)).at("cells")) << method;
  }
}

TEST(Sweep, FailedCellIsRecordedAndOthersContinue) {
  auto c = quick();
  FlakyBackend backend(c.replicate_seed(1));
  const auto r = run_sweep(c, synthetic_sweep_data(c), backend);
  EXPECT_FALSE(r.complete());
  for (const auto& cell : r.cells) {
    EXPECT_EQ(cell.ok, cell.replicate != 1);
    if (!cell.ok) EXPECT_NE(cell.error.find("simulated device failure"), std::string::npos);
  }
  for (const auto& s : r.sizes) {
    EXPECT_EQ(s.completed, 1u);
    EXPECT_EQ(s.failed, 1u);
  }
  const auto table = emit_table(r, "accuracy", TableFormat::text);
  EXPECT_NE(table.find("(1 failed)"), std::string::npos);
}

TEST(Sweep, AllCellsOfASizeFailingLeavesNoSummary) {
  auto c = quick("setfit");
  c.sizes = {2};
  c.replicates = 1;
  c.seed_base = 0;
  // Two examples can never hold two of each class.
  const auto r = run_sweep(c, synthetic_sweep_data(c), ToyBackend());
  EXPECT_FALSE(r.sizes[0].summary);
  EXPECT_NE(emit_table(r, "accuracy", TableFormat::text).find("failed"), std::string::npos);
}

TEST(Sweep, InfeasibleSizesAbortBeforeTraining) {
  auto c = quick();
  auto data = synthetic_sweep_data(c);
  c.sizes = {10, 1000};
  std::size_t cells = 0;
  EXPECT_THROW(run_sweep(c, data, ToyBackend(), [&](const CellResult&) { ++cells; }), InfeasibleError);
  EXPECT_EQ(cells, 0u);
  c.sizes = {10};
  data.test = Dataset({}, data.pool.label_set(), DatasetKind::test);
  EXPECT_THROW(run_sweep(c, data, ToyBackend()), NoDataError);
}

TEST(Sweep, LeakyTestSetIsRejected) {
  auto c = quick();
  auto data = synthetic_sweep_data(c);
  data.test = data.pool.with_kind(DatasetKind::test);
  EXPECT_THROW(run_sweep(c, data, ToyBackend()), InfeasibleError);
}

TEST(Sweep, JsonRoundTrip) {
  const auto c = quick();
  const auto r = run_sweep(c, synthetic_sweep_data(c), ToyBackend());
  const auto j = to_json(r);
  EXPECT_EQ(to_json(sweep_result_from_json(j)), j);
  EXPECT_FALSE(j.dump().find("seconds") != std::string::npos);
  EXPECT_EQ(timings_json(r).at("cells").size(), 4u);
}

TEST(Tables, TextCsvJson) {
  auto r = fake_result("toy", {0.9066, 0.96});
  r.sizes[0].summary->accuracy = {0.9066, 0.0138};
  const auto text = emit_table(r, "accuracy", TableFormat::text);
  EXPECT_NE(text.find("90.7±1.4"), std::string::npos);
  EXPECT_NE(text.find("96.0±1.0"), std::string::npos);
  const auto csv = emit_table(r, "macro_f1", TableFormat::csv);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "size,macro_f1_mean,macro_f1_std,completed,failed");
  const auto j = nlohmann::json::parse(emit_table(r, "accuracy", TableFormat::json));
  EXPECT_EQ(j.at("rows").size(), 2u);
  EXPECT_EQ(j["rows"][0]["mean"].get<double>(), 0.9066);
  EXPECT_THROW(emit_table(r, "bleu", TableFormat::text), ConfigError);
  EXPECT_THROW(parse_table_format("xml"), ConfigError);
}

TEST(Tables, ComparisonMarksBestOverallAndPerBackend) {
  const std::vector<SweepResult> rs{fake_result("toy", {0.5, 0.8}), fake_result("toy", {0.6, 0.7}),
                                    fake_result("external:x", {0.55, 0.9})};
  const auto out = emit_comparison(rs, "accuracy");
  std::istringstream in(out);
  std::string header, cols, row10, row20;
  std::getline(in, header);
  std::getline(in, cols);
  std::getline(in, row10);
  std::getline(in, row20);
  // size 10: toy best is 60.0 (also overall best); external best 55.0
  EXPECT_NE(row10.find("_*60.0"), std::string::npos) << row10;
  EXPECT_NE(row10.find("_55.0"), std::string::npos) << row10;
  EXPECT_EQ(row10.find("_50.0"), std::string::npos) << row10;
  // size 20: external 90.0 best overall, toy best 80.0
  EXPECT_NE(row20.find("_*90.0"), std::string::npos) << row20;
  EXPECT_NE(row20.find("_80.0"), std::string::npos) << row20;
  EXPECT_EQ(row20.find("*80.0"), std::string::npos) << row20;
}

TEST(Manifest, HashesTheConfig) {
  const auto j = to_json(quick());
  const auto m = run_manifest("sweep", j, {0, 1});
  EXPECT_EQ(m.at("config_hash"), config_hash(j));
  EXPECT_EQ(m["versions"]["fewshot"], kFewshotVersion);
  auto other = j;
  other["replicates"] = 5;
  EXPECT_NE(config_hash(other), config_hash(j));
}
