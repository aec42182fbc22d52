// Runs each acceptance criterion and prints one PASS/FAIL line per criterion.
// Exit status is nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <unordered_set>

#include "fewshot/fewshot.hpp"
#include "gradcheck.hpp"
#include "metrics_oracle.hpp"
#include "pet_oracles.hpp"

using namespace fewshot;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

Outcome pet_pipeline() {
  const auto t0 = std::chrono::steady_clock::now();
  ToyBackend backend;
  const auto b = make_synthetic_bundle("so_duplicate", 400, 500, 1000, 101);
  const auto train = sample_training_set(b.pool, 50, 101);
  PetConfig cfg;
  cfg.pvps = builtin_pvps("so_duplicate");
  const auto r = run_pet(cfg, train, b.unlabeled, b.test, backend);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {r.ensemble_report.accuracy >= 0.9 && r.report.accuracy >= 0.9 && secs < 60.0,
          fmt("ensemble %.3f, distilled %.3f, %.1f s", r.ensemble_report.accuracy, r.report.accuracy, secs)};
}

Outcome soften_properties() {
  const auto p = soften(std::vector<double>{2.0, 0.0}, 2.0);
  const double e = std::exp(1.0);
  bool ok = std::abs(p[0] - e / (1 + e)) <= 1e-9 && std::abs(p[1] - 1 / (1 + e)) <= 1e-9;
  Rng rng(2);
  std::size_t bad = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> s(2 + rng.uniform_index(4));
    for (auto& x : s) x = 10 * rng.normal();
    const double t = 0.1 + 5 * rng.uniform01();
    auto shifted = s;
    const double c = 100 * rng.normal();
    for (auto& x : shifted) x += c;
    const auto a = soften(s, t), q = soften(shifted, t);
    bool same = argmax(a) == argmax(s);
    for (std::size_t k = 0; k < s.size(); ++k) same = same && std::abs(a[k] - q[k]) <= 1e-12;
    bad += !same;
  }
  return {ok && bad == 0, std::string(ok ? "oracle within 1e-9, " : "oracle off, ") + std::to_string(bad) +
                              "/1000 random vectors violate"};
}

Outcome aggregate_properties() {
  using pet_oracle::member;
  const SentencePair pair{"x", "y"};
  const auto labels = builtin_label_set("so_duplicate");
  auto agg = [&](const std::vector<EnsembleMember>& ms) { return aggregate_scores(ms, pair, labels, InputFormat{}); };
  const bool exact = agg({member({0, 1}, 1), member({1, 0}, 3)}) == std::vector<double>{0.75, 0.25};
  Rng rng(3);
  std::size_t bad = 0;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<EnsembleMember> ms;
    const auto n = 1 + rng.uniform_index(5);
    for (std::size_t i = 0; i < n; ++i) ms.push_back(member({rng.normal(), rng.normal()}, 0.1 + rng.uniform01()));
    const auto base = agg(ms);
    auto scaled = ms;
    const double c = 0.01 + 100 * rng.uniform01();
    for (auto& m : scaled) m.weight *= c;
    auto padded = ms;
    padded.insert(padded.begin() + static_cast<std::ptrdiff_t>(rng.uniform_index(n + 1)), member({1e6, -1e6}, 0.0));
    const auto a = agg(scaled), b = agg(padded);
    for (std::size_t k = 0; k < 2; ++k) {
      if (std::abs(a[k] - base[k]) > 1e-12 || std::abs(b[k] - base[k]) > 1e-12) {
        ++bad;
        break;
      }
    }
  }
  return {exact && bad == 0, std::string(exact ? "(0.75, 0.25) exact" : "weighted mean off") + ", " +
                                 std::to_string(bad) + "/500 invariance violations"};
}

Outcome metrics_oracle() {
  Rng rng(2024);
  double worst = 0.0;
  for (int f = 0; f < 200; ++f) {
    const std::size_t k = 2 + rng.uniform_index(4), n = 1 + rng.uniform_index(60);
    std::vector<std::string> names;
    for (std::size_t c = 0; c < k; ++c) names.push_back("L" + std::to_string(c));
    std::vector<std::size_t> g(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = rng.uniform_index(k);
      p[i] = rng.coin() ? g[i] : rng.uniform_index(k);
    }
    const auto r = report(confusion_from_ids(g, p, LabelSet("t", names)));
    const auto o = oracle::brute_force(g, p, k);
    worst = std::max({worst, std::abs(r.accuracy - o.accuracy), std::abs(r.macro_f1 - o.macro_f1),
                      std::abs(r.weighted_f1 - o.weighted_f1)});
  }
  const std::vector<std::string> golds{"A", "A", "A", "B"}, preds{"A", "A", "B", "B"};
  const auto h = report(confusion(golds, preds, LabelSet("t", {"A", "B"})));
  const bool hand = h.accuracy == 0.75 && std::abs(h.macro_f1 - 0.7333) < 1e-4 && std::abs(h.weighted_f1 - 0.7667) < 1e-4;
  return {worst <= 1e-12 && hand,
          fmt("max deviation %.1e; hand case acc %.4f macro %.4f", worst, h.accuracy, h.macro_f1) +
              fmt(" weighted %.4f", h.weighted_f1)};
}

Outcome contrastive_count() {
  std::size_t cases = 0, bad = 0;
  for (std::size_t k = 2; k <= 5; ++k) {
    std::vector<std::string> names;
    std::vector<LabeledExample> ex;
    for (std::size_t c = 0; c < k; ++c) {
      names.push_back("L" + std::to_string(c));
      for (std::size_t i = 0; i < 5; ++i) {
        ex.push_back({{"u" + std::to_string(c) + "_" + std::to_string(i), "v" + std::to_string(i)}, names.back()});
      }
    }
    const Dataset train(ex, LabelSet("t", names), DatasetKind::train);
    for (std::size_t R = 1; R <= 8; ++R) {
      ++cases;
      const auto t = generate_contrastive(train, R, 97 * R + k);
      bool ok = t.size() == 2 * R * k;
      for (const auto& tr : t) {
        const bool same = train.label_id(tr.source_a) == train.label_id(tr.source_b);
        ok = ok && same == (tr.similarity == 1);
      }
      bad += !ok;
    }
  }
  return {bad == 0, std::to_string(cases - bad) + "/" + std::to_string(cases) + " grid points hold"};
}

Outcome leakage() {
  std::size_t splits = 0, shared = 0;
  const LabelSet labels("so_duplicate", {"Neutral", "Duplicate"});
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    std::vector<LabeledExample> ex;
    for (int i = 0; i < 400; ++i) {
      auto s = [&] { return "sentence " + std::to_string(rng.uniform_index(600)); };
      ex.push_back({{s(), s()}, labels[rng.uniform_index(2)]});
    }
    const Dataset all(ex, labels, DatasetKind::train);
    SplitResult split;
    try {
      split = split_no_leakage(all, 60, 60, seed);
    } catch (const InfeasibleSplitError& e) {
      split = split_no_leakage(all, 60, e.max_test_size, seed);
    }
    ++splits;
    std::unordered_set<std::string> train;
    for (const auto& e : split.train_pool.examples()) {
      train.insert(normalize_sentence(e.pair.u));
      train.insert(normalize_sentence(e.pair.v));
    }
    for (const auto& e : split.test.examples()) {
      shared += train.count(normalize_sentence(e.pair.u)) + train.count(normalize_sentence(e.pair.v));
    }
  }
  return {splits == 100 && shared == 0, std::to_string(splits) + " splits, " + std::to_string(shared) + " shared sentences"};
}

Outcome gradients() {
  const auto enc = gradcheck::encoder(50, 7);
  const auto head = gradcheck::logistic_head(50, 7);
  return {enc.probes == 50 && head.probes == 50 && enc.worst_relative <= 1e-4 && head.worst_relative <= 1e-6,
          fmt("encoder worst %.1e, head worst %.1e", enc.worst_relative, head.worst_relative)};
}

Outcome equivalence() {
  ToyBackend backend;
  const auto b = make_synthetic_bundle("srs_conflict", 200, 300, 0, 8);
  const auto train = sample_training_set(b.pool, 40, 8);
  PetConfig cfg;
  cfg.pvps = builtin_pvps("srs_conflict");
  cfg.mlm_steps = 100;
  cfg.distill_steps = 300;
  cfg.classifier_seed = 8;
  const auto members = train_ensemble(cfg, train, backend);
  const auto out = distill(members, train, Dataset({}, train.label_set(), DatasetKind::unlabeled), cfg, backend);
  FinetuneConfig ft;
  ft.steps = cfg.distill_steps;
  ft.batch = cfg.batch;
  ft.seed = cfg.classifier_seed;
  const auto clf = finetune(ft, train, backend);
  const auto format = InputFormat::for_backend(backend, cfg.max_len);
  std::size_t differ = 0;
  for (const auto& ex : b.test.examples()) {
    const auto x = classify_pair(*out.classifier, ex.pair, train.label_set(), format);
    const auto y = classify_pair(*clf, ex.pair, train.label_set(), format);
    differ += x.label != y.label || x.scores != y.scores;
  }
  return {differ == 0, std::to_string(differ) + "/" + std::to_string(b.test.size()) + " test predictions differ"};
}

Outcome toy_pipelines() {
  ToyBackend backend;
  const auto b = make_synthetic_bundle("so_duplicate", 400, 500, 0, 9);
  const auto train = sample_training_set(b.pool, 50, 9);
  SetFitConfig sc;
  sc.seed = 9;
  const auto s1 = evaluate_setfit(setfit_fit(sc, train, backend), b.test);
  const auto s2 = evaluate_setfit(setfit_fit(sc, train, backend), b.test);
  FinetuneConfig fc;
  fc.seed = 9;
  const auto format = InputFormat::for_backend(backend, fc.max_len);
  const auto f1 = evaluate_classifier(*finetune(fc, train, backend), b.test, format);
  const auto f2 = evaluate_classifier(*finetune(fc, train, backend), b.test, format);
  const bool same = to_json(s1).dump() == to_json(s2).dump() && to_json(f1).dump() == to_json(f2).dump();
  return {s1.accuracy >= 0.85 && f1.accuracy >= 0.85 && same,
          fmt("setfit %.3f, finetune %.3f, ", s1.accuracy, f1.accuracy) +
              (same ? "reports byte-identical" : "reports differ between runs")};
}

Outcome ingestion() {
  MockBugzilla mock;
  mock.start();
  FetchOptions opts;
  opts.sleep = [](std::chrono::milliseconds) {};
  const auto r = fetch_bugs(mock.endpoint(), bugzilla_window(), opts);
  const auto dups = build_duplicate_pairs(r.records).pairs.size();
  const auto deps = build_dependency_pairs(r.records).pairs.size();
  const std::filesystem::path dir = FEWSHOT_FIXTURE_DIR;
  const auto so = ingest_stackoverflow_exports(dir / "so_duplicates.csv", dir / "so_neutral.csv");
  bool imap = false;
  for (const auto& ex : so.dataset.examples()) {
    imap = imap || (ex.label == "Duplicate" &&
                    ex.pair.u == "IMAP4: How to correctly decode UTF-8 encoded message body?" &&
                    ex.pair.v == "Python email quoted-printable encoding problem");
  }
  std::ostringstream d;
  d << r.records.size() << " records in " << r.requests << " pages, " << dups << " Duplicate, " << deps
    << " Entailment, IMAP4 pair " << (imap ? "found" : "missing");
  return {r.records.size() == 250 && r.requests == 3 && dups == 2 && deps == 3 && imap, d.str()};
}

Outcome sweep_table() {
  const ExperimentConfig c;
  const auto r = run_sweep(c, synthetic_sweep_data(c), ToyBackend());
  std::size_t rows = 0;
  for (const auto& s : r.sizes) rows += s.completed == 3 && s.failed == 0;
  const auto table = emit_table(r, "accuracy", TableFormat::text);
  ReplicateSummary s;
  s.replicates = 3;
  s.accuracy = {0.9066, 0.0138};
  const bool formatted = format_mean_std(s.accuracy) == "90.7±1.4";
  std::size_t lines = 0;
  for (char ch : table) lines += ch == '\n';
  return {r.sizes.size() == 5 && rows == 5 && r.cells.size() == 15 && lines == 7 && formatted,
          std::to_string(rows) + " sizes x 3 replicates complete, format " + (formatted ? "ok" : "wrong")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"PET pipeline accuracy and runtime", pet_pipeline},
      {"soften oracle and properties", soften_properties},
      {"ensemble aggregation oracle and invariances", aggregate_properties},
      {"metrics against brute-force recomputation", metrics_oracle},
      {"contrastive triplet count identity", contrastive_count},
      {"no sentence leakage across 100 splits", leakage},
      {"gradient checks", gradients},
      {"distillation without unlabeled data equals fine-tuning", equivalence},
      {"SetFit and fine-tune accuracy and determinism", toy_pipelines},
      {"ingestion contract", ingestion},
      {"default sweep table", sweep_table},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << ": " << criteria[i].first << " (" << o.detail
              << ")" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
