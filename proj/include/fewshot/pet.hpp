#pragma once

// Pattern-exploiting training: an ensemble of masked-token scorers, one per
// (PVP, seed), each weighted by its accuracy on the labeled set before any
// training. The weighted ensemble soft-labels unlabeled pairs, and a sequence
// classifier is distilled from those plus the labeled pairs.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "fewshot/backend.hpp"
#include "fewshot/classifier_ops.hpp"
#include "fewshot/core_data.hpp"
#include "fewshot/errors.hpp"
#include "fewshot/log.hpp"
#include "fewshot/metrics.hpp"
#include "fewshot/numeric.hpp"
#include "fewshot/prompting.hpp"
#include "fewshot/text.hpp"

namespace fewshot {

struct PetConfig {
  std::vector<PVP> pvps;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::size_t mlm_steps = 1000;
  std::size_t distill_steps = 5000;
  std::size_t batch = 16;
  std::optional<double> lr;  // backend default when unset
  double temperature = 2.0;
  std::size_t max_len = 256;
  std::uint64_t classifier_seed = 0;
  std::size_t workers = 1;  // members trained concurrently

  void validate() const {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be > 0");
    if (pvps.empty() || seeds.empty()) throw ConfigError("PET needs at least one PVP and one seed");
    for (std::size_t i = 0; i < pvps.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (pvps[i].id == pvps[j].id) throw ConfigError("duplicate PVP id " + std::to_string(pvps[i].id));
      }
    }
  }
};

inline nlohmann::json to_json(const PetConfig& c) {
  nlohmann::json pvps = nlohmann::json::array();
  for (const auto& p : c.pvps) pvps.push_back(pvp_to_json(p));
  nlohmann::json j{{"pvps", pvps},
                   {"seeds", c.seeds},
                   {"mlm_steps", c.mlm_steps},
                   {"distill_steps", c.distill_steps},
                   {"batch", c.batch},
                   {"temperature", c.temperature},
                   {"max_len", c.max_len},
                   {"classifier_seed", c.classifier_seed}};
  j["lr"] = c.lr ? nlohmann::json(*c.lr) : nlohmann::json(nullptr);
  return j;
}

struct EnsembleMember {
  PVP pvp;
  std::uint64_t seed = 0;
  std::shared_ptr<MaskedScorer> model;
  double weight = 0.0;  // accuracy on the labeled set before training
};

// Verbalizer-restricted raw scores of one member, in label order.
inline std::vector<double> member_scores(const EnsembleMember& member, const SentencePair& pair,
                                         const LabelSet& labels, const InputFormat& format) {
  const auto tokens = verbalizer_tokens(member.pvp, labels);
  const auto scores = member.model->score(format.cloze(member.pvp, pair), tokens);
  if (scores.size() != tokens.size()) throw ShapeError("scorer returned the wrong number of scores");
  std::vector<double> out(tokens.size());
  for (std::size_t k = 0; k < tokens.size(); ++k) out[k] = scores.at(tokens[k]);
  return out;
}

inline double untrained_accuracy(const EnsembleMember& member, const Dataset& train, const InputFormat& format) {
  if (train.empty()) throw NoDataError("untrained accuracy needs a non-empty training set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto s = member_scores(member, train[i].pair, train.label_set(), format);
    correct += argmax(s) == train.label_id(i) ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(train.size());
}

inline std::vector<MlmExample> mlm_examples(const PVP& pvp, const Dataset& train, const InputFormat& format) {
  const auto tokens = verbalizer_tokens(pvp, train.label_set());
  std::vector<MlmExample> out;
  out.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    out.push_back({format.cloze(pvp, train[i].pair), tokens[train.label_id(i)]});
  }
  return out;
}

namespace detail {

// Runs job(i) for i in [0, n) on up to `workers` threads; rethrows the first
// failure.
template <typename Job>
void parallel_for(std::size_t n, std::size_t workers, Job&& job) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace detail

// |pvps| x |seeds| members. Each weight is measured before that member trains.
inline std::vector<EnsembleMember> train_ensemble(const PetConfig& config, const Dataset& train,
                                                  const Backend& backend) {
  config.validate();
  if (train.empty()) throw NoDataError("PET needs at least one labeled example");
  for (const auto& pvp : config.pvps) backend.check_tokens(verbalizer_tokens(pvp, train.label_set()));
  const auto format = InputFormat::for_backend(backend, config.max_len);
  const double lr = config.lr.value_or(backend.default_lr());

  std::vector<EnsembleMember> members;
  for (const auto& pvp : config.pvps) {
    for (auto seed : config.seeds) members.push_back({pvp, seed, nullptr, 0.0});
  }
  detail::parallel_for(members.size(), config.workers, [&](std::size_t i) {
    auto& m = members[i];
    try {
      m.model = backend.make_scorer(m.seed);
      m.weight = untrained_accuracy(m, train, format);
      const auto data = mlm_examples(m.pvp, train, format);
      const auto tokens = verbalizer_tokens(m.pvp, train.label_set());
      m.model->train_mlm(data, tokens, TrainOptions{config.mlm_steps, config.batch, lr, m.seed});
    } catch (const std::exception& e) {
      throw BackendError("ensemble member (PVP " + std::to_string(m.pvp.id) + ", seed " + std::to_string(m.seed) +
                         "): " + e.what());
    }
  });
  return members;
}

// Weighted mean of member scores. If every weight is zero the members are
// averaged uniformly.
inline std::vector<double> aggregate_scores(std::span<const EnsembleMember> members, const SentencePair& pair,
                                            const LabelSet& labels, const InputFormat& format) {
  if (members.empty()) throw EmptyEnsembleError("cannot aggregate an empty ensemble");
  double total_weight = 0.0;
  for (const auto& m : members) {
    if (!(m.weight >= 0.0) || !std::isfinite(m.weight)) throw NumericError("member weight must be finite and >= 0");
    total_weight += m.weight;
  }
  const bool uniform = total_weight == 0.0;
  if (uniform) {
    warn("all ensemble weights are zero; falling back to uniform weights");
    total_weight = static_cast<double>(members.size());
  }
  std::vector<double> out(labels.size(), 0.0);
  for (const auto& m : members) {
    const double w = uniform ? 1.0 : m.weight;
    if (w == 0.0) continue;
    const auto s = member_scores(m, pair, labels, format);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += w * s[k];
  }
  for (double& x : out) x /= total_weight;
  return out;
}

// softmax(scores / temperature).
inline std::vector<double> soften(std::span<const double> scores, double temperature) {
  return softmax(scores, temperature);
}

inline std::vector<SoftLabeledExample> soft_label(std::span<const EnsembleMember> members, const Dataset& unlabeled,
                                                  const LabelSet& labels, const InputFormat& format,
                                                  double temperature, std::size_t workers = 1) {
  std::vector<SoftLabeledExample> out(unlabeled.size());
  detail::parallel_for(unlabeled.size(), workers, [&](std::size_t i) {
    const auto& pair = unlabeled[i].pair;
    auto dist = soften(aggregate_scores(members, pair, labels, format), temperature);
    check_distribution(dist);
    out[i] = {pair, std::move(dist)};
  });
  return out;
}

struct DistillOutput {
  std::unique_ptr<SequenceClassifier> classifier;
  std::vector<SoftLabeledExample> soft_labeled;
};

// Training rows are the labeled pairs with one-hot targets followed by the
// soft-labeled pairs; the batch schedule shuffles the union.
inline DistillOutput distill(std::span<const EnsembleMember> members, const Dataset& train, const Dataset& unlabeled,
                             const PetConfig& config, const Backend& backend) {
  if (train.empty() && unlabeled.empty()) throw NoDataError("distillation needs data");
  const auto& labels = train.label_set();
  const auto format = InputFormat::for_backend(backend, config.max_len);
  DistillOutput out;
  if (!unlabeled.empty()) out.soft_labeled = soft_label(members, unlabeled, labels, format, config.temperature, config.workers);
  auto rows = one_hot_targets(train, format);
  for (const auto& s : out.soft_labeled) rows.push_back({format.join(s.pair), s.distribution});
  out.classifier = backend.make_classifier(labels.size(), config.classifier_seed);
  TrainOptions opt{config.distill_steps, config.batch, config.lr.value_or(backend.default_lr()), config.classifier_seed};
  out.classifier->train(rows, opt);
  return out;
}

struct PetRunResult {
  std::vector<EnsembleMember> members;
  std::unique_ptr<SequenceClassifier> classifier;
  std::vector<SoftLabeledExample> soft_labeled;
  EvalReport report;           // distilled classifier on the test set
  EvalReport ensemble_report;  // weighted ensemble on the test set
  nlohmann::json diagnostics;
};

inline EvalReport evaluate_ensemble(std::span<const EnsembleMember> members, const Dataset& test,
                                    const InputFormat& format) {
  std::vector<std::size_t> preds;
  preds.reserve(test.size());
  for (const auto& ex : test.examples()) preds.push_back(argmax(aggregate_scores(members, ex.pair, test.label_set(), format)));
  return evaluate_predictions(test, preds);
}

inline nlohmann::json pet_diagnostics(std::span<const EnsembleMember> members) {
  nlohmann::json weights = nlohmann::json::array();
  nlohmann::json per_pvp = nlohmann::json::object();
  for (const auto& m : members) {
    weights.push_back({{"pvp", m.pvp.id}, {"seed", m.seed}, {"weight", m.weight}});
    auto& entry = per_pvp[std::to_string(m.pvp.id)];
    if (entry.is_null()) entry = {{"pattern", m.pvp.pattern.notation()}, {"untrained_accuracy", nlohmann::json::array()}};
    entry["untrained_accuracy"].push_back(m.weight);
  }
  return {{"member_weights", weights}, {"per_pvp", per_pvp}};
}

inline PetRunResult run_pet(const PetConfig& config, const Dataset& train, const Dataset& unlabeled,
                            const Dataset& test, const Backend& backend) {
  PetRunResult r;
  try {
    r.members = train_ensemble(config, train, backend);
  } catch (const std::exception& e) {
    throw StageError("train_ensemble", e.what());
  }
  DistillOutput d;
  try {
    d = distill(r.members, train, unlabeled, config, backend);
  } catch (const std::exception& e) {
    throw StageError("distill", e.what());
  }
  r.classifier = std::move(d.classifier);
  r.soft_labeled = std::move(d.soft_labeled);
  try {
    const auto format = InputFormat::for_backend(backend, config.max_len);
    r.report = evaluate_classifier(*r.classifier, test, format);
    r.ensemble_report = evaluate_ensemble(r.members, test, format);
  } catch (const std::exception& e) {
    throw StageError("evaluate", e.what());
  }
  r.diagnostics = pet_diagnostics(r.members);
  r.diagnostics["ensemble_accuracy"] = r.ensemble_report.accuracy;
  return r;
}

inline std::string config_hash(const nlohmann::json& config) { return hex64(fnv1a64(config.dump())); }

// Run artifact directory: member weights, per-PVP untrained accuracies,
// soft-labeled data, the final classifier state and run metadata.
inline void write_pet_artifacts(const std::filesystem::path& dir, const PetRunResult& r, const PetConfig& config,
                                const LabelSet& labels, const Backend& backend) {
  std::filesystem::create_directories(dir);
  auto write_json = [&](const char* name, const nlohmann::json& j) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw IngestError("cannot write " + (dir / name).string());
    out << j.dump(2) << '\n';
  };
  write_json("member_weights.json", r.diagnostics);
  {
    std::ofstream out(dir / "soft_labels.jsonl", std::ios::binary);
    for (const auto& s : r.soft_labeled) {
      out << nlohmann::json{{"u", s.pair.u}, {"v", s.pair.v}, {"distribution", s.distribution}}.dump() << '\n';
    }
  }
  write_json("classifier.json", {{"version", 1},
                                 {"backend", backend.name()},
                                 {"labels", labels.labels()},
                                 {"task_id", labels.task_id()},
                                 {"max_len", config.max_len},
                                 {"state", r.classifier->save()}});
  const auto cfg = to_json(config);
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& m : r.members) seeds.push_back({{"pvp", m.pvp.id}, {"seed", m.seed}});
  write_json("metadata.json", {{"config", cfg},
                               {"config_hash", config_hash(cfg)},
                               {"member_seeds", seeds},
                               {"classifier_seed", config.classifier_seed},
                               {"temperature_rule", "softmax(score / T) on aggregated ensemble scores"},
                               {"distillation_rows", "labeled one-hot rows and soft-labeled rows, shuffled together"},
                               {"report", to_json(r.report)},
                               {"ensemble_report", to_json(r.ensemble_report)}});
}

}  // namespace fewshot
