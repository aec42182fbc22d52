#pragma once

// Vanilla fine-tuning baseline: a sequence classifier trained directly on the
// joined labeled pairs with one-hot targets.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>

#include <nlohmann/json.hpp>

#include "fewshot/backend.hpp"
#include "fewshot/classifier_ops.hpp"
#include "fewshot/core_data.hpp"

namespace fewshot {

struct FinetuneConfig {
  std::size_t steps = 1000;  // 5000 for full-sized data
  std::size_t batch = 16;
  std::optional<double> lr;  // backend default when unset
  std::size_t max_len = 256;
  std::uint64_t seed = 0;
  std::size_t start_step = 0;
};

inline nlohmann::json to_json(const FinetuneConfig& c) {
  nlohmann::json j{{"steps", c.steps}, {"batch", c.batch}, {"max_len", c.max_len}, {"seed", c.seed},
                   {"start_step", c.start_step}};
  j["lr"] = c.lr ? nlohmann::json(*c.lr) : nlohmann::json(nullptr);
  return j;
}

// Continues training an existing classifier; with start_step = s1 this picks
// up exactly where an s1-step run with the same seed stopped.
inline TrainStats finetune_into(const FinetuneConfig& config, const Dataset& train, SequenceClassifier& classifier,
                                const Backend& backend) {
  if (train.empty()) throw NoDataError("fine-tuning needs at least one labeled example");
  if (classifier.num_labels() != train.label_set().size()) throw ShapeError("classifier/label set size mismatch");
  const auto format = InputFormat::for_backend(backend, config.max_len);
  const auto rows = one_hot_targets(train, format);
  TrainOptions opt{config.steps, config.batch, config.lr.value_or(backend.default_lr()), config.seed,
                   config.start_step};
  return classifier.train(rows, opt);
}

inline std::unique_ptr<SequenceClassifier> finetune(const FinetuneConfig& config, const Dataset& train,
                                                    const Backend& backend) {
  if (train.empty()) throw NoDataError("fine-tuning needs at least one labeled example");
  auto classifier = backend.make_classifier(train.label_set().size(), config.seed);
  finetune_into(config, train, *classifier, backend);
  return classifier;
}

inline Prediction finetune_predict(const SequenceClassifier& classifier, const SentencePair& pair,
                                   const LabelSet& labels, const Backend& backend, std::size_t max_len = 256) {
  return classify_pair(classifier, pair, labels, InputFormat::for_backend(backend, max_len));
}

}  // namespace fewshot
