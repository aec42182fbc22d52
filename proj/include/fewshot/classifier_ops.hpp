#pragma once

// Sentence-pair joining and evaluation shared by the fine-tuning, PET
// distillation and SetFit pipelines.

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fewshot/backend.hpp"
#include "fewshot/core_data.hpp"
#include "fewshot/metrics.hpp"
#include "fewshot/numeric.hpp"
#include "fewshot/prompting.hpp"

namespace fewshot {

// u + " " + separator + " " + v; boundary is the separator's byte offset.
inline JoinedText join_pair(const SentencePair& pair, std::string_view separator = kDefaultSeparator) {
  JoinedText out;
  out.text.reserve(pair.u.size() + pair.v.size() + separator.size() + 2);
  out.text += pair.u;
  out.text += ' ';
  out.boundary = out.text.size();
  out.text += separator;
  out.text += ' ';
  out.text += pair.v;
  return out;
}

// join_pair, truncating the longer sentence first when the joined text is
// longer than max_len under length_fn.
inline JoinedText join_pair_bounded(const SentencePair& pair, std::string_view separator, std::size_t max_len,
                                    const LengthFn& length_fn) {
  auto joined = join_pair(pair, separator);
  if (!length_fn || length_fn(joined.text) <= max_len) return joined;
  if (length_fn(join_pair({}, separator).text) > max_len) {
    throw BudgetError("max_len " + std::to_string(max_len) + " cannot hold the separator");
  }
  auto [u, v] = detail::truncate_longest_first(pair.u, pair.v, [&](const std::string& a, const std::string& b) {
    return length_fn(join_pair({a, b}, separator).text) <= max_len;
  });
  return join_pair({std::move(u), std::move(v)}, separator);
}

struct InputFormat {
  std::string separator = std::string(kDefaultSeparator);
  std::size_t max_len = 256;
  LengthFn length_fn = whitespace_length();

  static InputFormat for_backend(const Backend& backend, std::size_t max_len) {
    return {backend.separator(), max_len, backend.length_fn()};
  }

  JoinedText join(const SentencePair& pair) const { return join_pair_bounded(pair, separator, max_len, length_fn); }
  ClozeInput cloze(const PVP& pvp, const SentencePair& pair) const {
    return render(pvp, pair, max_len, length_fn, separator);
  }
};

struct Prediction {
  std::size_t label_id = 0;
  std::string label;
  std::vector<double> scores;  // raw scores or probabilities, label order
};

inline std::vector<SoftTarget> one_hot_targets(const Dataset& train, const InputFormat& format) {
  std::vector<SoftTarget> rows;
  rows.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    rows.push_back({format.join(train[i].pair), one_hot(train.label_id(i), train.label_set().size())});
  }
  return rows;
}

inline Prediction classify_pair(const SequenceClassifier& classifier, const SentencePair& pair,
                                const LabelSet& labels, const InputFormat& format) {
  auto scores = classifier.predict(format.join(pair));
  if (scores.size() != labels.size()) {
    throw ShapeError("classifier returned " + std::to_string(scores.size()) + " scores for " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t id = argmax(scores);
  return {id, labels[id], std::move(scores)};
}

inline EvalReport evaluate_predictions(const Dataset& test, std::span<const std::size_t> predicted) {
  std::vector<std::size_t> golds(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) golds[i] = test.label_id(i);
  return report(confusion_from_ids(golds, predicted, test.label_set()));
}

inline EvalReport evaluate_classifier(const SequenceClassifier& classifier, const Dataset& test,
                                      const InputFormat& format) {
  if (test.kind() == DatasetKind::unlabeled) throw ConfigError("evaluation needs a labeled dataset");
  std::vector<std::size_t> preds;
  preds.reserve(test.size());
  for (const auto& ex : test.examples()) preds.push_back(classify_pair(classifier, ex.pair, test.label_set(), format).label_id);
  return evaluate_predictions(test, preds);
}

}  // namespace fewshot
