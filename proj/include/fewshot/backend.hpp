#pragma once

// Capability contracts for model providers. The toy backend and the external
// process adapter both implement these.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "fewshot/errors.hpp"
#include "fewshot/prompting.hpp"
#include "fewshot/random.hpp"

namespace fewshot {

// Raw scores for a list of candidate tokens, in candidate order.
struct TokenScores {
  std::vector<std::string> tokens;
  std::vector<double> scores;

  std::size_t size() const { return tokens.size(); }

  double at(std::string_view token) const {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (tokens[i] == token) return scores[i];
    }
    throw VocabularyError("no score for token '" + std::string(token) + "'");
  }
};

struct MlmExample {
  ClozeInput cloze;
  std::string target;  // verbalizer token of the gold label
};

// A sentence pair joined into one text; boundary is the separator offset.
struct JoinedText {
  std::string text;
  std::optional<std::size_t> boundary;

  friend bool operator==(const JoinedText&, const JoinedText&) = default;
};

struct SoftTarget {
  JoinedText input;
  std::vector<double> distribution;  // label-set order, sums to 1
};

struct ContrastiveTriplet {
  std::string text_a;
  std::string text_b;
  int similarity = 0;  // 1 iff the sources share a label
  // Provenance: indices of the source examples in the training set.
  std::size_t source_a = 0;
  std::size_t source_b = 0;
};

// "steps" counts optimizer updates. start_step lets a run resume exactly where
// a previous one with the same seed stopped.
struct TrainOptions {
  std::size_t steps = 0;
  std::size_t batch = 16;
  double lr = 0.1;
  std::uint64_t seed = 0;
  std::size_t start_step = 0;
  std::size_t accumulation = 1;  // honored by external backends only
};

struct TrainStats {
  std::vector<double> step_losses;  // mean mini-batch loss before each update
};

// Mini-batch order as a pure function of (n, batch, seed, step): position
// p = step * batch + j falls in epoch p / n, whose order is a seeded
// permutation of [0, n).
class BatchSchedule {
 public:
  BatchSchedule(std::size_t n, std::size_t batch, std::uint64_t seed)
      : n_(n), batch_(batch), seed_(seed) {
    if (n_ == 0) throw NoDataError("cannot schedule batches over an empty training set");
    if (batch_ == 0) throw ConfigError("batch size must be positive");
  }

  std::vector<std::size_t> indices(std::size_t step) {
    std::vector<std::size_t> out(batch_);
    for (std::size_t j = 0; j < batch_; ++j) {
      const std::size_t p = step * batch_ + j;
      out[j] = permutation(p / n_)[p % n_];
    }
    return out;
  }

 private:
  const std::vector<std::size_t>& permutation(std::size_t epoch) {
    if (!cached_epoch_ || *cached_epoch_ != epoch) {
      cache_ = seeded_permutation(n_, derive_seed(seed_, epoch));
      cached_epoch_ = epoch;
    }
    return cache_;
  }

  std::size_t n_;
  std::size_t batch_;
  std::uint64_t seed_;
  std::optional<std::size_t> cached_epoch_;
  std::vector<std::size_t> cache_;
};

class MaskedScorer {
 public:
  virtual ~MaskedScorer() = default;
  virtual TokenScores score(const ClozeInput& cloze, std::span<const std::string> candidates) const = 0;
  // Cross-entropy over the softmax restricted to `candidates`.
  virtual TrainStats train_mlm(std::span<const MlmExample> data, std::span<const std::string> candidates,
                               const TrainOptions& options) = 0;
  virtual nlohmann::json save() const = 0;
};

class SequenceClassifier {
 public:
  virtual ~SequenceClassifier() = default;
  virtual std::size_t num_labels() const = 0;
  // Soft-target cross-entropy; one-hot targets give ordinary cross-entropy.
  virtual TrainStats train(std::span<const SoftTarget> data, const TrainOptions& options) = 0;
  virtual std::vector<double> predict(const JoinedText& input) const = 0;
  virtual nlohmann::json save() const = 0;
};

class SentenceEncoder {
 public:
  virtual ~SentenceEncoder() = default;
  virtual std::size_t dimension() const = 0;
  virtual std::vector<double> encode(std::string_view text) const = 0;
  // Minimizes mean (cos(encode(a), encode(b)) - similarity)^2.
  virtual TrainStats fit(std::span<const ContrastiveTriplet> triplets, const TrainOptions& options) = 0;
  virtual nlohmann::json save() const = 0;
};

class Backend {
 public:
  virtual ~Backend() = default;

  virtual std::string name() const = 0;
  virtual std::unique_ptr<MaskedScorer> make_scorer(std::uint64_t seed) const = 0;
  virtual std::unique_ptr<SequenceClassifier> make_classifier(std::size_t num_labels,
                                                              std::uint64_t seed) const = 0;
  virtual std::unique_ptr<SentenceEncoder> make_encoder(std::uint64_t seed) const = 0;

  virtual std::unique_ptr<MaskedScorer> load_scorer(const nlohmann::json& state) const = 0;
  virtual std::unique_ptr<SequenceClassifier> load_classifier(const nlohmann::json& state) const = 0;
  virtual std::unique_ptr<SentenceEncoder> load_encoder(const nlohmann::json& state) const = 0;

  virtual std::size_t token_count(std::string_view text) const = 0;
  virtual std::string separator() const = 0;
  // Throws VocabularyError when a token is not in the vocabulary.
  virtual void check_tokens(std::span<const std::string> tokens) const = 0;

  virtual double default_lr() const = 0;
  virtual double default_encoder_lr() const { return default_lr(); }

  LengthFn length_fn() const {
    return [this](std::string_view s) { return token_count(s); };
  }
};

}  // namespace fewshot
