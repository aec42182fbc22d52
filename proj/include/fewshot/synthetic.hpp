#pragma once

// Synthetic sentence-pair tasks for tests, smoke runs and the bundled sweep
// data. Each label owns a set of cue words; a pair of label L carries one cue
// of L in each sentence, surrounded by filler words. A bag-of-n-grams linear
// model separates the classes perfectly.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fewshot/core_data.hpp"
#include "fewshot/prompting.hpp"
#include "fewshot/random.hpp"

namespace fewshot {

struct SyntheticOptions {
  std::size_t filler_words = 300;
  std::size_t cues_per_label = 6;
  std::size_t min_words = 5;
  std::size_t max_words = 12;
  double label_noise = 0.0;           // probability of replacing the label at random
  std::vector<double> class_weights;  // empty = uniform
};

inline std::string synthetic_word(std::size_t i) {
  static constexpr const char* syllables[] = {"ka", "lo", "mi", "ne", "ru", "ta", "vo", "zi", "be", "do",
                                              "fu", "ge", "hi", "jo", "pa", "se"};
  std::string w;
  for (int k = 0; k < 3; ++k) {
    w += syllables[i % 16];
    i /= 16;
  }
  return w;
}

// Cue word k of a label. Cue words share a label-specific stem and use
// letters that never occur in filler words.
inline std::string synthetic_cue_word(std::size_t label, std::size_t k) {
  static constexpr const char* stems[] = {"qua", "xiw", "chy", "grz", "pty", "wox", "yuq", "zwi"};
  static constexpr const char* tails[] = {"x", "q", "w", "y", "c", "z"};
  std::string w = std::string(stems[label % 8]) + stems[(label / 8) % 8];
  for (std::size_t i = k;; i /= 6) {
    w += tails[i % 6];
    if (i < 6) break;
  }
  return w;
}

namespace detail {

inline std::string synthetic_sentence(Rng& rng, const SyntheticOptions& o, const std::string& cue) {
  const std::size_t len = o.min_words + rng.uniform_index(o.max_words - o.min_words + 1);
  std::vector<std::string> words;
  words.reserve(len + 1);
  for (std::size_t i = 0; i < len; ++i) words.push_back(synthetic_word(rng.uniform_index(o.filler_words)));
  const std::size_t at = rng.uniform_index(words.size() + 1);
  words.insert(words.begin() + static_cast<std::ptrdiff_t>(at), cue);
  return join_words(words, words.size());
}

inline std::size_t draw_label(Rng& rng, std::size_t k, const std::vector<double>& weights) {
  if (weights.empty()) return rng.uniform_index(k);
  double total = 0.0;
  for (double w : weights) total += w;
  double x = rng.uniform01() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (x < weights[i]) return i;
    x -= weights[i];
  }
  return weights.size() - 1;
}

}  // namespace detail

inline Dataset make_synthetic_pairs(const LabelSet& labels, std::size_t n, std::uint64_t seed,
                                    DatasetKind kind = DatasetKind::train, const SyntheticOptions& o = {}) {
  if (!o.class_weights.empty() && o.class_weights.size() != labels.size()) {
    throw ShapeError("class weights must have one entry per label");
  }
  Rng rng(derive_seed(seed, 0x5E7));
  std::vector<LabeledExample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = detail::draw_label(rng, labels.size(), o.class_weights);
    auto cue = [&] { return synthetic_cue_word(label, rng.uniform_index(o.cues_per_label)); };
    const auto cu = cue();
    const auto cv = cue();
    SentencePair pair{detail::synthetic_sentence(rng, o, cu), detail::synthetic_sentence(rng, o, cv)};
    std::size_t shown = label;
    if (o.label_noise > 0.0 && rng.uniform01() < o.label_noise) shown = rng.uniform_index(labels.size());
    std::optional<std::string> name;
    if (kind != DatasetKind::unlabeled) name = labels[shown];
    out.push_back({std::move(pair), std::move(name)});
  }
  return Dataset(std::move(out), labels, kind);
}

inline Dataset make_synthetic_task(std::string_view task_id, std::size_t n, std::uint64_t seed,
                                   DatasetKind kind = DatasetKind::train, const SyntheticOptions& o = {}) {
  return make_synthetic_pairs(builtin_label_set(task_id), n, seed, kind, o);
}

struct SyntheticBundle {
  Dataset pool;
  Dataset test;
  Dataset unlabeled;
};

// Leakage-free pool/test split plus an independent unlabeled set.
inline SyntheticBundle make_synthetic_bundle(std::string_view task_id, std::size_t pool_size,
                                             std::size_t test_size, std::size_t unlabeled_size,
                                             std::uint64_t seed, const SyntheticOptions& o = {}) {
  auto all = make_synthetic_task(task_id, pool_size + test_size + (pool_size + test_size) / 10 + 8, seed,
                                 DatasetKind::train, o);
  auto split = split_no_leakage(all, pool_size, test_size, derive_seed(seed, 1));
  auto unlabeled = make_synthetic_task(task_id, unlabeled_size, derive_seed(seed, 2), DatasetKind::unlabeled, o);
  return {std::move(split.train_pool), std::move(split.test), std::move(unlabeled)};
}

}  // namespace fewshot
