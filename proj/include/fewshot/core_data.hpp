#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "fewshot/errors.hpp"
#include "fewshot/random.hpp"
#include "fewshot/text.hpp"

namespace fewshot {

// (u, v) is ordered: entailment is directional.
struct SentencePair {
  std::string u;
  std::string v;

  friend bool operator==(const SentencePair&, const SentencePair&) = default;
};

// Ordered, duplicate-free label names. The position of a label is its id.
class LabelSet {
 public:
  LabelSet() = default;
  LabelSet(std::string task_id, std::vector<std::string> labels)
      : task_id_(std::move(task_id)), labels_(std::move(labels)) {
    if (labels_.size() < 2) throw ConfigError("a label set needs at least two labels");
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (labels_[i] == labels_[j]) throw ConfigError("duplicate label '" + labels_[i] + "'");
      }
    }
  }

  const std::string& task_id() const { return task_id_; }
  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }
  const std::string& operator[](std::size_t i) const { return labels_.at(i); }

  bool contains(std::string_view name) const {
    return std::find(labels_.begin(), labels_.end(), name) != labels_.end();
  }

  std::size_t index_of(std::string_view name) const {
    auto it = std::find(labels_.begin(), labels_.end(), name);
    if (it == labels_.end()) {
      throw UnknownLabelError("label '" + std::string(name) + "' is not in label set of task '" +
                              task_id_ + "'");
    }
    return static_cast<std::size_t>(it - labels_.begin());
  }

  friend bool operator==(const LabelSet&, const LabelSet&) = default;

 private:
  std::string task_id_;
  std::vector<std::string> labels_;
};

struct LabeledExample {
  SentencePair pair;
  std::optional<std::string> label;  // absent only in unlabeled datasets

  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

enum class DatasetKind { train, test, unlabeled };

inline std::string_view to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::train: return "train";
    case DatasetKind::test: return "test";
    case DatasetKind::unlabeled: return "unlabeled";
  }
  return "train";
}

inline DatasetKind parse_dataset_kind(std::string_view s) {
  if (s == "train") return DatasetKind::train;
  if (s == "test") return DatasetKind::test;
  if (s == "unlabeled") return DatasetKind::unlabeled;
  throw ConfigError("unknown dataset kind '" + std::string(s) + "'");
}

// Immutable after construction.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<LabeledExample> examples, LabelSet label_set, DatasetKind kind)
      : examples_(std::move(examples)), label_set_(std::move(label_set)), kind_(kind) {
    label_ids_.reserve(examples_.size());
    for (const auto& ex : examples_) {
      if (kind_ == DatasetKind::unlabeled) {
        if (ex.label) throw ConfigError("unlabeled dataset contains a labeled example");
        label_ids_.push_back(0);
      } else {
        if (!ex.label) throw ConfigError("labeled dataset contains an example without a label");
        label_ids_.push_back(label_set_.index_of(*ex.label));
      }
    }
  }

  const std::vector<LabeledExample>& examples() const { return examples_; }
  const LabelSet& label_set() const { return label_set_; }
  DatasetKind kind() const { return kind_; }
  std::size_t size() const { return examples_.size(); }
  bool empty() const { return examples_.empty(); }
  const LabeledExample& operator[](std::size_t i) const { return examples_.at(i); }

  // Canonical label id of example i. Meaningless for unlabeled datasets.
  std::size_t label_id(std::size_t i) const { return label_ids_.at(i); }

  Dataset subset(std::span<const std::size_t> indices, DatasetKind kind) const {
    std::vector<LabeledExample> picked;
    picked.reserve(indices.size());
    for (std::size_t i : indices) {
      auto ex = examples_.at(i);
      if (kind == DatasetKind::unlabeled) ex.label.reset();
      picked.push_back(std::move(ex));
    }
    return Dataset(std::move(picked), label_set_, kind);
  }

  Dataset with_kind(DatasetKind kind) const {
    std::vector<std::size_t> all(examples_.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return subset(all, kind);
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.kind_ == b.kind_ && a.label_set_ == b.label_set_ && a.examples_ == b.examples_;
  }

 private:
  std::vector<LabeledExample> examples_;
  LabelSet label_set_;
  DatasetKind kind_ = DatasetKind::train;
  std::vector<std::size_t> label_ids_;
};

struct SoftLabeledExample {
  SentencePair pair;
  std::vector<double> distribution;  // aligned with the LabelSet order
};

inline void check_distribution(std::span<const double> dist, double tol = 1e-9) {
  double total = 0.0;
  for (double p : dist) {
    if (!std::isfinite(p) || p < 0.0) throw NumericError("distribution entry is negative or non-finite");
    total += p;
  }
  if (std::abs(total - 1.0) > tol) throw NumericError("distribution does not sum to 1");
}

inline std::vector<double> one_hot(std::size_t index, std::size_t size) {
  std::vector<double> d(size, 0.0);
  d.at(index) = 1.0;
  return d;
}

// n distinct examples drawn uniformly without replacement, returned in pool
// order. Deterministic given (pool order, n, seed).
inline Dataset sample_training_set(const Dataset& pool, std::size_t n, std::uint64_t seed) {
  if (pool.kind() != DatasetKind::train) throw ConfigError("sampling requires a train pool");
  if (n > pool.size()) {
    throw SizeError("cannot sample " + std::to_string(n) + " examples from a pool of " +
                    std::to_string(pool.size()));
  }
  Rng rng(derive_seed(seed, 0x5A3D));
  auto picked = rng.sample_distinct(pool.size(), n);
  std::sort(picked.begin(), picked.end());
  return pool.subset(picked, DatasetKind::train);
}

struct SplitOptions {
  // Per-label share of the test set, in label-set order. Empty means no
  // per-class constraint, so the test set follows the source ratio.
  std::vector<double> test_class_ratio;
};

struct SplitResult {
  Dataset train_pool;
  Dataset test;
};

namespace detail {

struct SplitPlan {
  std::vector<std::size_t> test;
  std::vector<std::size_t> train_candidates;
};

class SplitPlanner {
 public:
  SplitPlanner(const Dataset& all, std::uint64_t seed) : all_(all) {
    std::unordered_map<std::string, std::size_t> ids;
    auto sentence_id = [&](const std::string& s) {
      auto [it, inserted] = ids.emplace(normalize_sentence(s), ids.size());
      return it->second;
    };
    pair_sentences_.reserve(all.size());
    for (const auto& ex : all.examples()) {
      const std::size_t a = sentence_id(ex.pair.u);
      const std::size_t b = sentence_id(ex.pair.v);
      pair_sentences_.emplace_back(a, b);
    }
    parent_.resize(ids.size());
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
    for (auto [a, b] : pair_sentences_) unite(a, b);

    std::unordered_map<std::size_t, std::size_t> root_to_component;
    for (std::size_t i = 0; i < pair_sentences_.size(); ++i) {
      const std::size_t root = find(pair_sentences_[i].first);
      auto [it, inserted] = root_to_component.emplace(root, components_.size());
      if (inserted) components_.emplace_back();
      components_[it->second].push_back(i);
    }
    Rng rng(derive_seed(seed, 0x51A7));
    rng.shuffle(components_);
    sentence_count_ = ids.size();
  }

  std::optional<SplitPlan> attempt(std::size_t train_pool_size, std::size_t test_size,
                                   const std::vector<double>& ratio) const {
    const bool per_class = !ratio.empty();
    const std::size_t groups = per_class ? all_.label_set().size() : 1;
    std::vector<std::size_t> quota = per_class ? class_quotas(ratio, test_size)
                                               : std::vector<std::size_t>{test_size};
    std::size_t remaining = test_size;
    auto group_of = [&](std::size_t pair) { return per_class ? all_.label_id(pair) : 0; };

    std::vector<char> in_test(all_.size(), 0);
    std::vector<char> blocked(sentence_count_, 0);
    std::vector<char> component_taken(components_.size(), 0);
    auto take = [&](std::size_t pair) {
      in_test[pair] = 1;
      blocked[pair_sentences_[pair].first] = 1;
      blocked[pair_sentences_[pair].second] = 1;
      --quota[group_of(pair)];
      --remaining;
    };

    // Whole components first: they leave no partially blocked pairs behind.
    std::vector<std::size_t> need(groups);
    for (std::size_t c = 0; c < components_.size() && remaining > 0; ++c) {
      std::fill(need.begin(), need.end(), 0);
      for (std::size_t p : components_[c]) ++need[group_of(p)];
      bool fits = true;
      for (std::size_t g = 0; g < groups; ++g) fits = fits && need[g] <= quota[g];
      if (!fits) continue;
      for (std::size_t p : components_[c]) take(p);
      component_taken[c] = 1;
    }
    for (std::size_t c = 0; c < components_.size() && remaining > 0; ++c) {
      if (component_taken[c]) continue;
      for (std::size_t p : components_[c]) {
        if (remaining == 0) break;
        if (quota[group_of(p)] > 0) take(p);
      }
    }
    if (remaining > 0) return std::nullopt;

    SplitPlan plan;
    for (std::size_t i = 0; i < all_.size(); ++i) {
      if (in_test[i]) {
        plan.test.push_back(i);
      } else if (!blocked[pair_sentences_[i].first] && !blocked[pair_sentences_[i].second]) {
        plan.train_candidates.push_back(i);
      }
    }
    if (plan.train_candidates.size() < train_pool_size) return std::nullopt;
    return plan;
  }

 private:
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

  std::vector<std::size_t> class_quotas(const std::vector<double>& ratio, std::size_t total) const {
    if (ratio.size() != all_.label_set().size()) {
      throw ShapeError("class ratio must have one entry per label");
    }
    double sum = 0.0;
    for (double r : ratio) {
      if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("class ratio entries must be >= 0");
      sum += r;
    }
    if (!(sum > 0.0)) throw ConfigError("class ratio must have a positive entry");
    std::vector<std::size_t> quota(ratio.size());
    std::vector<std::pair<double, std::size_t>> fractional;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < ratio.size(); ++i) {
      const double exact = ratio[i] / sum * static_cast<double>(total);
      quota[i] = static_cast<std::size_t>(std::floor(exact));
      assigned += quota[i];
      fractional.emplace_back(-(exact - std::floor(exact)), i);
    }
    std::sort(fractional.begin(), fractional.end());
    for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++quota[fractional[k % ratio.size()].second];
    return quota;
  }

  const Dataset& all_;
  std::vector<std::pair<std::size_t, std::size_t>> pair_sentences_;
  std::vector<std::size_t> parent_;
  std::vector<std::vector<std::size_t>> components_;
  std::size_t sentence_count_ = 0;
};

}  // namespace detail

// Partition pairs so that no normalized sentence of the train pool appears in
// any test pair. Pairs that share a sentence with the test set but are not in
// it are dropped from both sides.
inline SplitResult split_no_leakage(const Dataset& all_pairs, std::size_t train_pool_size,
                                    std::size_t test_size, std::uint64_t seed,
                                    const SplitOptions& options = {}) {
  if (all_pairs.kind() == DatasetKind::unlabeled) {
    throw ConfigError("split_no_leakage needs labeled pairs");
  }
  detail::SplitPlanner planner(all_pairs, seed);
  auto plan = planner.attempt(train_pool_size, test_size, options.test_class_ratio);
  if (!plan) {
    // Largest test size the same planner can satisfy.
    std::size_t lo = 0;
    std::size_t hi = test_size;
    if (!planner.attempt(train_pool_size, 0, options.test_class_ratio)) {
      hi = 0;
    } else {
      while (hi - lo > 1) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (planner.attempt(train_pool_size, mid, options.test_class_ratio)) lo = mid; else hi = mid;
      }
    }
    throw InfeasibleSplitError("no leakage-free split with train pool " +
                                   std::to_string(train_pool_size) + " and test " +
                                   std::to_string(test_size) + "; max achievable test size is " +
                                   std::to_string(lo),
                               lo);
  }
  Rng rng(derive_seed(seed, 0x7124));
  auto picked = rng.sample_distinct(plan->train_candidates.size(), train_pool_size);
  std::sort(picked.begin(), picked.end());
  std::vector<std::size_t> train_indices;
  train_indices.reserve(picked.size());
  for (std::size_t k : picked) train_indices.push_back(plan->train_candidates[k]);
  return {all_pairs.subset(train_indices, DatasetKind::train),
          all_pairs.subset(plan->test, DatasetKind::test)};
}

// True when no normalized sentence is shared between the two datasets.
inline bool sentences_disjoint(const Dataset& a, const Dataset& b) {
  std::unordered_set<std::string> seen;
  for (const auto& ex : a.examples()) {
    seen.insert(normalize_sentence(ex.pair.u));
    seen.insert(normalize_sentence(ex.pair.v));
  }
  for (const auto& ex : b.examples()) {
    if (seen.count(normalize_sentence(ex.pair.u)) || seen.count(normalize_sentence(ex.pair.v))) {
      return false;
    }
  }
  return true;
}

struct WordStats {
  std::size_t min = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
  double median = 0.0;
  std::size_t max = 0;
};

struct ValidationReport {
  std::size_t n = 0;
  std::vector<std::pair<std::string, std::size_t>> label_counts;  // label-set order
  std::size_t missing_labels = 0;  // labels with zero examples
  std::size_t duplicate_pairs = 0;
  std::size_t empty_sentences = 0;
  WordStats words;  // over the concatenation of u and v
};

inline WordStats word_stats(std::vector<std::size_t> counts) {
  WordStats s;
  if (counts.empty()) return s;
  std::sort(counts.begin(), counts.end());
  s.min = counts.front();
  s.max = counts.back();
  const double n = static_cast<double>(counts.size());
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  s.mean = total / n;
  if (counts.size() > 1) {
    double ss = 0.0;
    for (auto c : counts) ss += (static_cast<double>(c) - s.mean) * (static_cast<double>(c) - s.mean);
    s.std = std::sqrt(ss / (n - 1.0));
  }
  const std::size_t mid = counts.size() / 2;
  s.median = counts.size() % 2 ? static_cast<double>(counts[mid])
                               : 0.5 * static_cast<double>(counts[mid - 1] + counts[mid]);
  return s;
}

inline ValidationReport validate_dataset(const Dataset& d) {
  ValidationReport r;
  r.n = d.size();
  if (!d.label_set().labels().empty()) {
    for (const auto& l : d.label_set().labels()) r.label_counts.emplace_back(l, 0);
    if (d.kind() != DatasetKind::unlabeled && d.size() > 0) {
      for (std::size_t i = 0; i < d.size(); ++i) ++r.label_counts[d.label_id(i)].second;
      for (const auto& [l, c] : r.label_counts) r.missing_labels += c == 0 ? 1 : 0;
    }
  }
  std::set<std::pair<std::string, std::string>> seen;
  std::vector<std::size_t> counts;
  counts.reserve(d.size());
  for (const auto& ex : d.examples()) {
    auto u = normalize_sentence(ex.pair.u);
    auto v = normalize_sentence(ex.pair.v);
    r.empty_sentences += (u.empty() ? 1 : 0) + (v.empty() ? 1 : 0);
    counts.push_back(word_count(u) + word_count(v));
    if (!seen.emplace(std::move(u), std::move(v)).second) ++r.duplicate_pairs;
  }
  r.words = word_stats(std::move(counts));
  return r;
}

}  // namespace fewshot
