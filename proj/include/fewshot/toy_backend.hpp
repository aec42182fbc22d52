#pragma once

// Deterministic desk-scale backend: linear models over hashed word and
// character n-gram features. It is a trainable stand-in for a pre-trained
// transformer so every pipeline runs end to end on a laptop core.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fewshot/backend.hpp"
#include "fewshot/errors.hpp"
#include "fewshot/numeric.hpp"
#include "fewshot/prompting.hpp"
#include "fewshot/random.hpp"
#include "fewshot/text.hpp"

namespace fewshot {

inline constexpr int kToyStateVersion = 1;

inline std::vector<std::string> default_toy_vocabulary() {
  std::vector<std::string> vocab{std::string(kMaskMarker), std::string(kDefaultSeparator)};
  for (const auto& task : builtin_task_ids()) {
    for (const auto& pvp : builtin_pvps(task)) {
      for (const auto& [label, token] : pvp.verbalizer.mapping()) {
        if (std::find(vocab.begin(), vocab.end(), token) == vocab.end()) vocab.push_back(token);
      }
    }
  }
  return vocab;
}

struct ToyConfig {
  std::vector<std::string> vocabulary = default_toy_vocabulary();
  std::size_t embedding_dim = 32;
  std::size_t ngram_order = 2;  // word n-grams 1..ngram_order
  std::size_t char_ngram = 3;   // 0 disables character n-grams
  std::size_t buckets = 4096;
  double init_scale = 0.1;      // std of the initial encoder embeddings
  double lr = 0.1;
  double encoder_lr = 5.0;
  std::string separator = std::string(kDefaultSeparator);

  void validate() const {
    if (buckets < 1) throw ConfigError("toy backend needs at least one hash bucket");
    if (embedding_dim < 1) throw ConfigError("toy embedding dimension must be positive");
    if (ngram_order < 1) throw ConfigError("toy n-gram order must be at least 1");
  }
};

inline nlohmann::json to_json(const ToyConfig& c) {
  return {{"vocabulary", c.vocabulary}, {"embedding_dim", c.embedding_dim},
          {"ngram_order", c.ngram_order}, {"char_ngram", c.char_ngram},
          {"buckets", c.buckets},         {"init_scale", c.init_scale},
          {"lr", c.lr},                   {"encoder_lr", c.encoder_lr},
          {"separator", c.separator}};
}

inline ToyConfig toy_config_from_json(const nlohmann::json& j) {
  ToyConfig c;
  c.vocabulary = j.value("vocabulary", c.vocabulary);
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  c.ngram_order = j.value("ngram_order", c.ngram_order);
  c.char_ngram = j.value("char_ngram", c.char_ngram);
  c.buckets = j.value("buckets", c.buckets);
  c.init_scale = j.value("init_scale", c.init_scale);
  c.lr = j.value("lr", c.lr);
  c.encoder_lr = j.value("encoder_lr", c.encoder_lr);
  c.separator = j.value("separator", c.separator);
  c.validate();
  return c;
}

struct SparseVector {
  std::vector<std::uint32_t> index;  // strictly increasing
  std::vector<double> value;

  double total() const {
    double t = 0.0;
    for (double v : value) t += v;
    return t;
  }
};

namespace toy {

// Words are maximal runs of ASCII alphanumerics or non-ASCII bytes,
// lower-cased.
inline std::vector<std::string> words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

class FeatureAccumulator {
 public:
  explicit FeatureAccumulator(std::size_t buckets) : buckets_(buckets) {}

  void add(std::string_view family, std::string_view key, double weight = 1.0) {
    const std::uint64_t h = fnv1a64(key, fnv1a64(family));
    counts_[static_cast<std::uint32_t>(h % buckets_)] += weight;
  }

  SparseVector take() {
    SparseVector v;
    v.index.reserve(counts_.size());
    v.value.reserve(counts_.size());
    for (const auto& [i, c] : counts_) {
      v.index.push_back(i);
      v.value.push_back(c);
    }
    return v;
  }

 private:
  std::size_t buckets_;
  std::map<std::uint32_t, double> counts_;
};

inline void add_text_features(FeatureAccumulator& acc, const std::vector<std::string>& ws,
                              const ToyConfig& cfg) {
  for (std::size_t i = 0; i < ws.size(); ++i) {
    std::string gram = ws[i];
    acc.add("w", gram);
    for (std::size_t n = 2; n <= cfg.ngram_order && i + n <= ws.size(); ++n) {
      gram += ' ';
      gram += ws[i + n - 1];
      acc.add("w", gram);
    }
    if (cfg.char_ngram > 0) {
      const std::string padded = "<" + ws[i] + ">";
      if (padded.size() <= cfg.char_ngram) {
        acc.add("c", padded);
      } else {
        for (std::size_t k = 0; k + cfg.char_ngram <= padded.size(); ++k) {
          acc.add("c", std::string_view(padded).substr(k, cfg.char_ngram));
        }
      }
    }
  }
}

// Raw feature counts of a text.
inline SparseVector text_features(std::string_view text, const ToyConfig& cfg) {
  FeatureAccumulator acc(cfg.buckets);
  add_text_features(acc, words(text), cfg);
  return acc.take();
}

// Cloze features: the text without the mask marker, plus the two words on
// each side of the mask tagged by their offset.
inline SparseVector cloze_features(const ClozeInput& cloze, const ToyConfig& cfg) {
  if (cloze.mask_position > cloze.text.size()) throw ShapeError("mask position outside the cloze text");
  const std::string_view text(cloze.text);
  const auto left = words(text.substr(0, cloze.mask_position));
  const std::size_t after = std::min(text.size(), cloze.mask_position + kMaskMarker.size());
  const auto right = words(text.substr(after));
  FeatureAccumulator acc(cfg.buckets);
  auto all = left;
  all.insert(all.end(), right.begin(), right.end());
  add_text_features(acc, all, cfg);
  for (std::size_t k = 0; k < 2; ++k) {
    if (k < left.size()) acc.add("l" + std::to_string(k + 1), left[left.size() - 1 - k]);
    if (k < right.size()) acc.add("r" + std::to_string(k + 1), right[k]);
  }
  return acc.take();
}

inline SparseVector l2_normalized(SparseVector v) {
  double ss = 0.0;
  for (double x : v.value) ss += x * x;
  if (ss > 0.0) {
    const double inv = 1.0 / std::sqrt(ss);
    for (double& x : v.value) x *= inv;
  }
  return v;
}

inline nlohmann::json sparse_rows_to_json(const std::vector<double>& w, std::size_t rows, std::size_t cols) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t r = 0; r < rows; ++r) {
    nlohmann::json idx = nlohmann::json::array();
    nlohmann::json val = nlohmann::json::array();
    for (std::size_t c = 0; c < cols; ++c) {
      const double x = w[r * cols + c];
      if (x != 0.0) {
        idx.push_back(c);
        val.push_back(x);
      }
    }
    out.push_back({{"index", idx}, {"value", val}});
  }
  return out;
}

inline std::vector<double> sparse_rows_from_json(const nlohmann::json& j, std::size_t rows, std::size_t cols) {
  if (j.size() != rows) throw LoadError("toy state has the wrong number of weight rows");
  std::vector<double> w(rows * cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto idx = j[r].at("index").get<std::vector<std::size_t>>();
    const auto val = j[r].at("value").get<std::vector<double>>();
    if (idx.size() != val.size()) throw LoadError("toy state row is malformed");
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (idx[k] >= cols) throw LoadError("toy state index out of range");
      w[r * cols + idx[k]] = val[k];
    }
  }
  return w;
}

inline void check_state_header(const nlohmann::json& j, std::string_view kind) {
  if (j.value("format", "") != "fewshot-toy") throw LoadError("not a toy backend state");
  if (j.value("version", 0) != kToyStateVersion) throw LoadError("unsupported toy state version");
  if (j.value("kind", "") != kind) throw LoadError("toy state is not a " + std::string(kind));
}

}  // namespace toy

// Linear softmax over selected rows: logit_k = w_k . x + b_k. Zero-initialized.
class LinearSoftmax {
 public:
  struct Sample {
    SparseVector x;               // already normalized
    std::vector<double> target;   // distribution over the selected rows
  };

  LinearSoftmax(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), w_(rows * cols, 0.0), b_(rows, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::vector<double>& weights() { return w_; }
  std::vector<double>& bias() { return b_; }
  const std::vector<double>& weights() const { return w_; }
  const std::vector<double>& bias() const { return b_; }

  double logit(std::size_t row, const SparseVector& x) const {
    double s = b_[row];
    const double* w = w_.data() + row * cols_;
    for (std::size_t k = 0; k < x.index.size(); ++k) s += w[x.index[k]] * x.value[k];
    return s;
  }

  std::vector<double> logits(std::span<const std::size_t> rows, const SparseVector& x) const {
    std::vector<double> out(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) out[k] = logit(rows[k], x);
    return out;
  }

  // Mean cross-entropy and its dense gradient (row-major like weights()).
  double loss_and_gradient(std::span<const Sample> data, std::span<const std::size_t> rows,
                           std::vector<double>* grad_w, std::vector<double>* grad_b) const {
    if (grad_w) grad_w->assign(w_.size(), 0.0);
    if (grad_b) grad_b->assign(b_.size(), 0.0);
    if (data.empty()) return 0.0;
    const double inv_n = 1.0 / static_cast<double>(data.size());
    double loss = 0.0;
    for (const auto& s : data) {
      const auto z = logits(rows, s.x);
      const auto p = softmax(z);
      const double lse = log_sum_exp(z);
      for (std::size_t k = 0; k < rows.size(); ++k) {
        if (s.target[k] > 0.0) loss -= s.target[k] * (z[k] - lse) * inv_n;
        const double g = (p[k] - s.target[k]) * inv_n;
        if (grad_w) {
          double* gw = grad_w->data() + rows[k] * cols_;
          for (std::size_t i = 0; i < s.x.index.size(); ++i) gw[s.x.index[i]] += g * s.x.value[i];
        }
        if (grad_b) (*grad_b)[rows[k]] += g;
      }
    }
    return loss;
  }

  TrainStats sgd(std::span<const Sample> data, std::span<const std::size_t> rows, const TrainOptions& opt) {
    TrainStats stats;
    if (opt.steps == 0) return stats;
    if (data.empty()) throw NoDataError("no training examples");
    BatchSchedule schedule(data.size(), opt.batch, opt.seed);
    const double scale = opt.lr / static_cast<double>(opt.batch);
    std::vector<std::vector<double>> grads(opt.batch);
    stats.step_losses.reserve(opt.steps);
    for (std::size_t step = opt.start_step; step < opt.start_step + opt.steps; ++step) {
      const auto batch = schedule.indices(step);
      double loss = 0.0;
      for (std::size_t j = 0; j < batch.size(); ++j) {
        const auto& s = data[batch[j]];
        const auto z = logits(rows, s.x);
        const auto p = softmax(z);
        const double lse = log_sum_exp(z);
        grads[j].resize(rows.size());
        for (std::size_t k = 0; k < rows.size(); ++k) {
          if (s.target[k] > 0.0) loss -= s.target[k] * (z[k] - lse);
          grads[j][k] = p[k] - s.target[k];
        }
      }
      for (std::size_t j = 0; j < batch.size(); ++j) {
        const auto& x = data[batch[j]].x;
        for (std::size_t k = 0; k < rows.size(); ++k) {
          const double coef = scale * grads[j][k];
          if (coef == 0.0) continue;
          double* w = w_.data() + rows[k] * cols_;
          for (std::size_t i = 0; i < x.index.size(); ++i) w[x.index[i]] -= coef * x.value[i];
          b_[rows[k]] -= coef;
        }
      }
      stats.step_losses.push_back(loss / static_cast<double>(batch.size()));
    }
    return stats;
  }

  nlohmann::json to_json() const {
    return {{"weights", toy::sparse_rows_to_json(w_, rows_, cols_)}, {"bias", b_}};
  }

  void load(const nlohmann::json& j) {
    w_ = toy::sparse_rows_from_json(j.at("weights"), rows_, cols_);
    b_ = j.at("bias").get<std::vector<double>>();
    if (b_.size() != rows_) throw LoadError("toy state bias has the wrong size");
  }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> w_;
  std::vector<double> b_;
};

class ToyScorer final : public MaskedScorer {
 public:
  using AccessHook = std::function<void(std::string_view token)>;

  explicit ToyScorer(ToyConfig cfg)
      : cfg_(std::move(cfg)), model_(cfg_.vocabulary.size(), cfg_.buckets) {
    for (std::size_t i = 0; i < cfg_.vocabulary.size(); ++i) vocab_.emplace(cfg_.vocabulary[i], i);
  }

  // Called once per vocabulary row read while scoring.
  void set_access_hook(AccessHook hook) { hook_ = std::move(hook); }

  std::vector<std::size_t> rows_for(std::span<const std::string> tokens) const {
    std::vector<std::size_t> rows;
    rows.reserve(tokens.size());
    for (const auto& t : tokens) {
      auto it = vocab_.find(t);
      if (it == vocab_.end()) throw VocabularyError("token '" + t + "' is not in the toy vocabulary");
      rows.push_back(it->second);
    }
    return rows;
  }

  TokenScores score(const ClozeInput& cloze, std::span<const std::string> candidates) const override {
    const auto rows = rows_for(candidates);
    const auto x = toy::l2_normalized(toy::cloze_features(cloze, cfg_));
    TokenScores out;
    out.tokens.assign(candidates.begin(), candidates.end());
    out.scores.resize(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (hook_) hook_(candidates[k]);
      out.scores[k] = model_.logit(rows[k], x);
    }
    return out;
  }

  std::vector<LinearSoftmax::Sample> samples(std::span<const MlmExample> data,
                                             std::span<const std::string> candidates) const {
    std::vector<LinearSoftmax::Sample> out;
    out.reserve(data.size());
    for (const auto& ex : data) {
      auto it = std::find(candidates.begin(), candidates.end(), ex.target);
      if (it == candidates.end()) throw VocabularyError("target '" + ex.target + "' is not a candidate");
      out.push_back({toy::l2_normalized(toy::cloze_features(ex.cloze, cfg_)),
                     one_hot(static_cast<std::size_t>(it - candidates.begin()), candidates.size())});
    }
    return out;
  }

  TrainStats train_mlm(std::span<const MlmExample> data, std::span<const std::string> candidates,
                       const TrainOptions& options) override {
    const auto rows = rows_for(candidates);
    if (options.steps == 0) return {};
    if (data.empty()) throw NoDataError("train_mlm called without examples");
    const auto s = samples(data, candidates);
    return model_.sgd(s, rows, options);
  }

  LinearSoftmax& model() { return model_; }
  const LinearSoftmax& model() const { return model_; }
  const ToyConfig& config() const { return cfg_; }

  nlohmann::json save() const override {
    return {{"format", "fewshot-toy"}, {"version", kToyStateVersion}, {"kind", "scorer"},
            {"config", to_json(cfg_)}, {"model", model_.to_json()}};
  }

  static std::unique_ptr<ToyScorer> load(const nlohmann::json& j) {
    toy::check_state_header(j, "scorer");
    auto s = std::make_unique<ToyScorer>(toy_config_from_json(j.at("config")));
    s->model_.load(j.at("model"));
    return s;
  }

 private:
  ToyConfig cfg_;
  LinearSoftmax model_;
  std::unordered_map<std::string, std::size_t> vocab_;
  AccessHook hook_;
};

class ToyClassifier final : public SequenceClassifier {
 public:
  ToyClassifier(ToyConfig cfg, std::size_t num_labels)
      : cfg_(std::move(cfg)), model_(num_labels, cfg_.buckets), all_rows_(num_labels) {
    if (num_labels < 2) throw ConfigError("a classifier needs at least two labels");
    for (std::size_t i = 0; i < num_labels; ++i) all_rows_[i] = i;
  }

  std::size_t num_labels() const override { return all_rows_.size(); }

  SparseVector features(const JoinedText& input) const {
    return toy::l2_normalized(toy::text_features(input.text, cfg_));
  }

  std::vector<LinearSoftmax::Sample> samples(std::span<const SoftTarget> data) const {
    std::vector<LinearSoftmax::Sample> out;
    out.reserve(data.size());
    for (const auto& ex : data) {
      if (ex.distribution.size() != num_labels()) {
        throw ShapeError("target distribution has " + std::to_string(ex.distribution.size()) +
                         " entries for " + std::to_string(num_labels()) + " labels");
      }
      check_distribution(ex.distribution);
      out.push_back({features(ex.input), ex.distribution});
    }
    return out;
  }

  TrainStats train(std::span<const SoftTarget> data, const TrainOptions& options) override {
    const auto s = samples(data);
    if (options.steps == 0) return {};
    if (s.empty()) throw NoDataError("classifier training called without examples");
    return model_.sgd(s, all_rows_, options);
  }

  std::vector<double> predict(const JoinedText& input) const override {
    return model_.logits(all_rows_, features(input));
  }

  LinearSoftmax& model() { return model_; }
  const std::vector<std::size_t>& rows() const { return all_rows_; }

  nlohmann::json save() const override {
    return {{"format", "fewshot-toy"}, {"version", kToyStateVersion}, {"kind", "classifier"},
            {"config", to_json(cfg_)}, {"num_labels", num_labels()}, {"model", model_.to_json()}};
  }

  static std::unique_ptr<ToyClassifier> load(const nlohmann::json& j) {
    toy::check_state_header(j, "classifier");
    auto c = std::make_unique<ToyClassifier>(toy_config_from_json(j.at("config")),
                                             j.at("num_labels").get<std::size_t>());
    c->model_.load(j.at("model"));
    return c;
  }

 private:
  ToyConfig cfg_;
  LinearSoftmax model_;
  std::vector<std::size_t> all_rows_;
};

// Mean-pooled hashed n-gram embeddings.
class ToyEncoder final : public SentenceEncoder {
 public:
  static constexpr double kNormEpsilon = 1e-12;

  ToyEncoder(ToyConfig cfg, std::uint64_t seed)
      : cfg_(std::move(cfg)), table_(cfg_.buckets * cfg_.embedding_dim) {
    Rng rng(derive_seed(seed, 0xE4C0));
    for (double& x : table_) x = cfg_.init_scale * rng.normal();
  }

  std::size_t dimension() const override { return cfg_.embedding_dim; }

  std::vector<double> pool(const SparseVector& counts) const {
    std::vector<double> e(cfg_.embedding_dim, 0.0);
    const double total = counts.total();
    if (total <= 0.0) return e;
    for (std::size_t k = 0; k < counts.index.size(); ++k) {
      const double w = counts.value[k] / total;
      const double* row = table_.data() + counts.index[k] * cfg_.embedding_dim;
      for (std::size_t d = 0; d < cfg_.embedding_dim; ++d) e[d] += w * row[d];
    }
    return e;
  }

  std::vector<double> encode(std::string_view text) const override {
    return pool(toy::text_features(text, cfg_));
  }

  struct Prepared {
    SparseVector a;
    SparseVector b;
    double similarity;
  };

  std::vector<Prepared> prepare(std::span<const ContrastiveTriplet> triplets) const {
    std::vector<Prepared> out;
    out.reserve(triplets.size());
    for (const auto& t : triplets) {
      if (t.similarity != 0 && t.similarity != 1) throw ConfigError("similarity labels must be 0 or 1");
      out.push_back({toy::text_features(t.text_a, cfg_), toy::text_features(t.text_b, cfg_),
                     static_cast<double>(t.similarity)});
    }
    return out;
  }

  // Mean squared cosine error over `items`; when grad is given it receives
  // the dense gradient with respect to the embedding table.
  double loss_and_gradient(std::span<const Prepared> items, std::vector<double>* grad) const {
    if (grad) grad->assign(table_.size(), 0.0);
    if (items.empty()) return 0.0;
    const double inv_n = 1.0 / static_cast<double>(items.size());
    double loss = 0.0;
    std::vector<double> ga, gb;
    for (const auto& it : items) {
      const double r = pair_terms(it, ga, gb);
      loss += r * r * inv_n;
      if (grad) {
        scatter(it.a, ga, 2.0 * r * inv_n, *grad);
        scatter(it.b, gb, 2.0 * r * inv_n, *grad);
      }
    }
    return loss;
  }

  TrainStats fit(std::span<const ContrastiveTriplet> triplets, const TrainOptions& opt) override {
    const auto items = prepare(triplets);
    TrainStats stats;
    if (opt.steps == 0) return stats;
    if (items.empty()) throw NoDataError("encoder fit called without triplets");
    BatchSchedule schedule(items.size(), opt.batch, opt.seed);
    std::vector<double> grad(table_.size(), 0.0);
    std::vector<std::uint32_t> touched;
    std::vector<double> ga, gb;
    const double inv_b = 1.0 / static_cast<double>(opt.batch);
    for (std::size_t step = opt.start_step; step < opt.start_step + opt.steps; ++step) {
      const auto batch = schedule.indices(step);
      double loss = 0.0;
      touched.clear();
      for (std::size_t j : batch) {
        const auto& it = items[j];
        const double r = pair_terms(it, ga, gb);
        loss += r * r * inv_b;
        scatter(it.a, ga, 2.0 * r * inv_b, grad);
        scatter(it.b, gb, 2.0 * r * inv_b, grad);
        touched.insert(touched.end(), it.a.index.begin(), it.a.index.end());
        touched.insert(touched.end(), it.b.index.begin(), it.b.index.end());
      }
      std::sort(touched.begin(), touched.end());
      touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
      for (std::uint32_t row : touched) {
        double* g = grad.data() + row * cfg_.embedding_dim;
        double* w = table_.data() + row * cfg_.embedding_dim;
        for (std::size_t d = 0; d < cfg_.embedding_dim; ++d) {
          w[d] -= opt.lr * g[d];
          g[d] = 0.0;
        }
      }
      stats.step_losses.push_back(loss);
    }
    return stats;
  }

  std::vector<double>& table() { return table_; }
  const std::vector<double>& table() const { return table_; }

  nlohmann::json save() const override {
    return {{"format", "fewshot-toy"}, {"version", kToyStateVersion}, {"kind", "encoder"},
            {"config", to_json(cfg_)}, {"table", table_}};
  }

  static std::unique_ptr<ToyEncoder> load(const nlohmann::json& j) {
    toy::check_state_header(j, "encoder");
    auto e = std::make_unique<ToyEncoder>(toy_config_from_json(j.at("config")), 0);
    e->table_ = j.at("table").get<std::vector<double>>();
    if (e->table_.size() != e->cfg_.buckets * e->cfg_.embedding_dim) {
      throw LoadError("toy encoder table has the wrong size");
    }
    return e;
  }

 private:
  // Residual cos - y and d(cos)/da, d(cos)/db. Norms below kNormEpsilon are
  // clamped, so zero embeddings never divide by zero.
  double pair_terms(const Prepared& it, std::vector<double>& ga, std::vector<double>& gb) const {
    const auto a = pool(it.a);
    const auto b = pool(it.b);
    const double na_raw = l2_norm(a), nb_raw = l2_norm(b);
    const double na = std::max(na_raw, kNormEpsilon), nb = std::max(nb_raw, kNormEpsilon);
    const double cos = dot(a, b) / (na * nb);
    ga.assign(a.size(), 0.0);
    gb.assign(b.size(), 0.0);
    for (std::size_t d = 0; d < a.size(); ++d) {
      ga[d] = b[d] / (na * nb) - (na_raw > kNormEpsilon ? cos * a[d] / (na * na) : 0.0);
      gb[d] = a[d] / (na * nb) - (nb_raw > kNormEpsilon ? cos * b[d] / (nb * nb) : 0.0);
    }
    return cos - it.similarity;
  }

  // d(pooled)/d(row i) = count_i / total, so the upstream gradient spreads
  // over the rows of the text's features.
  void scatter(const SparseVector& counts, const std::vector<double>& upstream, double coef,
               std::vector<double>& grad) const {
    const double total = counts.total();
    if (total <= 0.0) return;
    for (std::size_t k = 0; k < counts.index.size(); ++k) {
      const double w = coef * counts.value[k] / total;
      double* g = grad.data() + counts.index[k] * cfg_.embedding_dim;
      for (std::size_t d = 0; d < cfg_.embedding_dim; ++d) g[d] += w * upstream[d];
    }
  }

  ToyConfig cfg_;
  std::vector<double> table_;  // buckets x embedding_dim, row-major
};

class ToyBackend final : public Backend {
 public:
  explicit ToyBackend(ToyConfig cfg = {}) : cfg_(std::move(cfg)) { cfg_.validate(); }

  std::string name() const override { return "toy"; }
  const ToyConfig& config() const { return cfg_; }

  std::unique_ptr<MaskedScorer> make_scorer(std::uint64_t) const override {
    return std::make_unique<ToyScorer>(cfg_);
  }
  std::unique_ptr<SequenceClassifier> make_classifier(std::size_t num_labels, std::uint64_t) const override {
    return std::make_unique<ToyClassifier>(cfg_, num_labels);
  }
  std::unique_ptr<SentenceEncoder> make_encoder(std::uint64_t seed) const override {
    return std::make_unique<ToyEncoder>(cfg_, seed);
  }

  std::unique_ptr<MaskedScorer> load_scorer(const nlohmann::json& state) const override {
    return ToyScorer::load(state);
  }
  std::unique_ptr<SequenceClassifier> load_classifier(const nlohmann::json& state) const override {
    return ToyClassifier::load(state);
  }
  std::unique_ptr<SentenceEncoder> load_encoder(const nlohmann::json& state) const override {
    return ToyEncoder::load(state);
  }

  std::size_t token_count(std::string_view text) const override { return word_count(text); }
  std::string separator() const override { return cfg_.separator; }

  void check_tokens(std::span<const std::string> tokens) const override {
    for (const auto& t : tokens) {
      if (std::find(cfg_.vocabulary.begin(), cfg_.vocabulary.end(), t) == cfg_.vocabulary.end()) {
        throw VocabularyError("token '" + t + "' is not in the toy vocabulary");
      }
    }
  }

  double default_lr() const override { return cfg_.lr; }
  double default_encoder_lr() const override { return cfg_.encoder_lr; }

 private:
  ToyConfig cfg_;
};

}  // namespace fewshot
