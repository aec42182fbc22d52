#pragma once

// SetFit-style training: contrastive fitting of a sentence encoder on joined
// pairs, then a multinomial logistic head on the resulting embeddings.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fewshot/backend.hpp"
#include "fewshot/classifier_ops.hpp"
#include "fewshot/core_data.hpp"
#include "fewshot/errors.hpp"
#include "fewshot/log.hpp"
#include "fewshot/metrics.hpp"
#include "fewshot/numeric.hpp"
#include "fewshot/random.hpp"

namespace fewshot {

struct SetFitConfig {
  std::size_t R = 10;  // triplets per class per polarity
  std::size_t epochs = 1;
  std::size_t batch = 16;
  std::optional<double> lr;  // backend encoder default when unset
  std::size_t max_len = 256;
  std::uint64_t seed = 0;
  double l2 = 1e-4;
  std::size_t head_max_iter = 500;
  double head_tol = 1e-6;

  void validate() const {
    if (R < 1) throw ConfigError("R must be >= 1");
    if (batch == 0) throw ConfigError("batch size must be positive");
    if (!(l2 >= 0.0)) throw ConfigError("l2 strength must be >= 0");
  }
};

inline nlohmann::json to_json(const SetFitConfig& c) {
  nlohmann::json j{{"R", c.R},           {"epochs", c.epochs}, {"batch", c.batch},
                   {"max_len", c.max_len}, {"seed", c.seed},     {"l2", c.l2},
                   {"head_max_iter", c.head_max_iter}, {"head_tol", c.head_tol}};
  j["lr"] = c.lr ? nlohmann::json(*c.lr) : nlohmann::json(nullptr);
  return j;
}

namespace detail {

// k unordered index pairs drawn from a population of `count` pairs indexed by
// pair_at(i). Distinct while possible, then with replacement.
template <typename PairAt>
std::vector<std::pair<std::size_t, std::size_t>> draw_pairs(Rng& rng, std::size_t count, std::size_t k,
                                                            PairAt pair_at, const std::string& what) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(k);
  const std::size_t distinct = std::min(count, k);
  for (std::size_t i : rng.sample_distinct(count, distinct)) out.push_back(pair_at(i));
  if (k > count) {
    warn(what + ": only " + std::to_string(count) + " distinct pairs for " + std::to_string(k) +
         " triplets; sampling with replacement");
    while (out.size() < k) out.push_back(pair_at(rng.uniform_index(count)));
  }
  return out;
}

// i-th unordered pair (a < b) of n items in lexicographic order.
inline std::pair<std::size_t, std::size_t> unordered_pair_at(std::size_t i, std::size_t n) {
  std::size_t a = 0;
  std::size_t row = n - 1;
  while (i >= row) {
    i -= row;
    ++a;
    --row;
  }
  return {a, a + 1 + i};
}

}  // namespace detail

// For each label, R same-class pairs (similarity 1) and R pairs with one side
// in the class and the other outside it (similarity 0). 2 * R * |labels| in
// total, grouped by label in label order.
inline std::vector<ContrastiveTriplet> generate_contrastive(const Dataset& train, std::size_t R, std::uint64_t seed,
                                                            const InputFormat& format = {}) {
  const auto& labels = train.label_set();
  std::vector<std::vector<std::size_t>> by_class(labels.size());
  for (std::size_t i = 0; i < train.size(); ++i) by_class[train.label_id(i)].push_back(i);
  if (R > 0) {
    for (std::size_t c = 0; c < labels.size(); ++c) {
      if (by_class[c].size() < 2) {
        throw InfeasibleError("class '" + labels[c] + "' has " + std::to_string(by_class[c].size()) +
                              " examples; positive triplets need at least 2");
      }
    }
  }
  std::vector<JoinedText> texts;
  texts.reserve(train.size());
  for (const auto& ex : train.examples()) texts.push_back(format.join(ex.pair));

  Rng rng(derive_seed(seed, 0x5E7F));
  std::vector<ContrastiveTriplet> out;
  out.reserve(2 * R * labels.size());
  auto emit = [&](std::size_t a, std::size_t b, int similarity) {
    out.push_back({texts[a].text, texts[b].text, similarity, a, b});
  };
  for (std::size_t c = 0; c < labels.size(); ++c) {
    const auto& in = by_class[c];
    std::vector<std::size_t> others;
    for (std::size_t d = 0; d < labels.size(); ++d) {
      if (d != c) others.insert(others.end(), by_class[d].begin(), by_class[d].end());
    }
    std::sort(others.begin(), others.end());
    const std::size_t n = in.size();
    auto positives = detail::draw_pairs(
        rng, n * (n - 1) / 2, R, [&](std::size_t i) { return detail::unordered_pair_at(i, n); },
        "positive triplets for '" + labels[c] + "'");
    for (auto [a, b] : positives) emit(in[a], in[b], 1);
    if (others.empty()) throw InfeasibleError("negative triplets need examples outside class '" + labels[c] + "'");
    auto negatives = detail::draw_pairs(
        rng, n * others.size(), R,
        [&](std::size_t i) { return std::pair<std::size_t, std::size_t>{i / others.size(), i % others.size()}; },
        "negative triplets for '" + labels[c] + "'");
    for (auto [a, b] : negatives) emit(in[a], others[b], 0);
  }
  return out;
}

// Multinomial logistic regression with L2 penalty, fitted by full-batch
// gradient descent with a backtracking (Armijo) line search.
class LogisticHead {
 public:
  LogisticHead() = default;
  LogisticHead(std::size_t num_labels, std::size_t dim) : k_(num_labels), d_(dim), w_(num_labels * (dim + 1), 0.0) {}

  std::size_t num_labels() const { return k_; }
  std::size_t dimension() const { return d_; }
  // Row-major k x (d + 1); the last column is the bias (not penalized).
  const std::vector<double>& coefficients() const { return w_; }
  std::vector<double>& coefficients() { return w_; }
  const std::vector<double>& objective_trace() const { return trace_; }

  std::vector<double> logits(std::span<const double> x) const {
    if (x.size() != d_) {
      throw ShapeError("embedding has dimension " + std::to_string(x.size()) + ", head expects " +
                       std::to_string(d_));
    }
    std::vector<double> z(k_);
    for (std::size_t c = 0; c < k_; ++c) {
      const double* w = w_.data() + c * (d_ + 1);
      double s = w[d_];
      for (std::size_t i = 0; i < d_; ++i) s += w[i] * x[i];
      z[c] = s;
    }
    return z;
  }

  std::vector<double> probabilities(std::span<const double> x) const { return softmax(logits(x)); }

  // Mean cross-entropy plus 0.5 * l2 * |W|^2 (bias excluded), at coefficients w.
  double objective(std::span<const std::vector<double>> xs, std::span<const std::size_t> ys, double l2,
                   std::span<const double> w, std::vector<double>* grad) const {
    if (grad) grad->assign(w.size(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(xs.size());
    double f = 0.0;
    std::vector<double> z(k_);
    for (std::size_t n = 0; n < xs.size(); ++n) {
      const auto& x = xs[n];
      for (std::size_t c = 0; c < k_; ++c) {
        const double* wc = w.data() + c * (d_ + 1);
        double s = wc[d_];
        for (std::size_t i = 0; i < d_; ++i) s += wc[i] * x[i];
        z[c] = s;
      }
      const double lse = log_sum_exp(z);
      f += (lse - z[ys[n]]) * inv_n;
      if (grad) {
        for (std::size_t c = 0; c < k_; ++c) {
          const double g = (std::exp(z[c] - lse) - (c == ys[n] ? 1.0 : 0.0)) * inv_n;
          double* gc = grad->data() + c * (d_ + 1);
          for (std::size_t i = 0; i < d_; ++i) gc[i] += g * x[i];
          gc[d_] += g;
        }
      }
    }
    for (std::size_t c = 0; c < k_; ++c) {
      for (std::size_t i = 0; i < d_; ++i) {
        const double wi = w[c * (d_ + 1) + i];
        f += 0.5 * l2 * wi * wi;
        if (grad) (*grad)[c * (d_ + 1) + i] += l2 * wi;
      }
    }
    return f;
  }

  void fit(std::span<const std::vector<double>> xs, std::span<const std::size_t> ys, double l2,
           std::size_t max_iter, double tol) {
    if (xs.empty()) throw NoDataError("logistic head needs training data");
    if (xs.size() != ys.size()) throw ShapeError("embedding/label count mismatch");
    for (const auto& x : xs) {
      if (x.size() != d_) throw ShapeError("embedding dimension mismatch while fitting the head");
    }
    for (auto y : ys) {
      if (y >= k_) throw ShapeError("label id out of range");
    }
    trace_.clear();
    std::vector<double> g, trial(w_.size());
    double f = objective(xs, ys, l2, w_, &g);
    trace_.push_back(f);
    double step = 1.0;
    for (std::size_t it = 0; it < max_iter; ++it) {
      double gmax = 0.0, gg = 0.0;
      for (double x : g) {
        gmax = std::max(gmax, std::abs(x));
        gg += x * x;
      }
      if (gmax < tol) break;
      step = std::min(step * 2.0, 1e6);
      double f_new = f;
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls) {
        for (std::size_t i = 0; i < w_.size(); ++i) trial[i] = w_[i] - step * g[i];
        f_new = objective(xs, ys, l2, trial, nullptr);
        if (f_new <= f - 1e-4 * step * gg) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
      w_.swap(trial);
      f = objective(xs, ys, l2, w_, &g);
      trace_.push_back(f);
    }
  }

  nlohmann::json to_json() const { return {{"num_labels", k_}, {"dimension", d_}, {"coefficients", w_}}; }

  static LogisticHead from_json(const nlohmann::json& j) {
    LogisticHead h(j.at("num_labels").get<std::size_t>(), j.at("dimension").get<std::size_t>());
    h.w_ = j.at("coefficients").get<std::vector<double>>();
    if (h.w_.size() != h.k_ * (h.d_ + 1)) throw LoadError("head coefficient matrix has the wrong size");
    return h;
  }

 private:
  std::size_t k_ = 0;
  std::size_t d_ = 0;
  std::vector<double> w_;
  std::vector<double> trace_;
};

struct SetFitModel {
  std::unique_ptr<SentenceEncoder> encoder;
  LogisticHead head;
  LabelSet labels;
  InputFormat format;
  SetFitConfig config;
  std::size_t triplet_count = 0;
  TrainStats encoder_stats;
};

// ceil(|triplets| / batch) * epochs optimizer steps.
inline std::size_t epochs_to_steps(std::size_t n, std::size_t batch, std::size_t epochs) {
  if (batch == 0) throw ConfigError("batch size must be positive");
  return (n + batch - 1) / batch * epochs;
}

inline SetFitModel setfit_fit(const SetFitConfig& config, const Dataset& train, const Backend& backend) {
  config.validate();
  if (train.empty()) throw NoDataError("SetFit needs at least one labeled example");
  const auto format = InputFormat::for_backend(backend, config.max_len);
  SetFitModel m{backend.make_encoder(config.seed), {}, train.label_set(), format, config, 0, {}};
  const auto triplets = generate_contrastive(train, config.R, config.seed, format);
  m.triplet_count = triplets.size();
  const std::size_t steps = epochs_to_steps(triplets.size(), config.batch, config.epochs);
  m.encoder_stats = m.encoder->fit(
      triplets, TrainOptions{steps, config.batch, config.lr.value_or(backend.default_encoder_lr()), config.seed});

  std::vector<std::vector<double>> xs;
  std::vector<std::size_t> ys;
  xs.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    xs.push_back(m.encoder->encode(format.join(train[i].pair).text));
    ys.push_back(train.label_id(i));
  }
  m.head = LogisticHead(train.label_set().size(), m.encoder->dimension());
  m.head.fit(xs, ys, config.l2, config.head_max_iter, config.head_tol);
  return m;
}

// The pair is always joined before encoding, even when one side is empty.
inline Prediction setfit_predict(const SentenceEncoder& encoder, const LogisticHead& head, const SentencePair& pair,
                                 const LabelSet& labels, const InputFormat& format) {
  if (encoder.dimension() != head.dimension()) {
    throw ShapeError("encoder dimension " + std::to_string(encoder.dimension()) + " does not match head dimension " +
                     std::to_string(head.dimension()));
  }
  if (head.num_labels() != labels.size()) throw ShapeError("head/label set size mismatch");
  auto probs = head.probabilities(encoder.encode(format.join(pair).text));
  const std::size_t id = argmax(probs);
  return {id, labels[id], std::move(probs)};
}

inline Prediction setfit_predict(const SetFitModel& m, const SentencePair& pair) {
  return setfit_predict(*m.encoder, m.head, pair, m.labels, m.format);
}

inline EvalReport evaluate_setfit(const SetFitModel& m, const Dataset& test) {
  std::vector<std::size_t> preds;
  preds.reserve(test.size());
  for (const auto& ex : test.examples()) preds.push_back(setfit_predict(m, ex.pair).label_id);
  return evaluate_predictions(test, preds);
}

inline constexpr int kSetFitBundleVersion = 1;

inline nlohmann::json setfit_bundle(const SetFitModel& m, const Backend& backend) {
  return {{"format", "fewshot-setfit"},
          {"version", kSetFitBundleVersion},
          {"backend", backend.name()},
          {"task_id", m.labels.task_id()},
          {"labels", m.labels.labels()},
          {"config", to_json(m.config)},
          {"triplets", m.triplet_count},
          {"encoder", m.encoder->save()},
          {"head", m.head.to_json()}};
}

inline SetFitModel load_setfit_bundle(const nlohmann::json& j, const Backend& backend) {
  if (j.value("format", "") != "fewshot-setfit" || j.value("version", 0) != kSetFitBundleVersion) {
    throw LoadError("not a version " + std::to_string(kSetFitBundleVersion) + " SetFit bundle");
  }
  SetFitModel m{backend.load_encoder(j.at("encoder")),
                LogisticHead::from_json(j.at("head")),
                LabelSet(j.at("task_id").get<std::string>(), j.at("labels").get<std::vector<std::string>>()),
                {},
                {},
                j.value("triplets", std::size_t{0}),
                {}};
  const auto& c = j.at("config");
  m.config.R = c.at("R");
  m.config.epochs = c.at("epochs");
  m.config.batch = c.at("batch");
  m.config.max_len = c.at("max_len");
  m.config.seed = c.at("seed");
  m.config.l2 = c.at("l2");
  if (!c.at("lr").is_null()) m.config.lr = c.at("lr").get<double>();
  m.format = InputFormat::for_backend(backend, m.config.max_len);
  return m;
}

}  // namespace fewshot
