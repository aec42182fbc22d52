#pragma once

// Classification metrics and replicate aggregation.

#include <cmath>
#include <cstddef>
#include <iomanip>
#include <sstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fewshot/core_data.hpp"
#include "fewshot/errors.hpp"

namespace fewshot {

// rows = gold, columns = predicted, both in label-set order.
struct ConfusionMatrix {
  LabelSet labels;
  std::vector<std::vector<std::size_t>> counts;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& row : counts) {
      for (auto c : row) n += c;
    }
    return n;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion_from_ids(std::span<const std::size_t> golds, std::span<const std::size_t> preds,
                                          const LabelSet& labels) {
  if (golds.size() != preds.size()) {
    throw ShapeError("golds and predictions differ in length (" + std::to_string(golds.size()) + " vs " +
                     std::to_string(preds.size()) + ")");
  }
  ConfusionMatrix m{labels, std::vector<std::vector<std::size_t>>(labels.size(),
                                                                  std::vector<std::size_t>(labels.size(), 0))};
  for (std::size_t i = 0; i < golds.size(); ++i) {
    if (golds[i] >= labels.size() || preds[i] >= labels.size()) throw UnknownLabelError("label id out of range");
    ++m.counts[golds[i]][preds[i]];
  }
  return m;
}

inline ConfusionMatrix confusion(std::span<const std::string> golds, std::span<const std::string> preds,
                                 const LabelSet& labels) {
  if (golds.size() != preds.size()) {
    throw ShapeError("golds and predictions differ in length (" + std::to_string(golds.size()) + " vs " +
                     std::to_string(preds.size()) + ")");
  }
  std::vector<std::size_t> g, p;
  g.reserve(golds.size());
  p.reserve(preds.size());
  for (std::size_t i = 0; i < golds.size(); ++i) {
    g.push_back(labels.index_of(golds[i]));
    p.push_back(labels.index_of(preds[i]));
  }
  return confusion_from_ids(g, p, labels);
}

struct ClassMetrics {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;

  friend bool operator==(const ClassMetrics&, const ClassMetrics&) = default;
};

struct EvalReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  std::vector<ClassMetrics> per_class;
  ConfusionMatrix confusion;
  std::size_t n = 0;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

namespace detail {
inline double safe_ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }
}  // namespace detail

// Precision, recall and F1 with 0/0 taken as 0.
inline EvalReport report(const ConfusionMatrix& m) {
  const std::size_t k = m.labels.size();
  EvalReport r;
  r.confusion = m;
  r.n = m.total();
  if (r.n == 0) throw EmptyEvalError("cannot report metrics over zero examples");
  std::size_t correct = 0;
  for (std::size_t c = 0; c < k; ++c) correct += m.counts[c][c];
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n);
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t support = 0, predicted = 0;
    for (std::size_t j = 0; j < k; ++j) {
      support += m.counts[c][j];
      predicted += m.counts[j][c];
    }
    const double tp = static_cast<double>(m.counts[c][c]);
    ClassMetrics cm{m.labels[c], detail::safe_ratio(tp, static_cast<double>(predicted)),
                    detail::safe_ratio(tp, static_cast<double>(support)), 0.0, support};
    cm.f1 = detail::safe_ratio(2.0 * cm.precision * cm.recall, cm.precision + cm.recall);
    r.macro_f1 += cm.f1 / static_cast<double>(k);
    r.weighted_f1 += cm.f1 * static_cast<double>(support) / static_cast<double>(r.n);
    r.per_class.push_back(std::move(cm));
  }
  return r;
}

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"accuracy", "macro_f1", "weighted_f1"};
  return names;
}

inline double metric_value(const EvalReport& r, std::string_view metric) {
  if (metric == "accuracy") return r.accuracy;
  if (metric == "macro_f1") return r.macro_f1;
  if (metric == "weighted_f1") return r.weighted_f1;
  throw ConfigError("unknown metric '" + std::string(metric) + "'");
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for one value

  friend bool operator==(const MeanStd&, const MeanStd&) = default;
};

inline MeanStd mean_std(std::span<const double> values) {
  MeanStd s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

struct ReplicateSummary {
  std::size_t replicates = 0;
  MeanStd accuracy;
  MeanStd macro_f1;
  MeanStd weighted_f1;

  const MeanStd& metric(std::string_view name) const {
    if (name == "accuracy") return accuracy;
    if (name == "macro_f1") return macro_f1;
    if (name == "weighted_f1") return weighted_f1;
    throw ConfigError("unknown metric '" + std::string(name) + "'");
  }

  friend bool operator==(const ReplicateSummary&, const ReplicateSummary&) = default;
};

inline ReplicateSummary aggregate_replicates(std::span<const EvalReport> reports) {
  if (reports.empty()) throw EmptyEvalError("no reports to aggregate");
  for (const auto& r : reports) {
    if (!(r.confusion.labels == reports.front().confusion.labels)) {
      throw ShapeError("replicate reports use different label sets");
    }
  }
  auto collect = [&](auto member) {
    std::vector<double> v;
    for (const auto& r : reports) v.push_back(r.*member);
    return mean_std(v);
  };
  return {reports.size(), collect(&EvalReport::accuracy), collect(&EvalReport::macro_f1),
          collect(&EvalReport::weighted_f1)};
}

// "90.7±1.4": both values as percentages to one decimal.
inline std::string format_mean_std(const MeanStd& s) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << s.mean * 100.0 << "±" << s.std * 100.0;
  return os.str();
}

inline nlohmann::json to_json(const ConfusionMatrix& m) {
  return {{"labels", m.labels.labels()}, {"task_id", m.labels.task_id()}, {"counts", m.counts}};
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : r.per_class) {
    classes.push_back({{"label", c.label}, {"precision", c.precision}, {"recall", c.recall},
                       {"f1", c.f1}, {"support", c.support}});
  }
  return {{"accuracy", r.accuracy}, {"macro_f1", r.macro_f1}, {"weighted_f1", r.weighted_f1},
          {"per_class", classes},   {"confusion", to_json(r.confusion)}, {"n", r.n}};
}

inline EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.accuracy = j.at("accuracy").get<double>();
  r.macro_f1 = j.at("macro_f1").get<double>();
  r.weighted_f1 = j.at("weighted_f1").get<double>();
  r.n = j.at("n").get<std::size_t>();
  for (const auto& c : j.at("per_class")) {
    r.per_class.push_back({c.at("label").get<std::string>(), c.at("precision").get<double>(),
                           c.at("recall").get<double>(), c.at("f1").get<double>(),
                           c.at("support").get<std::size_t>()});
  }
  const auto& m = j.at("confusion");
  r.confusion.labels = LabelSet(m.at("task_id").get<std::string>(), m.at("labels").get<std::vector<std::string>>());
  r.confusion.counts = m.at("counts").get<std::vector<std::vector<std::size_t>>>();
  return r;
}

inline nlohmann::json to_json(const MeanStd& s) { return {{"mean", s.mean}, {"std", s.std}}; }

inline nlohmann::json to_json(const ReplicateSummary& s) {
  return {{"replicates", s.replicates},
          {"accuracy", to_json(s.accuracy)},
          {"macro_f1", to_json(s.macro_f1)},
          {"weighted_f1", to_json(s.weighted_f1)},
          {"std_kind", "sample"}};
}

inline ReplicateSummary replicate_summary_from_json(const nlohmann::json& j) {
  auto ms = [&](const char* key) {
    return MeanStd{j.at(key).at("mean").get<double>(), j.at(key).at("std").get<double>()};
  };
  return {j.at("replicates").get<std::size_t>(), ms("accuracy"), ms("macro_f1"), ms("weighted_f1")};
}

}  // namespace fewshot
