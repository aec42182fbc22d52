#pragma once

// Brute-force metric recomputation: counts straight from the (gold, pred)
// lists, no confusion-matrix code shared with the library.

#include <cstddef>
#include <vector>

namespace oracle {

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
};

inline Metrics brute_force(const std::vector<std::size_t>& golds, const std::vector<std::size_t>& preds,
                           std::size_t k) {
  Metrics m;
  const double n = static_cast<double>(golds.size());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) correct += golds[i] == preds[i];
  m.accuracy = static_cast<double>(correct) / n;
  for (std::size_t c = 0; c < k; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < golds.size(); ++i) {
      if (preds[i] == c && golds[i] == c) tp += 1;
      if (preds[i] == c && golds[i] != c) fp += 1;
      if (preds[i] != c && golds[i] == c) fn += 1;
    }
    const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double r = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const double f1 = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    m.macro_f1 += f1 / static_cast<double>(k);
    m.weighted_f1 += f1 * (tp + fn) / n;
  }
  return m;
}

}  // namespace oracle
