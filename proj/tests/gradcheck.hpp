#pragma once

// Central finite-difference probes of the toy encoder loss and the logistic
// head objective. Shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "fewshot/random.hpp"
#include "fewshot/setfit.hpp"
#include "fewshot/synthetic.hpp"
#include "fewshot/toy_backend.hpp"

namespace gradcheck {

struct Result {
  std::size_t probes = 0;
  double worst_relative = 0.0;
};

inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-7});
  return std::abs(analytic - numeric) / scale;
}

// Probes coordinates of embedding-table rows that the triplets touch.
inline Result encoder(std::size_t probes, std::uint64_t seed) {
  using namespace fewshot;
  ToyConfig cfg;
  cfg.buckets = 512;
  cfg.embedding_dim = 8;
  ToyEncoder enc(cfg, seed);
  const auto train = make_synthetic_task("so_duplicate", 12, seed);
  const auto triplets = generate_contrastive(train, 2, seed);
  const auto items = enc.prepare(triplets);
  std::vector<std::size_t> rows;
  for (const auto& it : items) {
    rows.insert(rows.end(), it.a.index.begin(), it.a.index.end());
    rows.insert(rows.end(), it.b.index.begin(), it.b.index.end());
  }
  std::vector<double> grad;
  enc.loss_and_gradient(items, &grad);
  Rng rng(derive_seed(seed, 77));
  Result r;
  const double h = 1e-5;
  for (std::size_t p = 0; p < probes; ++p) {
    const std::size_t i = rows[rng.uniform_index(rows.size())] * cfg.embedding_dim + rng.uniform_index(cfg.embedding_dim);
    auto& table = enc.table();
    const double saved = table[i];
    table[i] = saved + h;
    const double up = enc.loss_and_gradient(items, nullptr);
    table[i] = saved - h;
    const double down = enc.loss_and_gradient(items, nullptr);
    table[i] = saved;
    r.worst_relative = std::max(r.worst_relative, relative_error(grad[i], (up - down) / (2 * h)));
    ++r.probes;
  }
  return r;
}

// Random embeddings, labels and coefficients; probes any coefficient,
// including the unpenalized bias column.
inline Result logistic_head(std::size_t probes, std::uint64_t seed) {
  using namespace fewshot;
  Rng rng(seed);
  const std::size_t k = 3, d = 6, n = 20;
  std::vector<std::vector<double>> xs(n, std::vector<double>(d));
  std::vector<std::size_t> ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& x : xs[i]) x = rng.normal();
    ys[i] = rng.uniform_index(k);
  }
  LogisticHead head(k, d);
  std::vector<double> w(k * (d + 1));
  for (auto& x : w) x = 0.5 * rng.normal();
  const double l2 = 0.05;
  std::vector<double> grad;
  head.objective(xs, ys, l2, w, &grad);
  Result r;
  const double h = 1e-5;
  for (std::size_t p = 0; p < probes; ++p) {
    const std::size_t i = rng.uniform_index(w.size());
    auto wp = w, wm = w;
    wp[i] += h;
    wm[i] -= h;
    const double fd = (head.objective(xs, ys, l2, wp, nullptr) - head.objective(xs, ys, l2, wm, nullptr)) / (2 * h);
    r.worst_relative = std::max(r.worst_relative, relative_error(grad[i], fd));
    ++r.probes;
  }
  return r;
}

}  // namespace gradcheck
