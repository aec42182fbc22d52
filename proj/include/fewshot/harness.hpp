#pragma once

// Training-set-size sweeps: for each size, `replicates` independent training
// samples are drawn from a pool, trained with one method and evaluated on a
// fixed test set. Results, tables and run manifests.

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fewshot/backend.hpp"
#include "fewshot/core_data.hpp"
#include "fewshot/csv.hpp"
#include "fewshot/errors.hpp"
#include "fewshot/finetune.hpp"
#include "fewshot/metrics.hpp"
#include "fewshot/pet.hpp"
#include "fewshot/prompting.hpp"
#include "fewshot/setfit.hpp"
#include "fewshot/synthetic.hpp"
#include "fewshot/text.hpp"

namespace fewshot {

inline constexpr const char* kFewshotVersion = "0.1.0";

struct ExperimentConfig {
  std::string task_id = "so_duplicate";
  std::string method = "finetune";  // finetune | pet | setfit
  std::string backend = "toy";      // toy | external:<command>
  std::vector<std::size_t> sizes{25, 50, 100, 200, 400};
  std::size_t replicates = 3;
  std::size_t test_size = 2000;
  std::size_t unlabeled_size = 5000;  // PET only
  std::uint64_t seed_base = 0;
  std::size_t batch = 16;
  std::size_t max_len = 256;
  std::optional<double> lr;
  std::size_t finetune_steps = 1000;
  std::size_t mlm_steps = 1000;
  std::size_t distill_steps = 5000;
  double temperature = 2.0;
  std::size_t setfit_R = 10;
  std::size_t setfit_epochs = 1;
  std::size_t workers = 1;

  void validate() const {
    if (method != "finetune" && method != "pet" && method != "setfit") {
      throw ConfigError("unknown method '" + method + "' (expected finetune, pet or setfit)");
    }
    if (sizes.empty()) throw ConfigError("at least one training-set size is required");
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      if (sizes[i] == 0) throw ConfigError("training-set sizes must be positive");
      if (i > 0 && sizes[i] <= sizes[i - 1]) throw ConfigError("training-set sizes must be strictly ascending");
    }
    if (replicates == 0) throw ConfigError("replicates must be >= 1");
    if (test_size == 0) throw ConfigError("test size must be positive");
  }

  // seed_base * 1000 + replicate index
  std::uint64_t replicate_seed(std::size_t replicate) const { return seed_base * 1000 + replicate; }
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j{{"task_id", c.task_id},
                   {"method", c.method},
                   {"backend", c.backend},
                   {"sizes", c.sizes},
                   {"replicates", c.replicates},
                   {"test_size", c.test_size},
                   {"unlabeled_size", c.unlabeled_size},
                   {"seed_base", c.seed_base},
                   {"batch", c.batch},
                   {"max_len", c.max_len},
                   {"finetune_steps", c.finetune_steps},
                   {"mlm_steps", c.mlm_steps},
                   {"distill_steps", c.distill_steps},
                   {"temperature", c.temperature},
                   {"setfit_R", c.setfit_R},
                   {"setfit_epochs", c.setfit_epochs},
                   {"workers", c.workers}};
  j["lr"] = c.lr ? nlohmann::json(*c.lr) : nlohmann::json(nullptr);
  return j;
}

// Missing keys keep their defaults; unknown keys are rejected.
inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  const auto known = to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown experiment config key '" + key + "'");
  }
  try {
    c.task_id = j.value("task_id", c.task_id);
    c.method = j.value("method", c.method);
    c.backend = j.value("backend", c.backend);
    c.sizes = j.value("sizes", c.sizes);
    c.replicates = j.value("replicates", c.replicates);
    c.test_size = j.value("test_size", c.test_size);
    c.unlabeled_size = j.value("unlabeled_size", c.unlabeled_size);
    c.seed_base = j.value("seed_base", c.seed_base);
    c.batch = j.value("batch", c.batch);
    c.max_len = j.value("max_len", c.max_len);
    c.finetune_steps = j.value("finetune_steps", c.finetune_steps);
    c.mlm_steps = j.value("mlm_steps", c.mlm_steps);
    c.distill_steps = j.value("distill_steps", c.distill_steps);
    c.temperature = j.value("temperature", c.temperature);
    c.setfit_R = j.value("setfit_R", c.setfit_R);
    c.setfit_epochs = j.value("setfit_epochs", c.setfit_epochs);
    c.workers = j.value("workers", c.workers);
    if (j.contains("lr") && !j["lr"].is_null()) c.lr = j["lr"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

struct SweepData {
  Dataset pool;
  Dataset test;
  Dataset unlabeled;
};

// Synthetic stand-in data sized for a config: a leakage-free pool of twice the
// largest size, the configured test set, and the unlabeled set.
inline SweepData synthetic_sweep_data(const ExperimentConfig& c) {
  const std::size_t pool = 2 * c.sizes.back();
  auto b = make_synthetic_bundle(c.task_id, pool, c.test_size, c.method == "pet" ? c.unlabeled_size : 0,
                                 derive_seed(c.seed_base, 0xDA7A));
  return {std::move(b.pool), std::move(b.test), std::move(b.unlabeled)};
}

struct CellResult {
  std::size_t size = 0;
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  EvalReport report;
  double seconds = 0.0;
};

struct SizeSummary {
  std::size_t size = 0;
  std::size_t completed = 0;
  std::size_t failed = 0;
  std::optional<ReplicateSummary> summary;  // absent when every cell failed
};

struct SweepResult {
  nlohmann::json config;
  std::vector<CellResult> cells;  // size-major, replicate-minor
  std::vector<SizeSummary> sizes;
  double total_seconds = 0.0;

  bool complete() const {
    return std::all_of(cells.begin(), cells.end(), [](const CellResult& c) { return c.ok; });
  }
};

// Cell outcome only. Wall-clock times are kept out so that identical configs
// give byte-identical result files; see timings_json().
inline nlohmann::json to_json(const SweepResult& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells) {
    nlohmann::json j{{"size", c.size}, {"replicate", c.replicate}, {"seed", c.seed},
                     {"status", c.ok ? "ok" : "failed"}};
    if (c.ok) {
      j["report"] = to_json(c.report);
    } else {
      j["error"] = c.error;
    }
    cells.push_back(std::move(j));
  }
  nlohmann::json sizes = nlohmann::json::array();
  for (const auto& s : r.sizes) {
    nlohmann::json j{{"size", s.size}, {"completed", s.completed}, {"failed", s.failed}};
    j["summary"] = s.summary ? to_json(*s.summary) : nlohmann::json(nullptr);
    sizes.push_back(std::move(j));
  }
  return {{"format", "fewshot-sweep"}, {"version", 1},   {"config", r.config},
          {"complete", r.complete()},  {"cells", cells}, {"sizes", sizes}};
}

inline nlohmann::json timings_json(const SweepResult& r) {
  nlohmann::json cells = nlohmann::json::array();
  double sum = 0.0;
  for (const auto& c : r.cells) {
    cells.push_back({{"size", c.size}, {"replicate", c.replicate}, {"seconds", c.seconds}});
    sum += c.seconds;
  }
  return {{"cells", cells}, {"cell_seconds", sum}, {"total_seconds", r.total_seconds}};
}

inline SweepResult sweep_result_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "fewshot-sweep") throw LoadError("not a sweep result file");
  SweepResult r;
  r.config = j.at("config");
  for (const auto& c : j.at("cells")) {
    CellResult cell;
    cell.size = c.at("size");
    cell.replicate = c.at("replicate");
    cell.seed = c.at("seed");
    cell.ok = c.at("status") == "ok";
    if (cell.ok) {
      cell.report = eval_report_from_json(c.at("report"));
    } else {
      cell.error = c.value("error", "");
    }
    r.cells.push_back(std::move(cell));
  }
  for (const auto& s : j.at("sizes")) {
    SizeSummary size{s.at("size"), s.at("completed"), s.at("failed"), std::nullopt};
    if (!s.at("summary").is_null()) size.summary = replicate_summary_from_json(s.at("summary"));
    r.sizes.push_back(size);
  }
  return r;
}

using ProgressFn = std::function<void(const CellResult&)>;

inline FinetuneConfig finetune_config_for(const ExperimentConfig& c, std::uint64_t seed) {
  FinetuneConfig f;
  f.steps = c.finetune_steps;
  f.batch = c.batch;
  f.lr = c.lr;
  f.max_len = c.max_len;
  f.seed = seed;
  return f;
}

// Member seeds seed*10 + {1,2,3}; the final classifier uses `seed`.
inline PetConfig pet_config_for(const ExperimentConfig& c, std::uint64_t seed) {
  PetConfig p;
  p.pvps = builtin_pvps(c.task_id);
  p.seeds = {seed * 10 + 1, seed * 10 + 2, seed * 10 + 3};
  p.mlm_steps = c.mlm_steps;
  p.distill_steps = c.distill_steps;
  p.batch = c.batch;
  p.lr = c.lr;
  p.temperature = c.temperature;
  p.max_len = c.max_len;
  p.classifier_seed = seed;
  return p;
}

inline SetFitConfig setfit_config_for(const ExperimentConfig& c, std::uint64_t seed) {
  SetFitConfig s;
  s.R = c.setfit_R;
  s.epochs = c.setfit_epochs;
  s.batch = c.batch;
  s.lr = c.lr;
  s.max_len = c.max_len;
  s.seed = seed;
  return s;
}

// First `n` examples of an unlabeled set.
inline Dataset unlabeled_prefix(const Dataset& unlabeled, std::size_t n) {
  std::vector<std::size_t> idx(std::min(n, unlabeled.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return unlabeled.subset(idx, DatasetKind::unlabeled);
}

namespace detail {

inline EvalReport run_cell(const ExperimentConfig& c, const Dataset& train, const SweepData& data,
                           const Backend& backend, std::uint64_t seed) {
  if (c.method == "finetune") {
    auto clf = finetune(finetune_config_for(c, seed), train, backend);
    return evaluate_classifier(*clf, data.test, InputFormat::for_backend(backend, c.max_len));
  }
  if (c.method == "pet") {
    return run_pet(pet_config_for(c, seed), train, unlabeled_prefix(data.unlabeled, c.unlabeled_size), data.test,
                   backend)
        .report;
  }
  return evaluate_setfit(setfit_fit(setfit_config_for(c, seed), train, backend), data.test);
}

}  // namespace detail

// Infeasible sizes and leaky pools abort before any training; a failing cell
// is recorded and the sweep continues.
inline SweepResult run_sweep(const ExperimentConfig& config, const SweepData& data, const Backend& backend,
                             const ProgressFn& progress = {}) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  if (data.test.size() == 0) throw NoDataError("sweep needs a non-empty test set");
  if (config.sizes.back() > data.pool.size()) {
    throw InfeasibleError("largest training size " + std::to_string(config.sizes.back()) +
                          " exceeds the pool of " + std::to_string(data.pool.size()));
  }
  if (!sentences_disjoint(data.pool, data.test)) throw InfeasibleError("training pool shares sentences with the test set");
  if (!(data.pool.label_set().labels() == data.test.label_set().labels())) {
    throw ShapeError("pool and test label sets differ");
  }

  SweepResult result;
  result.config = to_json(config);
  for (auto size : config.sizes) {
    for (std::size_t r = 0; r < config.replicates; ++r) {
      result.cells.push_back({size, r, config.replicate_seed(r), false, {}, {}, 0.0});
    }
  }
  std::mutex progress_mutex;
  detail::parallel_for(result.cells.size(), config.workers, [&](std::size_t i) {
    auto& cell = result.cells[i];
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const auto train = sample_training_set(data.pool, cell.size, cell.seed);
      if (!sentences_disjoint(train, data.test)) throw InfeasibleError("training sample leaks into the test set");
      cell.report = detail::run_cell(config, train, data, backend, cell.seed);
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (progress) {
      std::lock_guard lock(progress_mutex);
      progress(cell);
    }
  });

  for (auto size : config.sizes) {
    SizeSummary s{size, 0, 0, std::nullopt};
    std::vector<EvalReport> reports;
    for (const auto& c : result.cells) {
      if (c.size != size) continue;
      if (c.ok) {
        reports.push_back(c.report);
      } else {
        ++s.failed;
      }
    }
    s.completed = reports.size();
    if (!reports.empty()) s.summary = aggregate_replicates(reports);
    result.sizes.push_back(s);
  }
  result.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

// ---------------------------------------------------------------------------
// tables

enum class TableFormat { text, csv, json };

inline TableFormat parse_table_format(std::string_view s) {
  if (s == "text") return TableFormat::text;
  if (s == "csv") return TableFormat::csv;
  if (s == "json") return TableFormat::json;
  throw ConfigError("unknown table format '" + std::string(s) + "' (expected text, csv or json)");
}

inline void check_metric_name(std::string_view metric) {
  const auto& names = metric_names();
  if (std::find(names.begin(), names.end(), metric) == names.end()) {
    throw ConfigError("unknown metric '" + std::string(metric) + "' (expected accuracy, macro_f1 or weighted_f1)");
  }
}

namespace detail {

inline std::string column_name(const SweepResult& r) {
  return r.config.value("method", std::string("?")) + "@" + r.config.value("backend", std::string("?"));
}

inline std::string pad(std::string s, std::size_t width) {
  // "±" is two bytes but one column
  std::size_t cols = 0;
  for (unsigned char c : s) cols += (c & 0xC0) != 0x80 ? 1 : 0;
  if (cols < width) s.insert(0, width - cols, ' ');
  return s;
}

}  // namespace detail

// One row per size. Text renders "mean±std" in percent to one decimal; csv and
// json carry full precision.
inline std::string emit_table(const SweepResult& r, std::string_view metric, TableFormat format) {
  check_metric_name(metric);
  std::ostringstream os;
  switch (format) {
    case TableFormat::text: {
      os << "# " << r.config.value("task_id", std::string("?")) << " " << detail::column_name(r) << " " << metric
         << " (mean±std over replicates, %)\n";
      os << detail::pad("size", 6) << detail::pad(std::string(metric), 14) << detail::pad("runs", 8) << '\n';
      for (const auto& s : r.sizes) {
        os << detail::pad(std::to_string(s.size), 6)
           << detail::pad(s.summary ? format_mean_std(s.summary->metric(metric)) : "failed", 14)
           << detail::pad(std::to_string(s.completed) + "/" + std::to_string(s.completed + s.failed), 8);
        if (s.failed > 0) os << "  (" << s.failed << " failed)";
        os << '\n';
      }
      break;
    }
    case TableFormat::csv: {
      os << "size," << metric << "_mean," << metric << "_std,completed,failed\n";
      os << std::setprecision(17);
      for (const auto& s : r.sizes) {
        os << s.size << ',';
        if (s.summary) {
          os << s.summary->metric(metric).mean << ',' << s.summary->metric(metric).std;
        } else {
          os << ',';
        }
        os << ',' << s.completed << ',' << s.failed << '\n';
      }
      break;
    }
    case TableFormat::json: {
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& s : r.sizes) {
        nlohmann::json row{{"size", s.size}, {"completed", s.completed}, {"failed", s.failed}};
        if (s.summary) {
          row["mean"] = s.summary->metric(metric).mean;
          row["std"] = s.summary->metric(metric).std;
          row["summary"] = to_json(*s.summary);
        } else {
          row["summary"] = nullptr;
        }
        rows.push_back(std::move(row));
      }
      os << nlohmann::json{{"metric", metric}, {"config", r.config}, {"rows", rows}}.dump(2) << '\n';
      break;
    }
  }
  return os.str();
}

// Several sweeps side by side, one column each. In each row `*` marks the
// best column overall and `_` the best column among those sharing a backend.
inline std::string emit_comparison(const std::vector<SweepResult>& results, std::string_view metric) {
  check_metric_name(metric);
  std::vector<std::size_t> sizes;
  for (const auto& r : results) {
    for (const auto& s : r.sizes) sizes.push_back(s.size);
  }
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
  std::ostringstream os;
  os << "# " << metric << " (mean±std, %; * best overall, _ best for the backend)\n" << detail::pad("size", 6);
  for (const auto& r : results) os << detail::pad(detail::column_name(r), 22);
  os << '\n';
  for (auto size : sizes) {
    std::vector<std::optional<MeanStd>> cells;
    for (const auto& r : results) {
      std::optional<MeanStd> v;
      for (const auto& s : r.sizes) {
        if (s.size == size && s.summary) v = s.summary->metric(metric);
      }
      cells.push_back(v);
    }
    auto best_of = [&](auto include) {
      std::optional<double> best;
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i] && include(i) && (!best || cells[i]->mean > *best)) best = cells[i]->mean;
      }
      return best;
    };
    const auto overall = best_of([](std::size_t) { return true; });
    os << detail::pad(std::to_string(size), 6);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (!cells[i]) {
        os << detail::pad("-", 22);
        continue;
      }
      const auto backend = results[i].config.value("backend", std::string());
      const auto group = best_of([&](std::size_t k) { return results[k].config.value("backend", std::string()) == backend; });
      std::string text = format_mean_std(*cells[i]);
      if (overall && cells[i]->mean == *overall) text = "*" + text;
      if (group && cells[i]->mean == *group) text = "_" + text;
      os << detail::pad(text, 22);
    }
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// run manifests

inline nlohmann::json run_manifest(std::string_view command, const nlohmann::json& config,
                                   const std::vector<std::uint64_t>& seeds) {
  return {{"command", command},
          {"config", config},
          {"config_hash", config_hash(config)},
          {"seeds", seeds},
          {"versions",
           {{"fewshot", kFewshotVersion},
            {"compiler", __VERSION__},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}}};
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

}  // namespace fewshot
