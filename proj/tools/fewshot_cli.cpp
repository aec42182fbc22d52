// fewshot: ingest, split, train, sweep, report, mock-bugzilla.
// Exit codes: 0 ok, 1 runtime failure (or failed sweep cells), 2 usage error.

#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fewshot/fewshot.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fewshot;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_metric(const std::string& metric) {
  try {
    check_metric_name(metric);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
}

void write_manifest(const fs::path& path, std::string_view command, const json& config,
                    const std::vector<std::uint64_t>& seeds) {
  write_json_file(path, run_manifest(command, config, seeds));
  std::cerr << "manifest: " << path.string() << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot write " + path.string());
  out << text;
}

// ---------------------------------------------------------------------------
// ingest

struct IngestArgs {
  std::string source;
  std::string task;
  std::string endpoint;
  std::string duplicates;
  std::string neutral;
  std::string input;
  std::string out;
  std::string earliest;
  std::string latest;
  double neutral_ratio = 1.0;
  std::uint64_t seed = 0;
  std::size_t page_size = 100;
  std::size_t size = 1000;
  std::string kind = "train";
};

int run_ingest(const IngestArgs& a) {
  json config{{"source", a.source}, {"task", a.task}, {"out", a.out}, {"seed", a.seed}};
  Dataset dataset;
  json provenance;
  if (a.source == "bugzilla") {
    if (a.endpoint.empty()) throw UsageError("--endpoint is required for --source bugzilla");
    if (a.task != "bugzilla_duplicate" && a.task != "bugzilla_entailment") {
      throw UsageError("--task must be bugzilla_duplicate or bugzilla_entailment for --source bugzilla");
    }
    auto window = bugzilla_window();
    if (!a.earliest.empty() || !a.latest.empty()) {
      window = IngestionWindow(a.earliest.empty() ? window.earliest : require_date(a.earliest),
                               a.latest.empty() ? window.latest : require_date(a.latest));
    }
    FetchOptions opts;
    opts.page_size = a.page_size;
    auto fetched = fetch_bugs(a.endpoint, window, opts);
    auto result = assemble_bugzilla_task(fetched.records, a.task, a.neutral_ratio, a.seed);
    dataset = std::move(result.dataset);
    provenance = result.report;
    provenance["fetch"] = {{"endpoint", a.endpoint},     {"window", window.earliest.to_string() + ".." + window.latest.to_string()},
                           {"requests", fetched.requests}, {"retries", fetched.retries},
                           {"malformed", fetched.malformed}, {"outside_window", fetched.outside_window}};
    config["endpoint"] = a.endpoint;
    config["neutral_ratio"] = a.neutral_ratio;
  } else if (a.source == "stackoverflow") {
    if (a.duplicates.empty() || a.neutral.empty()) {
      throw UsageError("--duplicates and --neutral are required for --source stackoverflow");
    }
    StackOverflowOptions opts;
    opts.neutral_ratio = a.neutral_ratio;
    opts.seed = a.seed;
    auto result = ingest_stackoverflow_exports(fs::path(a.duplicates), fs::path(a.neutral), opts);
    dataset = std::move(result.dataset);
    provenance = to_json(result.report);
    config["duplicates"] = a.duplicates;
    config["neutral"] = a.neutral;
    config["neutral_ratio"] = a.neutral_ratio;
  } else if (a.source == "srs") {
    if (a.input.empty()) throw UsageError("--input is required for --source srs");
    dataset = load_srs_pairs(fs::path(a.input));
    provenance = {{"input", a.input}};
    config["input"] = a.input;
  } else if (a.source == "synthetic") {
    dataset = make_synthetic_task(a.task, a.size, a.seed, parse_dataset_kind(a.kind));
    provenance = {{"generator", "synthetic"}, {"size", a.size}};
    config["size"] = a.size;
    config["kind"] = a.kind;
  } else {
    throw UsageError("unknown --source '" + a.source + "'");
  }
  provenance["source"] = a.source;
  write_dataset(a.out, dataset, provenance);
  const auto v = validate_dataset(dataset);
  std::cerr << "wrote " << dataset.size() << " pairs to " << a.out;
  for (const auto& [label, count] : v.label_counts) std::cerr << "  " << label << "=" << count;
  std::cerr << '\n';
  write_manifest(fs::path(a.out).replace_extension(".run.json"), "ingest", config, {a.seed});
  return 0;
}

// ---------------------------------------------------------------------------
// split

struct SplitArgs {
  std::string input;
  std::string out_dir;
  std::size_t pool_size = 0;
  std::size_t test_size = 0;
  std::uint64_t seed = 0;
  std::vector<double> ratio;
};

int run_split(const SplitArgs& a) {
  const auto all = read_dataset(a.input);
  SplitOptions opts;
  opts.test_class_ratio = a.ratio;
  const auto split = split_no_leakage(all, a.pool_size, a.test_size, a.seed, opts);
  const json source{{"split_of", a.input}, {"seed", a.seed}};
  write_dataset(fs::path(a.out_dir) / "train_pool.jsonl", split.train_pool, source);
  write_dataset(fs::path(a.out_dir) / "test.jsonl", split.test, source);
  std::cerr << "train pool " << split.train_pool.size() << ", test " << split.test.size() << '\n';
  json config{{"input", a.input}, {"pool_size", a.pool_size}, {"test_size", a.test_size}, {"seed", a.seed},
              {"test_class_ratio", a.ratio}};
  write_manifest(fs::path(a.out_dir) / "manifest.json", "split", config, {a.seed});
  return 0;
}

// ---------------------------------------------------------------------------
// train (one cell)

struct TrainArgs {
  ExperimentConfig exp;
  std::string train;
  std::string test;
  std::string unlabeled;
  std::string out_dir;
  std::optional<std::size_t> size;
  std::uint64_t seed = 0;
};

int run_train(const TrainArgs& a) {
  auto exp = a.exp;
  auto train = read_dataset(a.train);
  const auto test = read_dataset(a.test);
  exp.task_id = train.label_set().task_id();
  if (a.size) train = sample_training_set(train, *a.size, a.seed);
  if (!sentences_disjoint(train, test)) throw InfeasibleError("training data shares sentences with the test set");
  const auto backend = make_backend(exp.backend);
  const auto format = InputFormat::for_backend(*backend, exp.max_len);
  const fs::path out(a.out_dir);
  EvalReport report;
  json method_config;
  std::vector<std::uint64_t> seeds{a.seed};
  if (exp.method == "finetune") {
    const auto cfg = finetune_config_for(exp, a.seed);
    method_config = to_json(cfg);
    auto clf = finetune(cfg, train, *backend);
    report = evaluate_classifier(*clf, test, format);
    write_json_file(out / "classifier.json", clf->save());
  } else if (exp.method == "pet") {
    const auto cfg = pet_config_for(exp, a.seed);
    method_config = to_json(cfg);
    seeds = cfg.seeds;
    seeds.push_back(cfg.classifier_seed);
    Dataset unlabeled(std::vector<LabeledExample>{}, train.label_set(), DatasetKind::unlabeled);
    if (!a.unlabeled.empty()) unlabeled = unlabeled_prefix(read_dataset(a.unlabeled), exp.unlabeled_size);
    auto r = run_pet(cfg, train, unlabeled, test, *backend);
    write_pet_artifacts(out / "pet", r, cfg, train.label_set(), *backend);
    write_json_file(out / "ensemble_report.json", to_json(r.ensemble_report));
    report = r.report;
  } else {
    const auto cfg = setfit_config_for(exp, a.seed);
    method_config = to_json(cfg);
    const auto model = setfit_fit(cfg, train, *backend);
    report = evaluate_setfit(model, test);
    write_json_file(out / "setfit_model.json", setfit_bundle(model, *backend));
  }
  write_json_file(out / "report.json", to_json(report));
  std::cout << "accuracy " << report.accuracy << "  macro_f1 " << report.macro_f1 << "  weighted_f1 "
            << report.weighted_f1 << '\n';
  json config{{"experiment", to_json(exp)}, {"method_config", method_config}, {"train", a.train},
              {"test", a.test},            {"unlabeled", a.unlabeled},       {"train_size", train.size()}};
  write_manifest(out / "manifest.json", "train", config, seeds);
  return 0;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepArgs {
  ExperimentConfig exp;
  std::string pool;
  std::string test;
  std::string unlabeled;
  std::string out_dir;
  std::string metric = "accuracy";
};

int run_sweep_cmd(const SweepArgs& a) {
  const auto& exp = a.exp;
  exp.validate();
  require_metric(a.metric);
  SweepData data;
  json data_source;
  if (a.pool.empty() && a.test.empty()) {
    data = synthetic_sweep_data(exp);
    data_source = {{"bundled_synthetic", true}};
  } else {
    if (a.pool.empty() || a.test.empty()) throw UsageError("--pool and --test must be given together");
    data.pool = read_dataset(a.pool);
    data.test = read_dataset(a.test);
    if (!a.unlabeled.empty()) data.unlabeled = read_dataset(a.unlabeled);
    data_source = {{"pool", a.pool}, {"test", a.test}, {"unlabeled", a.unlabeled}};
  }
  if (exp.method == "pet" && data.unlabeled.empty()) {
    data.unlabeled = Dataset(std::vector<LabeledExample>{}, data.pool.label_set(), DatasetKind::unlabeled);
  }
  const auto backend = make_backend(exp.backend);
  const auto result = run_sweep(exp, data, *backend, [](const CellResult& c) {
    std::cerr << "size " << c.size << " replicate " << c.replicate << ": ";
    if (c.ok) {
      std::cerr << "accuracy " << c.report.accuracy;
    } else {
      std::cerr << "FAILED " << c.error;
    }
    std::cerr << " (" << c.seconds << " s)\n";
  });
  const fs::path out(a.out_dir);
  write_json_file(out / "sweep.json", to_json(result));
  write_json_file(out / "timings.json", timings_json(result));
  const auto table = emit_table(result, a.metric, TableFormat::text);
  write_text(out / "table.txt", table);
  write_text(out / "table.csv", emit_table(result, a.metric, TableFormat::csv));
  std::cout << table;
  std::vector<std::uint64_t> seeds;
  for (std::size_t r = 0; r < exp.replicates; ++r) seeds.push_back(exp.replicate_seed(r));
  json config = to_json(exp);
  config["data"] = data_source;
  write_manifest(out / "manifest.json", "sweep", config, seeds);
  if (!result.complete()) {
    std::cerr << "sweep finished with failed cells\n";
    return 1;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// report

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string metric = "accuracy";
  std::string format = "text";
  std::string out;
};

int run_report(const ReportArgs& a) {
  require_metric(a.metric);
  TableFormat format;
  try {
    format = parse_table_format(a.format);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  std::vector<SweepResult> results;
  for (const auto& in : a.inputs) results.push_back(sweep_result_from_json(read_json_file(in)));
  std::string text;
  if (results.size() == 1) {
    text = emit_table(results.front(), a.metric, format);
  } else {
    if (format != TableFormat::text) throw UsageError("comparing several sweeps supports --format text only");
    text = emit_comparison(results, a.metric);
  }
  fs::path manifest_path;
  if (a.out.empty()) {
    std::cout << text;
    manifest_path = fs::path(a.inputs.front()).replace_extension(".report.run.json");
  } else {
    write_text(a.out, text);
    manifest_path = fs::path(a.out).replace_extension(".run.json");
  }
  json config{{"inputs", a.inputs}, {"metric", a.metric}, {"format", a.format}, {"out", a.out}};
  write_manifest(manifest_path, "report", config, {});
  return 0;
}

// ---------------------------------------------------------------------------
// mock-bugzilla

struct MockArgs {
  std::string host = "127.0.0.1";
  int port = 8089;
  double seconds = 0.0;  // 0 = until interrupted
  std::string manifest;
};

MockBugzilla* g_mock = nullptr;

int run_mock(const MockArgs& a) {
  MockBugzilla mock;
  const int port = mock.start(a.host, a.port);
  json config{{"host", a.host}, {"port", port}, {"records", bugzilla_fixture().size()}};
  write_manifest(a.manifest.empty() ? fs::path("mock-bugzilla.run.json") : fs::path(a.manifest), "mock-bugzilla",
                 config, {});
  std::cout << mock.endpoint() << std::endl;
  g_mock = &mock;
  std::signal(SIGINT, [](int) { if (g_mock) g_mock->stop(); });
  std::signal(SIGTERM, [](int) { if (g_mock) g_mock->stop(); });
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(a.seconds);
  while (a.seconds <= 0.0 || std::chrono::steady_clock::now() < deadline) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    if (g_mock == nullptr) break;
  }
  mock.stop();
  g_mock = nullptr;
  std::cerr << "served " << mock.request_count() << " requests\n";
  return 0;
}

void add_experiment_options(CLI::App* cmd, ExperimentConfig& e) {
  cmd->add_option("--method", e.method, "finetune, pet or setfit")
      ->check(CLI::IsMember({"finetune", "pet", "setfit"}));
  cmd->add_option("--backend", e.backend, "toy or external:<command>");
  cmd->add_option("--batch", e.batch)->check(CLI::PositiveNumber);
  cmd->add_option("--max-len", e.max_len)->check(CLI::PositiveNumber);
  cmd->add_option("--lr", e.lr, "learning rate (backend default when omitted)");
  cmd->add_option("--steps", e.finetune_steps, "fine-tuning steps");
  cmd->add_option("--mlm-steps", e.mlm_steps, "PET steps per ensemble member");
  cmd->add_option("--distill-steps", e.distill_steps, "PET distillation steps");
  cmd->add_option("--temperature", e.temperature)->check(CLI::PositiveNumber);
  cmd->add_option("--unlabeled-size", e.unlabeled_size);
  cmd->add_option("--R", e.setfit_R, "SetFit contrastive rounds")->check(CLI::PositiveNumber);
  cmd->add_option("--epochs", e.setfit_epochs, "SetFit encoder epochs")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot sentence-pair classification experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kFewshotVersion);

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Build a pair dataset from a source");
  ingest_cmd->add_option("--source", ingest.source, "bugzilla, stackoverflow, srs or synthetic")
      ->required()
      ->check(CLI::IsMember({"bugzilla", "stackoverflow", "srs", "synthetic"}));
  ingest_cmd->add_option("--task", ingest.task, "task id")->check(CLI::IsMember(builtin_task_ids()));
  ingest_cmd->add_option("--endpoint", ingest.endpoint, "Bugzilla base URL");
  ingest_cmd->add_option("--duplicates", ingest.duplicates, "Stack Overflow duplicate export (CSV)")
      ->check(CLI::ExistingFile);
  ingest_cmd->add_option("--neutral", ingest.neutral, "Stack Overflow neutral export (CSV)")->check(CLI::ExistingFile);
  ingest_cmd->add_option("--input", ingest.input, "SRS pair file (JSON lines)")->check(CLI::ExistingFile);
  ingest_cmd->add_option("--out", ingest.out, "output dataset (.jsonl)")->required();
  ingest_cmd->add_option("--earliest", ingest.earliest, "window start YYYY-MM-DD");
  ingest_cmd->add_option("--latest", ingest.latest, "window end YYYY-MM-DD");
  ingest_cmd->add_option("--neutral-ratio", ingest.neutral_ratio, "neutral pairs per linked pair")
      ->check(CLI::NonNegativeNumber);
  ingest_cmd->add_option("--seed", ingest.seed);
  ingest_cmd->add_option("--page-size", ingest.page_size)->check(CLI::PositiveNumber);
  ingest_cmd->add_option("--size", ingest.size, "synthetic pair count");
  ingest_cmd->add_option("--kind", ingest.kind, "synthetic dataset kind")
      ->check(CLI::IsMember({"train", "test", "unlabeled"}));

  SplitArgs split;
  auto* split_cmd = app.add_subcommand("split", "Leakage-free train-pool/test split");
  split_cmd->add_option("--input", split.input, "labeled dataset (.jsonl)")->required()->check(CLI::ExistingFile);
  split_cmd->add_option("--out-dir", split.out_dir)->required();
  split_cmd->add_option("--pool-size", split.pool_size)->required();
  split_cmd->add_option("--test-size", split.test_size)->required();
  split_cmd->add_option("--seed", split.seed);
  split_cmd->add_option("--test-ratio", split.ratio, "per-label test share, label order");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train and evaluate one configuration");
  add_experiment_options(train_cmd, train.exp);
  train_cmd->add_option("--train", train.train, "training dataset")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--test", train.test, "test dataset")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--unlabeled", train.unlabeled, "unlabeled dataset (PET)")->check(CLI::ExistingFile);
  train_cmd->add_option("--size", train.size, "sample this many training examples first");
  train_cmd->add_option("--seed", train.seed);
  train_cmd->add_option("--out-dir", train.out_dir)->required();

  SweepArgs sweep;
  std::string sweep_config;
  std::string sweep_sizes;
  auto* sweep_cmd = app.add_subcommand("sweep", "Training-set-size sweep");
  sweep_cmd->add_option("--config", sweep_config, "ExperimentConfig JSON; flags override it")
      ->check(CLI::ExistingFile);
  sweep_cmd->add_option("--task", sweep.exp.task_id)->check(CLI::IsMember(builtin_task_ids()));
  add_experiment_options(sweep_cmd, sweep.exp);
  sweep_cmd->add_option("--sizes", sweep_sizes, "comma-separated ascending sizes");
  sweep_cmd->add_option("--replicates", sweep.exp.replicates)->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--test-size", sweep.exp.test_size)->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--seed-base", sweep.exp.seed_base);
  sweep_cmd->add_option("--workers", sweep.exp.workers)->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--pool", sweep.pool, "training pool dataset (default: bundled synthetic)")
      ->check(CLI::ExistingFile);
  sweep_cmd->add_option("--test", sweep.test, "test dataset")->check(CLI::ExistingFile);
  sweep_cmd->add_option("--unlabeled", sweep.unlabeled, "unlabeled dataset (PET)")->check(CLI::ExistingFile);
  sweep_cmd->add_option("--metric", sweep.metric, "metric for the printed table");
  sweep_cmd->add_option("--out-dir", sweep.out_dir)->required();

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "Tables from saved sweeps");
  report_cmd->add_option("--input", report.inputs, "sweep.json (repeat to compare)")
      ->required()
      ->check(CLI::ExistingFile);
  report_cmd->add_option("--metric", report.metric, "accuracy, macro_f1 or weighted_f1");
  report_cmd->add_option("--format", report.format, "text, csv or json");
  report_cmd->add_option("--out", report.out, "output file (default stdout)");

  MockArgs mock;
  auto* mock_cmd = app.add_subcommand("mock-bugzilla", "Serve the bundled Bugzilla fixture");
  mock_cmd->add_option("--host", mock.host);
  mock_cmd->add_option("--port", mock.port, "0 picks a free port");
  mock_cmd->add_option("--seconds", mock.seconds, "stop after this long (0 = until interrupted)");
  mock_cmd->add_option("--manifest", mock.manifest, "run manifest path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*ingest_cmd) return run_ingest(ingest);
    if (*split_cmd) return run_split(split);
    if (*train_cmd) return run_train(train);
    if (*sweep_cmd) {
      if (!sweep_config.empty()) {
        // The file is the base; flags given on the command line win.
        auto base = experiment_config_from_json(read_json_file(sweep_config));
        auto given = [&](const char* name) { return sweep_cmd->count(name) > 0; };
        const auto& f = sweep.exp;
        if (given("--task")) base.task_id = f.task_id;
        if (given("--method")) base.method = f.method;
        if (given("--backend")) base.backend = f.backend;
        if (given("--batch")) base.batch = f.batch;
        if (given("--max-len")) base.max_len = f.max_len;
        if (given("--lr")) base.lr = f.lr;
        if (given("--steps")) base.finetune_steps = f.finetune_steps;
        if (given("--mlm-steps")) base.mlm_steps = f.mlm_steps;
        if (given("--distill-steps")) base.distill_steps = f.distill_steps;
        if (given("--temperature")) base.temperature = f.temperature;
        if (given("--unlabeled-size")) base.unlabeled_size = f.unlabeled_size;
        if (given("--R")) base.setfit_R = f.setfit_R;
        if (given("--epochs")) base.setfit_epochs = f.setfit_epochs;
        if (given("--replicates")) base.replicates = f.replicates;
        if (given("--test-size")) base.test_size = f.test_size;
        if (given("--seed-base")) base.seed_base = f.seed_base;
        if (given("--workers")) base.workers = f.workers;
        sweep.exp = base;
      }
      if (!sweep_sizes.empty()) {
        sweep.exp.sizes.clear();
        std::stringstream ss(sweep_sizes);
        std::string item;
        while (std::getline(ss, item, ',')) {
          try {
            sweep.exp.sizes.push_back(std::stoul(item));
          } catch (const std::exception&) {
            throw UsageError("--sizes: '" + item + "' is not a number");
          }
        }
      }
      try {
        sweep.exp.validate();
      } catch (const ConfigError& e) {
        throw UsageError(e.what());
      }
      return run_sweep_cmd(sweep);
    }
    if (*report_cmd) return run_report(report);
    if (*mock_cmd) return run_mock(mock);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\nRun with --help for more information.\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
