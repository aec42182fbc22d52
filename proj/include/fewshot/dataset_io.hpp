#pragma once

// Dataset files: UTF-8 JSON-lines with one {"u","v","label"} record per line
// ("label" omitted for unlabeled data) plus a sidecar manifest
// <stem>.manifest.json holding task_id, label order, kind and provenance.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "fewshot/core_data.hpp"
#include "fewshot/errors.hpp"

namespace fewshot {

inline std::filesystem::path manifest_path_for(const std::filesystem::path& data_path) {
  auto p = data_path;
  p.replace_extension(".manifest.json");
  return p;
}

inline nlohmann::json example_to_json(const LabeledExample& ex) {
  nlohmann::json j{{"u", ex.pair.u}, {"v", ex.pair.v}};
  if (ex.label) j["label"] = *ex.label;
  return j;
}

inline void write_dataset(const std::filesystem::path& path, const Dataset& d,
                          const nlohmann::json& provenance = nlohmann::json::object()) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot open " + path.string() + " for writing");
  for (const auto& ex : d.examples()) out << example_to_json(ex).dump() << '\n';
  nlohmann::json manifest{{"task_id", d.label_set().task_id()},
                          {"labels", d.label_set().labels()},
                          {"kind", std::string(to_string(d.kind()))},
                          {"size", d.size()},
                          {"source", provenance}};
  std::ofstream mout(manifest_path_for(path), std::ios::binary);
  if (!mout) throw IngestError("cannot write manifest for " + path.string());
  mout << manifest.dump(2) << '\n';
}

// Parses JSON-lines records against a known label set. Labels are case-exact.
inline Dataset parse_dataset_lines(std::istream& in, const LabelSet& labels, DatasetKind kind) {
  std::vector<LabeledExample> examples;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw LoadError("line " + std::to_string(row) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("u") || !j.contains("v") || !j["u"].is_string() ||
        !j["v"].is_string()) {
      throw LoadError("line " + std::to_string(row) + ": record needs string fields u and v");
    }
    LabeledExample ex{{j["u"].get<std::string>(), j["v"].get<std::string>()}, std::nullopt};
    if (kind != DatasetKind::unlabeled) {
      if (!j.contains("label") || !j["label"].is_string()) {
        throw LoadError("line " + std::to_string(row) + ": missing label");
      }
      auto label = j["label"].get<std::string>();
      if (!labels.contains(label)) {
        throw LoadError("line " + std::to_string(row) + ": unknown label '" + label + "'");
      }
      ex.label = std::move(label);
    }
    examples.push_back(std::move(ex));
  }
  return Dataset(std::move(examples), labels, kind);
}

inline Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream min(manifest_path_for(path));
  if (!min) throw LoadError("missing manifest " + manifest_path_for(path).string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(min);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("bad manifest: " + std::string(e.what()));
  }
  LabelSet labels(manifest.at("task_id").get<std::string>(),
                  manifest.at("labels").get<std::vector<std::string>>());
  const auto kind = parse_dataset_kind(manifest.at("kind").get<std::string>());
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  return parse_dataset_lines(in, labels, kind);
}

}  // namespace fewshot
