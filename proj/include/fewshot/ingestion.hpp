#pragma once

// Dataset builders for the software-engineering pair tasks: a Bugzilla REST
// client with duplicate/dependency/neutral pair construction, Stack Overflow
// Data Explorer CSV export ingestion, and the SRS pair-file loader.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "fewshot/core_data.hpp"
#include "fewshot/csv.hpp"
#include "fewshot/dataset_io.hpp"
#include "fewshot/errors.hpp"
#include "fewshot/log.hpp"
#include "fewshot/prompting.hpp"
#include "fewshot/random.hpp"
#include "fewshot/text.hpp"

namespace fewshot {

struct CivilDate {
  int year = 0;
  int month = 0;
  int day = 0;

  friend auto operator<=>(const CivilDate&, const CivilDate&) = default;

  // Accepts "YYYY-MM-DD" or "YYYYMMDD", optionally followed by a time part.
  static std::optional<CivilDate> parse(std::string_view s) {
    s = s.substr(0, std::min<std::size_t>(s.size(), 10));
    auto num = [](std::string_view t, int& out) {
      if (t.empty()) return false;
      for (char c : t) {
        if (c < '0' || c > '9') return false;
      }
      std::from_chars(t.data(), t.data() + t.size(), out);
      return true;
    };
    CivilDate d;
    bool ok = false;
    if (s.size() == 10 && s[4] == '-' && s[7] == '-') {
      ok = num(s.substr(0, 4), d.year) && num(s.substr(5, 2), d.month) && num(s.substr(8, 2), d.day);
    } else if (s.size() >= 8) {
      ok = num(s.substr(0, 4), d.year) && num(s.substr(4, 2), d.month) && num(s.substr(6, 2), d.day);
    }
    if (!ok || d.month < 1 || d.month > 12 || d.day < 1 || d.day > 31) return std::nullopt;
    return d;
  }

  std::string to_string() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", year, month, day);
    return buf;
  }
};

inline CivilDate require_date(std::string_view s) {
  auto d = CivilDate::parse(s);
  if (!d) throw ConfigError("invalid date '" + std::string(s) + "'");
  return *d;
}

struct IngestionWindow {
  CivilDate earliest;
  CivilDate latest;

  IngestionWindow(CivilDate e, CivilDate l) : earliest(e), latest(l) {
    if (latest < earliest) throw ConfigError("window earliest date is after its latest date");
  }

  bool contains(const CivilDate& d) const { return earliest <= d && d <= latest; }
};

inline IngestionWindow bugzilla_window() { return {{2019, 1, 1}, {2021, 12, 31}}; }
inline IngestionWindow stackoverflow_window() { return {{2008, 1, 1}, {2021, 12, 31}}; }

// ---------------------------------------------------------------------------
// Bugzilla

struct BugRecord {
  std::int64_t id = 0;
  std::string summary;
  std::string description;
  std::string creation_time;
  std::string resolution;  // blank while the bug is open
  std::vector<std::int64_t> dupe_of;
  std::vector<std::int64_t> depends_on;

  bool is_open() const { return normalize_sentence(resolution).empty(); }
};

inline const std::vector<std::string>& bugzilla_fields() {
  static const std::vector<std::string> f{"id",         "summary", "description", "creation_time",
                                          "resolution", "dupe_of", "depends_on"};
  return f;
}

namespace detail {

inline std::vector<std::int64_t> id_list(const nlohmann::json& j) {
  std::vector<std::int64_t> out;
  if (j.is_null()) return out;
  if (j.is_number_integer()) {
    out.push_back(j.get<std::int64_t>());
  } else if (j.is_array()) {
    for (const auto& x : j) out.push_back(x.get<std::int64_t>());
  } else {
    throw IngestError("id list must be null, an integer or an array");
  }
  return out;
}

inline std::string optional_string(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return {};
  return j[key].get<std::string>();
}

}  // namespace detail

// Throws IngestError (or a json error) when a record is malformed.
inline BugRecord parse_bug_record(const nlohmann::json& j) {
  if (!j.is_object()) throw IngestError("bug record is not an object");
  BugRecord b;
  b.id = j.at("id").get<std::int64_t>();
  b.summary = j.at("summary").get<std::string>();
  b.description = detail::optional_string(j, "description");
  b.creation_time = j.at("creation_time").get<std::string>();
  if (!CivilDate::parse(b.creation_time)) throw IngestError("unparseable creation_time '" + b.creation_time + "'");
  b.resolution = detail::optional_string(j, "resolution");
  if (j.contains("dupe_of")) b.dupe_of = detail::id_list(j["dupe_of"]);
  if (j.contains("depends_on")) b.depends_on = detail::id_list(j["depends_on"]);
  return b;
}

inline nlohmann::json to_json(const BugRecord& b) {
  nlohmann::json dupe = b.dupe_of.empty() ? nlohmann::json(nullptr)
                        : b.dupe_of.size() == 1 ? nlohmann::json(b.dupe_of[0])
                                                : nlohmann::json(b.dupe_of);
  return {{"id", b.id},
          {"summary", b.summary},
          {"description", b.description},
          {"creation_time", b.creation_time},
          {"resolution", b.resolution},
          {"dupe_of", dupe},
          {"depends_on", b.depends_on}};
}

struct FetchOptions {
  std::size_t page_size = 100;
  std::vector<std::string> fields = bugzilla_fields();
  std::size_t max_attempts = 4;
  std::chrono::milliseconds backoff_initial{100};
  std::chrono::milliseconds backoff_cap{2000};
  std::chrono::seconds timeout{30};
  std::function<void(std::chrono::milliseconds)> sleep = [](std::chrono::milliseconds d) {
    std::this_thread::sleep_for(d);
  };
};

struct FetchResult {
  std::vector<BugRecord> records;
  std::size_t requests = 0;
  std::size_t retries = 0;
  std::size_t malformed = 0;
  std::size_t duplicates = 0;
  std::size_t outside_window = 0;
};

// Query parameters of one page request. Bugzilla's creation_time parameter
// is a lower bound; the upper bound goes through a custom search field.
inline httplib::Params bugzilla_page_params(const IngestionWindow& window, const std::vector<std::string>& fields,
                                            std::size_t limit, std::size_t offset) {
  std::string include;
  for (const auto& f : fields) include += (include.empty() ? "" : ",") + f;
  return {{"include_fields", include},
          {"creation_time", window.earliest.to_string() + "T00:00:00Z"},
          {"f1", "creation_ts"},
          {"o1", "lessthaneq"},
          {"v1", window.latest.to_string() + "T23:59:59Z"},
          {"order", "creation_ts DESC"},
          {"limit", std::to_string(limit)},
          {"offset", std::to_string(offset)}};
}

// Pages backwards from the latest date until a short page arrives.
inline FetchResult fetch_bugs(const std::string& endpoint, const IngestionWindow& window,
                              const FetchOptions& options = {}) {
  if (options.page_size == 0) throw ConfigError("page size must be positive");
  const auto scheme = endpoint.find("://");
  const auto slash = endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  const std::string base = endpoint.substr(0, slash);
  std::string prefix = slash == std::string::npos ? "" : endpoint.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  const std::string path = prefix + "/rest/bug";

  httplib::Client client(base);
  client.set_connection_timeout(options.timeout);
  client.set_read_timeout(options.timeout);

  FetchResult out;
  std::set<std::int64_t> seen;
  for (std::size_t offset = 0;; offset += options.page_size) {
    const auto params = bugzilla_page_params(window, options.fields, options.page_size, offset);
    std::string body;
    for (std::size_t attempt = 0;; ++attempt) {
      ++out.requests;
      auto res = client.Get(path, params, httplib::Headers{{"Accept", "application/json"}});
      if (res && res->status == 200) {
        body = std::move(res->body);
        break;
      }
      const bool transient = !res || res->status >= 500 || res->status == 429;
      const std::string why = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
      if (!transient || attempt + 1 >= options.max_attempts) {
        throw IngestError("Bugzilla request at offset " + std::to_string(offset) + " failed: " + why);
      }
      ++out.retries;
      auto delay = options.backoff_initial * (std::int64_t{1} << std::min<std::size_t>(attempt, 20));
      options.sleep(std::min(delay, options.backoff_cap));
    }
    nlohmann::json page;
    try {
      page = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw IngestError(std::string("Bugzilla page is not JSON: ") + e.what());
    }
    if (!page.contains("bugs") || !page["bugs"].is_array()) throw IngestError("Bugzilla page has no 'bugs' array");
    const auto& bugs = page["bugs"];
    for (const auto& j : bugs) {
      BugRecord b;
      try {
        b = parse_bug_record(j);
      } catch (const std::exception& e) {
        ++out.malformed;
        warn(std::string("skipping malformed bug record: ") + e.what());
        continue;
      }
      if (!window.contains(*CivilDate::parse(b.creation_time))) {
        ++out.outside_window;
        continue;
      }
      if (!seen.insert(b.id).second) {
        ++out.duplicates;
        continue;
      }
      out.records.push_back(std::move(b));
    }
    if (bugs.size() < options.page_size) break;
  }
  return out;
}

struct PairReport {
  std::size_t links = 0;
  std::size_t emitted = 0;
  std::size_t unresolved = 0;  // target outside the fetched records
  std::size_t empty = 0;       // a summary was blank
};

inline nlohmann::json to_json(const PairReport& r) {
  return {{"links", r.links}, {"emitted", r.emitted}, {"unresolved", r.unresolved}, {"empty", r.empty}};
}

struct PairBuild {
  std::vector<LabeledExample> pairs;
  PairReport report;
};

namespace detail {

template <typename Targets>
PairBuild link_pairs(const std::vector<BugRecord>& records, const std::string& label, Targets targets) {
  std::map<std::int64_t, const BugRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.id, &r);
  PairBuild out;
  for (const auto& r : records) {
    for (auto t : targets(r)) {
      ++out.report.links;
      auto it = by_id.find(t);
      if (it == by_id.end()) {
        ++out.report.unresolved;
        continue;
      }
      auto u = normalize_sentence(r.summary);
      auto v = normalize_sentence(it->second->summary);
      if (u.empty() || v.empty()) {
        ++out.report.empty;
        continue;
      }
      out.pairs.push_back({{std::move(u), std::move(v)}, label});
      ++out.report.emitted;
    }
  }
  return out;
}

}  // namespace detail

// (summary of bug, summary of the bug it duplicates), for DUPLICATE resolutions.
inline PairBuild build_duplicate_pairs(const std::vector<BugRecord>& records, const std::string& label = "Duplicate") {
  return detail::link_pairs(records, label, [](const BugRecord& r) {
    return r.resolution == "DUPLICATE" ? r.dupe_of : std::vector<std::int64_t>{};
  });
}

// (u, v) where u depends on v.
inline PairBuild build_dependency_pairs(const std::vector<BugRecord>& records,
                                        const std::string& label = "Entailment") {
  return detail::link_pairs(records, label, [](const BugRecord& r) { return r.depends_on; });
}

using IdPair = std::pair<std::int64_t, std::int64_t>;

inline IdPair unordered_ids(std::int64_t a, std::int64_t b) { return a < b ? IdPair{a, b} : IdPair{b, a}; }

// Every duplicate and dependency link as an unordered id pair.
inline std::set<IdPair> linked_id_pairs(const std::vector<BugRecord>& records) {
  std::set<IdPair> out;
  for (const auto& r : records) {
    for (auto t : r.dupe_of) out.insert(unordered_ids(r.id, t));
    for (auto t : r.depends_on) out.insert(unordered_ids(r.id, t));
  }
  return out;
}

struct NeutralCandidate {
  std::int64_t id = 0;
  std::string text;
};

inline std::vector<NeutralCandidate> open_bug_candidates(const std::vector<BugRecord>& records) {
  std::vector<NeutralCandidate> out;
  for (const auto& r : records) {
    if (r.is_open()) out.push_back({r.id, r.summary});
  }
  return out;
}

// n unordered pairs of distinct candidates, uniform over the pairs not in
// `excluded`. Candidates are ordered by id and blank texts dropped first.
inline std::vector<LabeledExample> build_neutral_pairs(std::vector<NeutralCandidate> candidates, std::size_t n,
                                                       std::uint64_t seed, const std::set<IdPair>& excluded = {},
                                                       const std::string& label = "Neutral") {
  std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  candidates.erase(std::unique(candidates.begin(), candidates.end(),
                               [](const auto& a, const auto& b) { return a.id == b.id; }),
                   candidates.end());
  std::erase_if(candidates, [](const auto& c) { return normalize_sentence(c.text).empty(); });
  if (n == 0) return {};
  const std::size_t k = candidates.size();
  if (k < 2) throw InfeasibleError("neutral pairs need at least two open records");
  const std::size_t total = k * (k - 1) / 2;
  auto pair_at = [&](std::size_t i) {
    std::size_t a = 0;
    std::size_t row = k - 1;
    while (i >= row) {
      i -= row;
      ++a;
      --row;
    }
    return std::pair<std::size_t, std::size_t>{a, a + 1 + i};
  };
  auto is_excluded = [&](std::size_t i) {
    auto [a, b] = pair_at(i);
    return excluded.count(unordered_ids(candidates[a].id, candidates[b].id)) > 0;
  };
  std::size_t blocked = 0;
  for (const auto& [a, b] : excluded) {
    auto in = [&](std::int64_t id) {
      return std::binary_search(candidates.begin(), candidates.end(), NeutralCandidate{id, {}},
                                [](const auto& x, const auto& y) { return x.id < y.id; });
    };
    if (a != b && in(a) && in(b)) ++blocked;
  }
  const std::size_t available = total - blocked;
  if (n > available) {
    throw InfeasibleError("requested " + std::to_string(n) + " neutral pairs but only " + std::to_string(available) +
                          " are available");
  }
  Rng rng(derive_seed(seed, 0x4E75));
  std::vector<std::size_t> chosen;
  if (total <= (std::size_t{1} << 21) || 2 * n > available) {
    std::vector<std::size_t> valid;
    valid.reserve(available);
    for (std::size_t i = 0; i < total; ++i) {
      if (!is_excluded(i)) valid.push_back(i);
    }
    for (std::size_t j : rng.sample_distinct(valid.size(), n)) chosen.push_back(valid[j]);
  } else {
    std::set<std::size_t> seen;
    while (chosen.size() < n) {
      const std::size_t i = rng.uniform_index(total);
      if (!is_excluded(i) && seen.insert(i).second) chosen.push_back(i);
    }
  }
  std::sort(chosen.begin(), chosen.end());
  std::vector<LabeledExample> out;
  out.reserve(n);
  for (std::size_t i : chosen) {
    auto [a, b] = pair_at(i);
    out.push_back({{normalize_sentence(candidates[a].text), normalize_sentence(candidates[b].text)}, label});
  }
  return out;
}

struct IngestResult {
  Dataset dataset;
  nlohmann::json report;
};

// Linked pairs for the task plus neutral_ratio times as many neutral pairs
// sampled from open bugs.
inline IngestResult assemble_bugzilla_task(const std::vector<BugRecord>& records, std::string_view task_id,
                                           double neutral_ratio, std::uint64_t seed) {
  const auto labels = builtin_label_set(task_id);
  PairBuild linked;
  std::string neutral_label;
  if (task_id == "bugzilla_duplicate") {
    linked = build_duplicate_pairs(records, "Duplicate");
    neutral_label = "Neutral";
  } else if (task_id == "bugzilla_entailment") {
    linked = build_dependency_pairs(records, "Entailment");
    neutral_label = "Not Entailment";
  } else {
    throw UnknownTaskError("'" + std::string(task_id) + "' is not a Bugzilla task");
  }
  if (!(neutral_ratio >= 0.0)) throw ConfigError("neutral ratio must be >= 0");
  const auto n = static_cast<std::size_t>(std::llround(neutral_ratio * static_cast<double>(linked.pairs.size())));
  auto neutral = build_neutral_pairs(open_bug_candidates(records), n, seed, linked_id_pairs(records), neutral_label);
  std::vector<LabeledExample> all = std::move(linked.pairs);
  all.insert(all.end(), neutral.begin(), neutral.end());
  nlohmann::json report{{"records", records.size()},
                        {"links", to_json(linked.report)},
                        {"neutral", neutral.size()},
                        {"neutral_ratio", neutral_ratio},
                        {"seed", seed}};
  return {Dataset(std::move(all), labels, DatasetKind::train), std::move(report)};
}

// ---------------------------------------------------------------------------
// Stack Overflow

struct QuestionRecord {
  std::int64_t id = 0;
  std::string title;
  std::string creation_date;
  std::string tags;
  std::optional<std::int64_t> related_duplicate_id;
  std::optional<std::int64_t> answer_count;
};

struct StackOverflowOptions {
  IngestionWindow window = stackoverflow_window();
  std::string tag = "python";
  double neutral_ratio = 1.0;
  std::uint64_t seed = 0;
};

struct StackOverflowReport {
  std::size_t duplicate_rows = 0;
  std::size_t neutral_rows = 0;
  std::size_t rejected_tag = 0;
  std::size_t rejected_window = 0;
  std::size_t rejected_state = 0;  // closed or unanswered neutral candidates
  std::size_t rejected_empty = 0;
  std::size_t repeated = 0;
  std::size_t duplicate_pairs = 0;
  std::size_t neutral_pairs = 0;
};

inline nlohmann::json to_json(const StackOverflowReport& r) {
  return {{"duplicate_rows", r.duplicate_rows},   {"neutral_rows", r.neutral_rows},
          {"rejected_tag", r.rejected_tag},       {"rejected_window", r.rejected_window},
          {"rejected_state", r.rejected_state},   {"rejected_empty", r.rejected_empty},
          {"repeated", r.repeated},               {"duplicate_pairs", r.duplicate_pairs},
          {"neutral_pairs", r.neutral_pairs}};
}

// Tags as exported: "<python><email>", "|python|email|" or space separated.
inline bool has_tag(std::string_view tags, std::string_view tag) {
  std::string cur;
  auto matches = [&] {
    bool same = cur.size() == tag.size();
    for (std::size_t i = 0; same && i < cur.size(); ++i) {
      same = std::tolower(static_cast<unsigned char>(cur[i])) == std::tolower(static_cast<unsigned char>(tag[i]));
    }
    return same;
  };
  for (char c : tags) {
    if (c == '<' || c == '>' || c == '|' || c == ',' || c == ';' || is_space(c)) {
      if (matches()) return true;
      cur.clear();
    } else {
      cur += c;
    }
  }
  return matches();
}

namespace detail {

inline std::optional<std::int64_t> parse_int(std::string_view s) {
  s = s.substr(0, s.find_last_not_of(" \t") + 1);
  s.remove_prefix(std::min(s.find_first_not_of(" \t"), s.size()));
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

struct CsvTable {
  std::optional<CsvHeader> header;
  std::vector<CsvRow> rows;  // data rows; rows[i] is CSV row i + 2
};

inline CsvTable load_table(std::istream& in) {
  auto rows = read_csv(in);
  CsvTable t;
  if (rows.empty()) return t;
  t.header.emplace(rows.front());
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() == 1 && rows[i][0].empty()) continue;  // blank line
    if (rows[i].size() != t.header->size()) {
      throw ParseError("expected " + std::to_string(t.header->size()) + " fields, found " +
                       std::to_string(rows[i].size()),
                       i + 1);
    }
    t.rows.push_back(std::move(rows[i]));
  }
  return t;
}

inline std::int64_t require_int(const CsvRow& row, std::size_t col, std::size_t row_number, const char* name) {
  auto v = parse_int(row[col]);
  if (!v) throw ParseError(std::string("column '") + name + "' is not an integer", row_number);
  return *v;
}

}  // namespace detail

struct StackOverflowIngest {
  Dataset dataset;
  StackOverflowReport report;
  std::vector<QuestionRecord> duplicates;
  std::vector<QuestionRecord> neutrals;
};

// Duplicate pairs (title, duptitle) from the duplicate-query export and
// neutral pairs sampled among the neutral-query titles. Row numbers in
// errors count the header as row 1.
inline StackOverflowIngest ingest_stackoverflow_exports(std::istream& duplicates_csv, std::istream& neutral_csv,
                                                        const StackOverflowOptions& options = {}) {
  StackOverflowIngest out{Dataset({}, builtin_label_set("so_duplicate"), DatasetKind::train), {}, {}, {}};
  auto& rep = out.report;
  auto in_window = [&](const std::string& date, std::size_t row) {
    auto d = CivilDate::parse(date);
    if (!d) throw ParseError("unparseable date '" + date + "'", row);
    return options.window.contains(*d);
  };

  std::vector<LabeledExample> examples;
  std::set<IdPair> links;
  std::set<std::int64_t> linked_ids;
  {
    auto t = detail::load_table(duplicates_csv);
    if (t.header) {
      const auto& h = *t.header;
      const auto c_id = h.require("id"), c_title = h.require("title"), c_date = h.require("creationdate");
      const auto c_tags = h.require("tags"), c_dupid = h.require("dupid"), c_duptitle = h.require("duptitle");
      const auto c_dupdate = h.find("dupcreationdate");
      for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        const std::size_t rn = i + 2;
        ++rep.duplicate_rows;
        QuestionRecord q{detail::require_int(row, c_id, rn, "id"), row[c_title], row[c_date], row[c_tags],
                         detail::require_int(row, c_dupid, rn, "dupid"), std::nullopt};
        if (!has_tag(q.tags, options.tag)) {
          ++rep.rejected_tag;
          continue;
        }
        if (!in_window(q.creation_date, rn) || (c_dupdate && !in_window(row[*c_dupdate], rn))) {
          ++rep.rejected_window;
          continue;
        }
        auto u = normalize_sentence(q.title), v = normalize_sentence(row[c_duptitle]);
        if (u.empty() || v.empty()) {
          ++rep.rejected_empty;
          continue;
        }
        if (!links.insert(unordered_ids(q.id, *q.related_duplicate_id)).second) {
          ++rep.repeated;
          continue;
        }
        linked_ids.insert(q.id);
        linked_ids.insert(*q.related_duplicate_id);
        examples.push_back({{std::move(u), std::move(v)}, "Duplicate"});
        out.duplicates.push_back(std::move(q));
      }
    }
  }
  rep.duplicate_pairs = examples.size();

  std::vector<NeutralCandidate> candidates;
  {
    auto t = detail::load_table(neutral_csv);
    if (t.header) {
      const auto& h = *t.header;
      const auto c_id = h.require("id"), c_title = h.require("title"), c_date = h.require("creationdate");
      const auto c_tags = h.find("tags"), c_closed = h.find("closeddate"), c_answers = h.find("answercount");
      std::set<std::int64_t> seen;
      for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        const std::size_t rn = i + 2;
        ++rep.neutral_rows;
        QuestionRecord q{detail::require_int(row, c_id, rn, "id"), row[c_title], row[c_date],
                         c_tags ? row[*c_tags] : std::string(), std::nullopt, std::nullopt};
        if (c_answers) q.answer_count = detail::require_int(row, *c_answers, rn, "answercount");
        if (c_tags && !has_tag(q.tags, options.tag)) {
          ++rep.rejected_tag;
          continue;
        }
        if (!in_window(q.creation_date, rn)) {
          ++rep.rejected_window;
          continue;
        }
        if ((c_closed && !normalize_sentence(row[*c_closed]).empty()) || (q.answer_count && *q.answer_count <= 0)) {
          ++rep.rejected_state;
          continue;
        }
        if (normalize_sentence(q.title).empty()) {
          ++rep.rejected_empty;
          continue;
        }
        if (!seen.insert(q.id).second) {
          ++rep.repeated;
          continue;
        }
        candidates.push_back({q.id, q.title});
        out.neutrals.push_back(std::move(q));
      }
    }
  }

  auto n = static_cast<std::size_t>(std::llround(options.neutral_ratio * static_cast<double>(examples.size())));
  std::erase_if(candidates, [&](const auto& c) { return linked_ids.count(c.id) > 0; });
  const std::size_t k = candidates.size();
  const std::size_t possible = k < 2 ? 0 : k * (k - 1) / 2;
  if (n > possible) {
    warn("only " + std::to_string(possible) + " neutral pairs available, " + std::to_string(n) + " requested");
    n = possible;
  }
  auto neutral = build_neutral_pairs(std::move(candidates), n, options.seed, links, "Neutral");
  rep.neutral_pairs = neutral.size();
  examples.insert(examples.end(), neutral.begin(), neutral.end());
  out.dataset = Dataset(std::move(examples), builtin_label_set("so_duplicate"), DatasetKind::train);
  return out;
}

inline StackOverflowIngest ingest_stackoverflow_exports(const std::filesystem::path& duplicates_file,
                                                        const std::filesystem::path& neutral_file,
                                                        const StackOverflowOptions& options = {}) {
  std::ifstream d(duplicates_file, std::ios::binary), n(neutral_file, std::ios::binary);
  if (!d) throw IngestError("cannot open " + duplicates_file.string());
  if (!n) throw IngestError("cannot open " + neutral_file.string());
  return ingest_stackoverflow_exports(d, n, options);
}

// ---------------------------------------------------------------------------
// SRS

inline Dataset load_srs_pairs(std::istream& in) {
  return parse_dataset_lines(in, builtin_label_set("srs_conflict"), DatasetKind::train);
}

inline Dataset load_srs_pairs(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw LoadError("cannot open " + file.string());
  return load_srs_pairs(in);
}

}  // namespace fewshot
