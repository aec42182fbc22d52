#pragma once

// A small in-process Bugzilla REST stand-in serving a fixed fixture, used by
// the ingestion contract tests and the `mock-bugzilla` CLI subcommand.
//
// Fixture: 250 bugs created 2019-01-01 .. 2021-12-26 (ids 1000..1249) plus
// 10 bugs outside that window. Two DUPLICATE links (1010 -> 1005,
// 1100 -> 1090) and three dependency links (1020 -> 1021, 1021 -> 1020,
// 1200 -> 1150).

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "fewshot/errors.hpp"
#include "fewshot/ingestion.hpp"
#include "fewshot/synthetic.hpp"

namespace fewshot {

inline constexpr std::size_t kMockInWindowBugs = 250;

namespace detail {

inline std::string fixture_timestamp(std::chrono::sys_days day, int hour) {
  const std::chrono::year_month_day ymd{day};
  CivilDate d{static_cast<int>(ymd.year()), static_cast<int>(static_cast<unsigned>(ymd.month())),
              static_cast<int>(static_cast<unsigned>(ymd.day()))};
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02d", hour % 24);
  return d.to_string() + "T" + buf + ":00:00Z";
}

inline std::string fixture_summary(std::size_t i) {
  static constexpr const char* kinds[] = {"Crash", "Hang", "Regression", "Assertion failure", "Memory leak",
                                          "Rendering glitch", "Wrong result", "Slow startup"};
  static constexpr const char* where[] = {"in the editor", "when saving", "on shutdown", "after update",
                                          "in the toolbar", "with large files", "during sync"};
  return std::string(kinds[i % 8]) + " " + where[(i / 8) % 7] + " " + synthetic_word(i * 7 + 3) + " " +
         synthetic_word(i * 13 + 5);
}

}  // namespace detail

inline std::vector<BugRecord> bugzilla_fixture() {
  using namespace std::chrono;
  std::vector<BugRecord> out;
  const sys_days start = 2019y / January / 1;
  for (std::size_t i = 0; i < kMockInWindowBugs; ++i) {
    BugRecord b;
    b.id = 1000 + static_cast<std::int64_t>(i);
    b.summary = detail::fixture_summary(i);
    b.description = "Steps to reproduce: " + b.summary;
    b.creation_time = detail::fixture_timestamp(start + days(static_cast<int>(i) * 4), static_cast<int>(i));
    b.resolution = i % 5 == 0 ? "FIXED" : (i % 11 == 0 ? "WONTFIX" : "");
    out.push_back(std::move(b));
  }
  auto bug = [&](std::int64_t id) -> BugRecord& { return out[static_cast<std::size_t>(id - 1000)]; };
  bug(1010).resolution = "DUPLICATE";
  bug(1010).dupe_of = {1005};
  bug(1100).resolution = "DUPLICATE";
  bug(1100).dupe_of = {1090};
  bug(1020).depends_on = {1021};
  bug(1021).depends_on = {1020};
  bug(1200).depends_on = {1150};
  for (int k = 0; k < 5; ++k) {
    BugRecord early{900 + k, "Outside window early " + synthetic_word(900 + k), "", "", "", {}, {}};
    early.creation_time = detail::fixture_timestamp(sys_days{2018y / June / 1} + days(k), 9);
    BugRecord late{1300 + k, "Outside window late " + synthetic_word(1300 + k), "", "", "", {}, {}};
    late.creation_time = detail::fixture_timestamp(sys_days{2022y / February / 1} + days(k), 9);
    out.push_back(std::move(early));
    out.push_back(std::move(late));
  }
  return out;
}

inline std::vector<nlohmann::json> bugzilla_fixture_json() {
  std::vector<nlohmann::json> out;
  for (const auto& b : bugzilla_fixture()) out.push_back(to_json(b));
  return out;
}

class MockBugzilla {
 public:
  explicit MockBugzilla(std::vector<nlohmann::json> records = bugzilla_fixture_json())
      : records_(std::move(records)) {
    server_.Get("/rest/bug", [this](const httplib::Request& req, httplib::Response& res) { handle(req, res); });
  }

  MockBugzilla(const MockBugzilla&) = delete;
  MockBugzilla& operator=(const MockBugzilla&) = delete;
  ~MockBugzilla() { stop(); }

  // Binds (port 0 = any free port) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    host_ = host;
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw IngestError("mock Bugzilla could not bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  // Serves on the calling thread until stop() is called elsewhere.
  void serve(const std::string& host, int port) {
    host_ = host;
    port_ = port;
    if (!server_.listen(host, port)) throw IngestError("mock Bugzilla could not listen on " + endpoint());
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  std::string endpoint() const { return "http://" + host_ + ":" + std::to_string(port_); }
  int port() const { return port_; }

  std::size_t request_count() const { return requests_served_.load(); }

  std::vector<httplib::Params> requests() const {
    std::lock_guard lock(mutex_);
    return log_;
  }

  // The next n requests fail with `status` before any work is done.
  void fail_next(std::size_t n, int status = 503) {
    std::lock_guard lock(mutex_);
    failures_left_ = n;
    failure_status_ = status;
  }

 private:
  static std::string param(const httplib::Request& req, const char* key) {
    return req.has_param(key) ? req.get_param_value(key) : std::string();
  }

  void handle(const httplib::Request& req, httplib::Response& res) {
    ++requests_served_;
    {
      std::lock_guard lock(mutex_);
      log_.push_back(req.params);
      if (failures_left_ > 0) {
        --failures_left_;
        res.status = failure_status_;
        res.set_content(R"({"error":true,"message":"injected failure"})", "application/json");
        return;
      }
    }
    for (const char* key : {"include_fields", "creation_time", "f1", "o1", "v1", "order", "limit", "offset"}) {
      if (!req.has_param(key)) {
        res.status = 400;
        res.set_content(nlohmann::json{{"error", true}, {"message", std::string("missing ") + key}}.dump(),
                        "application/json");
        return;
      }
    }
    const auto lo = CivilDate::parse(param(req, "creation_time"));
    const auto hi = CivilDate::parse(param(req, "v1"));
    const bool descending = param(req, "order").find("DESC") != std::string::npos;
    std::size_t limit = 0, offset = 0;
    try {
      limit = std::stoul(param(req, "limit"));
      offset = std::stoul(param(req, "offset"));
    } catch (const std::exception&) {
      res.status = 400;
      return;
    }
    if (!lo || !hi || param(req, "f1") != "creation_ts" || param(req, "o1") != "lessthaneq") {
      res.status = 400;
      return;
    }
    std::vector<std::string> fields;
    {
      std::string cur;
      for (char c : param(req, "include_fields") + ",") {
        if (c == ',') {
          if (!cur.empty()) fields.push_back(cur);
          cur.clear();
        } else {
          cur += c;
        }
      }
    }
    std::vector<const nlohmann::json*> hits;
    for (const auto& r : records_) {
      const auto d = r.contains("creation_time") && r["creation_time"].is_string()
                         ? CivilDate::parse(r["creation_time"].get<std::string>())
                         : std::nullopt;
      if (!d || (*lo <= *d && *d <= *hi)) hits.push_back(&r);  // undated records are served as-is
    }
    auto key = [](const nlohmann::json* r) {
      const std::string t = r->contains("creation_time") && (*r)["creation_time"].is_string()
                                ? (*r)["creation_time"].get<std::string>()
                                : std::string();
      return std::make_pair(t, r->is_object() ? r->value("id", std::int64_t{0}) : std::int64_t{0});
    };
    std::stable_sort(hits.begin(), hits.end(), [&](auto a, auto b) { return descending ? key(b) < key(a) : key(a) < key(b); });
    nlohmann::json bugs = nlohmann::json::array();
    for (std::size_t i = offset; i < hits.size() && i < offset + limit; ++i) {
      nlohmann::json b = nlohmann::json::object();
      for (const auto& f : fields) {
        if (hits[i]->contains(f)) b[f] = (*hits[i])[f];
      }
      if (!hits[i]->is_object()) b = *hits[i];
      bugs.push_back(std::move(b));
    }
    res.set_content(nlohmann::json{{"bugs", bugs}}.dump(), "application/json");
  }

  std::vector<nlohmann::json> records_;
  httplib::Server server_;
  std::thread thread_;
  std::string host_ = "127.0.0.1";
  int port_ = -1;
  std::atomic<std::size_t> requests_served_{0};
  mutable std::mutex mutex_;
  std::vector<httplib::Params> log_;
  std::size_t failures_left_ = 0;
  int failure_status_ = 503;
};

}  // namespace fewshot
