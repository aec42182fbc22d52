#pragma once

// Line-delimited JSON adapter for model servers running as a subprocess.
//
// Each request is one JSON object on one line: {"id": n, "verb": ..., ...}.
// Each reply is one line: {"id": n, "ok": true, "result": ...} or
// {"id": n, "ok": false, "error": message, "error_type": kind}.
//
// Verbs: hello, create, load, release, save, score, train_mlm, train_clf,
// predict, encode, fit_encoder, count_tokens, check_tokens.
//
// serve_backend() implements the server side for any Backend, so the toy
// backend can run out of process (tools/fewshot_backend_server).

#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "fewshot/backend.hpp"
#include "fewshot/errors.hpp"
#include "fewshot/toy_backend.hpp"

namespace fewshot {

inline constexpr int kProtocolVersion = 1;
inline constexpr const char* kBackendCommandEnv = "FEWSHOT_BACKEND_CMD";

// ---------------------------------------------------------------------------
// wire encoding

inline nlohmann::json to_wire(const TrainOptions& o) {
  return {{"steps", o.steps}, {"batch", o.batch}, {"lr", o.lr}, {"seed", o.seed},
          {"start_step", o.start_step}, {"accumulation", o.accumulation}};
}

inline TrainOptions train_options_from_wire(const nlohmann::json& j) {
  TrainOptions o;
  o.steps = j.at("steps");
  o.batch = j.value("batch", o.batch);
  o.lr = j.value("lr", o.lr);
  o.seed = j.value("seed", o.seed);
  o.start_step = j.value("start_step", o.start_step);
  o.accumulation = j.value("accumulation", o.accumulation);
  return o;
}

inline nlohmann::json to_wire(const ClozeInput& c) {
  nlohmann::json j{{"text", c.text}, {"mask_position", c.mask_position}};
  j["segment_boundary"] = c.segment_boundary ? nlohmann::json(*c.segment_boundary) : nlohmann::json(nullptr);
  return j;
}

inline ClozeInput cloze_from_wire(const nlohmann::json& j) {
  ClozeInput c{j.at("text"), j.at("mask_position"), std::nullopt};
  if (j.contains("segment_boundary") && !j["segment_boundary"].is_null()) c.segment_boundary = j["segment_boundary"];
  return c;
}

inline nlohmann::json to_wire(const JoinedText& t) {
  nlohmann::json j{{"text", t.text}};
  j["boundary"] = t.boundary ? nlohmann::json(*t.boundary) : nlohmann::json(nullptr);
  return j;
}

inline JoinedText joined_from_wire(const nlohmann::json& j) {
  JoinedText t{j.at("text"), std::nullopt};
  if (j.contains("boundary") && !j["boundary"].is_null()) t.boundary = j["boundary"];
  return t;
}

inline nlohmann::json to_wire(const TrainStats& s) { return {{"step_losses", s.step_losses}}; }

inline TrainStats stats_from_wire(const nlohmann::json& j) {
  return {j.value("step_losses", std::vector<double>{})};
}

namespace detail {

inline const char* error_type(const std::exception& e) {
  if (dynamic_cast<const VocabularyError*>(&e)) return "vocabulary";
  if (dynamic_cast<const ShapeError*>(&e)) return "shape";
  if (dynamic_cast<const NoDataError*>(&e)) return "no_data";
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const NumericError*>(&e)) return "numeric";
  if (dynamic_cast<const LoadError*>(&e)) return "load";
  return "backend";
}

[[noreturn]] inline void throw_remote(const std::string& type, const std::string& msg) {
  if (type == "vocabulary") throw VocabularyError(msg);
  if (type == "shape") throw ShapeError(msg);
  if (type == "no_data") throw NoDataError(msg);
  if (type == "config") throw ConfigError(msg);
  if (type == "numeric") throw NumericError(msg);
  if (type == "load") throw LoadError(msg);
  throw BackendError(msg);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// server side

class BackendServer {
 public:
  explicit BackendServer(const Backend& backend) : backend_(backend) {}

  nlohmann::json handle(const nlohmann::json& request) {
    nlohmann::json reply{{"id", request.value("id", nlohmann::json(nullptr))}};
    try {
      reply["result"] = dispatch(request);
      reply["ok"] = true;
    } catch (const std::exception& e) {
      reply["ok"] = false;
      reply["error"] = e.what();
      reply["error_type"] = detail::error_type(e);
    }
    return reply;
  }

 private:
  using Model = std::variant<std::unique_ptr<MaskedScorer>, std::unique_ptr<SequenceClassifier>,
                             std::unique_ptr<SentenceEncoder>>;

  template <typename T>
  T& get(const nlohmann::json& req) {
    auto it = models_.find(req.at("handle").get<std::int64_t>());
    if (it == models_.end()) throw ConfigError("unknown handle");
    auto* p = std::get_if<std::unique_ptr<T>>(&it->second);
    if (!p) throw ConfigError("handle refers to a different model kind");
    return **p;
  }

  nlohmann::json add(Model m) {
    const auto h = next_handle_++;
    nlohmann::json out{{"handle", h}};
    if (auto* c = std::get_if<std::unique_ptr<SequenceClassifier>>(&m)) out["num_labels"] = (*c)->num_labels();
    if (auto* e = std::get_if<std::unique_ptr<SentenceEncoder>>(&m)) out["dimension"] = (*e)->dimension();
    models_.emplace(h, std::move(m));
    return out;
  }

  nlohmann::json dispatch(const nlohmann::json& req) {
    const std::string verb = req.at("verb");
    if (verb == "hello") {
      return {{"protocol", kProtocolVersion},
              {"name", backend_.name()},
              {"separator", backend_.separator()},
              {"default_lr", backend_.default_lr()},
              {"default_encoder_lr", backend_.default_encoder_lr()}};
    }
    if (verb == "create" || verb == "load") {
      const std::string kind = req.at("kind");
      const bool create = verb == "create";
      if (kind == "scorer") {
        return add(create ? backend_.make_scorer(req.value("seed", std::uint64_t{0}))
                          : backend_.load_scorer(req.at("state")));
      }
      if (kind == "classifier") {
        return add(create ? backend_.make_classifier(req.at("num_labels"), req.value("seed", std::uint64_t{0}))
                          : backend_.load_classifier(req.at("state")));
      }
      if (kind == "encoder") {
        return add(create ? backend_.make_encoder(req.value("seed", std::uint64_t{0}))
                          : backend_.load_encoder(req.at("state")));
      }
      throw ConfigError("unknown model kind '" + kind + "'");
    }
    if (verb == "release") {
      models_.erase(req.at("handle").get<std::int64_t>());
      return nullptr;
    }
    if (verb == "save") {
      auto it = models_.find(req.at("handle").get<std::int64_t>());
      if (it == models_.end()) throw ConfigError("unknown handle");
      return std::visit([](const auto& m) { return m->save(); }, it->second);
    }
    if (verb == "score") {
      const auto candidates = req.at("candidates").get<std::vector<std::string>>();
      return {{"scores", get<MaskedScorer>(req).score(cloze_from_wire(req.at("cloze")), candidates).scores}};
    }
    if (verb == "train_mlm") {
      std::vector<MlmExample> data;
      for (const auto& x : req.at("data")) data.push_back({cloze_from_wire(x.at("cloze")), x.at("target")});
      const auto candidates = req.at("candidates").get<std::vector<std::string>>();
      return to_wire(get<MaskedScorer>(req).train_mlm(data, candidates, train_options_from_wire(req.at("options"))));
    }
    if (verb == "train_clf") {
      std::vector<SoftTarget> data;
      for (const auto& x : req.at("data")) {
        data.push_back({joined_from_wire(x.at("input")), x.at("distribution").get<std::vector<double>>()});
      }
      return to_wire(get<SequenceClassifier>(req).train(data, train_options_from_wire(req.at("options"))));
    }
    if (verb == "predict") {
      return {{"scores", get<SequenceClassifier>(req).predict(joined_from_wire(req.at("input")))}};
    }
    if (verb == "encode") return {{"vector", get<SentenceEncoder>(req).encode(req.at("text").get<std::string>())}};
    if (verb == "fit_encoder") {
      std::vector<ContrastiveTriplet> data;
      for (const auto& x : req.at("triplets")) {
        data.push_back({x.at("a"), x.at("b"), x.at("similarity"), x.value("source_a", std::size_t{0}),
                        x.value("source_b", std::size_t{0})});
      }
      return to_wire(get<SentenceEncoder>(req).fit(data, train_options_from_wire(req.at("options"))));
    }
    if (verb == "count_tokens") return {{"count", backend_.token_count(req.at("text").get<std::string>())}};
    if (verb == "check_tokens") {
      backend_.check_tokens(req.at("tokens").get<std::vector<std::string>>());
      return nullptr;
    }
    throw ConfigError("unknown verb '" + verb + "'");
  }

  const Backend& backend_;
  std::map<std::int64_t, Model> models_;
  std::int64_t next_handle_ = 1;
};

// Reads requests from `in` until EOF, one reply line per request.
inline void serve_backend(const Backend& backend, std::istream& in, std::ostream& out) {
  BackendServer server(backend);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json reply;
    try {
      reply = server.handle(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      reply = {{"id", nullptr}, {"ok", false}, {"error", std::string("bad request: ") + e.what()},
               {"error_type", "backend"}};
    }
    out << reply.dump() << '\n' << std::flush;
  }
}

// ---------------------------------------------------------------------------
// client side

class Channel {
 public:
  virtual ~Channel() = default;
  // Sends one request line and returns the matching reply's result.
  virtual nlohmann::json call(nlohmann::json request) = 0;
};

namespace detail {

inline nlohmann::json unwrap_reply(const nlohmann::json& reply) {
  if (!reply.is_object() || !reply.contains("ok")) throw BackendError("malformed reply from backend");
  if (!reply["ok"].get<bool>()) {
    throw_remote(reply.value("error_type", "backend"), reply.value("error", std::string("backend error")));
  }
  return reply.contains("result") ? reply["result"] : nlohmann::json(nullptr);
}

}  // namespace detail

// Serves requests with a BackendServer in the same process; mainly for tests.
class InProcessChannel final : public Channel {
 public:
  explicit InProcessChannel(std::shared_ptr<const Backend> backend)
      : backend_(std::move(backend)), server_(*backend_) {}

  nlohmann::json call(nlohmann::json request) override {
    std::lock_guard lock(mutex_);
    request["id"] = next_id_++;
    // Round-trip through text so the wire encoding is exercised.
    const auto reply = nlohmann::json::parse(server_.handle(nlohmann::json::parse(request.dump())).dump());
    return detail::unwrap_reply(reply);
  }

 private:
  std::shared_ptr<const Backend> backend_;
  BackendServer server_;
  std::mutex mutex_;
  std::int64_t next_id_ = 1;
};

// Runs `/bin/sh -c command` with stdin/stdout connected to a socket pair.
class ProcessChannel final : public Channel {
 public:
  explicit ProcessChannel(const std::string& command) : command_(command) {
    int fds[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) {
      throw BackendError(std::string("socketpair failed: ") + std::strerror(errno));
    }
    pid_ = ::fork();
    if (pid_ < 0) {
      ::close(fds[0]);
      ::close(fds[1]);
      throw BackendError(std::string("fork failed: ") + std::strerror(errno));
    }
    if (pid_ == 0) {
      ::close(fds[0]);
      ::dup2(fds[1], STDIN_FILENO);
      ::dup2(fds[1], STDOUT_FILENO);
      ::close(fds[1]);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(fds[1]);
    fd_ = fds[0];
  }

  ProcessChannel(const ProcessChannel&) = delete;
  ProcessChannel& operator=(const ProcessChannel&) = delete;

  ~ProcessChannel() override {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_WR);
      ::close(fd_);
    }
    if (pid_ > 0) {
      int status = 0;
      ::waitpid(pid_, &status, 0);
    }
  }

  nlohmann::json call(nlohmann::json request) override {
    std::lock_guard lock(mutex_);
    const auto id = next_id_++;
    request["id"] = id;
    const std::string line = request.dump() + "\n";
    for (std::size_t sent = 0; sent < line.size();) {
      const auto n = ::send(fd_, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw BackendError("backend process '" + command_ + "' is not accepting requests");
      sent += static_cast<std::size_t>(n);
    }
    const auto reply = nlohmann::json::parse(read_line(), nullptr, false);
    if (reply.is_discarded()) throw BackendError("backend sent a reply that is not JSON");
    if (reply.value("id", std::int64_t{-1}) != id) throw BackendError("backend reply id does not match request");
    return detail::unwrap_reply(reply);
  }

 private:
  std::string read_line() {
    for (;;) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      char chunk[65536];
      const auto n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw BackendError("backend process '" + command_ + "' closed the connection");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  std::string command_;
  pid_t pid_ = -1;
  int fd_ = -1;
  std::string buffer_;
  std::mutex mutex_;
  std::int64_t next_id_ = 1;
};

namespace detail {

class RemoteModel {
 public:
  RemoteModel(std::shared_ptr<Channel> channel, const nlohmann::json& created)
      : channel_(std::move(channel)), handle_(created.at("handle").get<std::int64_t>()) {}
  RemoteModel(const RemoteModel&) = delete;
  RemoteModel& operator=(const RemoteModel&) = delete;
  ~RemoteModel() {
    try {
      channel_->call({{"verb", "release"}, {"handle", handle_}});
    } catch (...) {
    }
  }

 protected:
  nlohmann::json call(nlohmann::json req) const {
    req["handle"] = handle_;
    return channel_->call(std::move(req));
  }

  std::shared_ptr<Channel> channel_;
  std::int64_t handle_;
};

}  // namespace detail

class ExternalScorer final : public MaskedScorer, detail::RemoteModel {
 public:
  using RemoteModel::RemoteModel;

  TokenScores score(const ClozeInput& cloze, std::span<const std::string> candidates) const override {
    const std::vector<std::string> cands(candidates.begin(), candidates.end());
    auto r = call({{"verb", "score"}, {"cloze", to_wire(cloze)}, {"candidates", cands}});
    TokenScores out{cands, r.at("scores").get<std::vector<double>>()};
    if (out.scores.size() != out.tokens.size()) throw ShapeError("backend returned the wrong number of scores");
    return out;
  }

  TrainStats train_mlm(std::span<const MlmExample> data, std::span<const std::string> candidates,
                       const TrainOptions& options) override {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& ex : data) rows.push_back({{"cloze", to_wire(ex.cloze)}, {"target", ex.target}});
    return stats_from_wire(call({{"verb", "train_mlm"},
                                 {"data", rows},
                                 {"candidates", std::vector<std::string>(candidates.begin(), candidates.end())},
                                 {"options", to_wire(options)}}));
  }

  nlohmann::json save() const override { return call({{"verb", "save"}}); }
};

class ExternalClassifier final : public SequenceClassifier, detail::RemoteModel {
 public:
  ExternalClassifier(std::shared_ptr<Channel> channel, const nlohmann::json& created)
      : RemoteModel(std::move(channel), created), num_labels_(created.at("num_labels")) {}

  std::size_t num_labels() const override { return num_labels_; }

  TrainStats train(std::span<const SoftTarget> data, const TrainOptions& options) override {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& ex : data) rows.push_back({{"input", to_wire(ex.input)}, {"distribution", ex.distribution}});
    return stats_from_wire(call({{"verb", "train_clf"}, {"data", rows}, {"options", to_wire(options)}}));
  }

  std::vector<double> predict(const JoinedText& input) const override {
    return call({{"verb", "predict"}, {"input", to_wire(input)}}).at("scores").get<std::vector<double>>();
  }

  nlohmann::json save() const override { return call({{"verb", "save"}}); }

 private:
  std::size_t num_labels_;
};

class ExternalEncoder final : public SentenceEncoder, detail::RemoteModel {
 public:
  ExternalEncoder(std::shared_ptr<Channel> channel, const nlohmann::json& created)
      : RemoteModel(std::move(channel), created), dimension_(created.at("dimension")) {}

  std::size_t dimension() const override { return dimension_; }

  std::vector<double> encode(std::string_view text) const override {
    return call({{"verb", "encode"}, {"text", std::string(text)}}).at("vector").get<std::vector<double>>();
  }

  TrainStats fit(std::span<const ContrastiveTriplet> triplets, const TrainOptions& options) override {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& t : triplets) {
      rows.push_back({{"a", t.text_a}, {"b", t.text_b}, {"similarity", t.similarity}, {"source_a", t.source_a},
                      {"source_b", t.source_b}});
    }
    return stats_from_wire(call({{"verb", "fit_encoder"}, {"triplets", rows}, {"options", to_wire(options)}}));
  }

  nlohmann::json save() const override { return call({{"verb", "save"}}); }

 private:
  std::size_t dimension_;
};

class ExternalBackend final : public Backend {
 public:
  explicit ExternalBackend(std::shared_ptr<Channel> channel) : channel_(std::move(channel)) {
    hello_ = channel_->call({{"verb", "hello"}});
    if (hello_.value("protocol", 0) != kProtocolVersion) {
      throw BackendError("backend speaks protocol " + hello_.value("protocol", nlohmann::json(0)).dump() +
                         ", expected " + std::to_string(kProtocolVersion));
    }
  }

  static std::unique_ptr<ExternalBackend> spawn(const std::string& command) {
    return std::make_unique<ExternalBackend>(std::make_shared<ProcessChannel>(command));
  }

  std::string name() const override { return "external:" + hello_.value("name", std::string("unknown")); }

  std::unique_ptr<MaskedScorer> make_scorer(std::uint64_t seed) const override {
    return std::make_unique<ExternalScorer>(channel_,
                                            channel_->call({{"verb", "create"}, {"kind", "scorer"}, {"seed", seed}}));
  }
  std::unique_ptr<SequenceClassifier> make_classifier(std::size_t num_labels, std::uint64_t seed) const override {
    return std::make_unique<ExternalClassifier>(
        channel_,
        channel_->call({{"verb", "create"}, {"kind", "classifier"}, {"num_labels", num_labels}, {"seed", seed}}));
  }
  std::unique_ptr<SentenceEncoder> make_encoder(std::uint64_t seed) const override {
    return std::make_unique<ExternalEncoder>(channel_,
                                             channel_->call({{"verb", "create"}, {"kind", "encoder"}, {"seed", seed}}));
  }

  std::unique_ptr<MaskedScorer> load_scorer(const nlohmann::json& state) const override {
    return std::make_unique<ExternalScorer>(channel_,
                                            channel_->call({{"verb", "load"}, {"kind", "scorer"}, {"state", state}}));
  }
  std::unique_ptr<SequenceClassifier> load_classifier(const nlohmann::json& state) const override {
    return std::make_unique<ExternalClassifier>(
        channel_, channel_->call({{"verb", "load"}, {"kind", "classifier"}, {"state", state}}));
  }
  std::unique_ptr<SentenceEncoder> load_encoder(const nlohmann::json& state) const override {
    return std::make_unique<ExternalEncoder>(channel_,
                                             channel_->call({{"verb", "load"}, {"kind", "encoder"}, {"state", state}}));
  }

  std::size_t token_count(std::string_view text) const override {
    return channel_->call({{"verb", "count_tokens"}, {"text", std::string(text)}}).at("count");
  }
  std::string separator() const override { return hello_.value("separator", std::string(kDefaultSeparator)); }
  void check_tokens(std::span<const std::string> tokens) const override {
    channel_->call({{"verb", "check_tokens"}, {"tokens", std::vector<std::string>(tokens.begin(), tokens.end())}});
  }
  // Typical rate for fine-tuning pretrained networks, when the server does not say.
  double default_lr() const override { return hello_.value("default_lr", 1e-5); }
  double default_encoder_lr() const override { return hello_.value("default_encoder_lr", default_lr()); }

 private:
  std::shared_ptr<Channel> channel_;
  nlohmann::json hello_;
};

// "toy", "external:<command>", or "external" (command from FEWSHOT_BACKEND_CMD).
inline std::unique_ptr<Backend> make_backend(const std::string& spec, const ToyConfig& toy = {}) {
  if (spec == "toy") return std::make_unique<ToyBackend>(toy);
  if (spec == "external" || spec.rfind("external:", 0) == 0) {
    std::string command = spec.size() > 9 ? spec.substr(9) : std::string();
    if (command.empty()) {
      const char* env = std::getenv(kBackendCommandEnv);
      if (!env || !*env) {
        throw ConfigError(std::string("backend 'external' needs a command or ") + kBackendCommandEnv);
      }
      command = env;
    }
    return ExternalBackend::spawn(command);
  }
  throw ConfigError("unknown backend '" + spec + "' (expected toy or external:<command>)");
}

}  // namespace fewshot
