#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "diffattack/error.hpp"
#include "diffattack/model.hpp"
#include "diffattack/oracle.hpp"
#include "httplib.h"
#include "json.hpp"

namespace diffattack {

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds backoff{100};
};

inline constexpr const char* kHttpTimeoutEnv = "DIFFATTACK_HTTP_TIMEOUT_MS";

inline std::chrono::milliseconds http_timeout_from_env(
    std::chrono::milliseconds fallback = std::chrono::milliseconds{5000}) {
  if (const char* raw = std::getenv(kHttpTimeoutEnv)) {
    char* end = nullptr;
    const long long v = std::strtoll(raw, &end, 10);
    if (end != raw && *end == '\0' && v > 0) return std::chrono::milliseconds{v};
  }
  return fallback;
}

inline bool is_remote_endpoint(const std::string& s) {
  return s.rfind("http://", 0) == 0 || s.rfind("https://", 0) == 0;
}

namespace detail {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // "" or "/prefix"
};

inline Endpoint split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint '" + url + "' has no scheme");
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint e;
  if (path_start == std::string::npos) {
    e.origin = url;
  } else {
    e.origin = url.substr(0, path_start);
    e.path = url.substr(path_start);
    while (!e.path.empty() && e.path.back() == '/') e.path.pop_back();
  }
  return e;
}

}  // namespace detail

// Oracle behind the JSON-over-HTTP predict protocol.
//
//   POST <endpoint>/predict  {"input": [...], "shape": [...]}
//   200 -> {"task", "top_label", "top_prob"?, "distribution"?, "value"?}
//
// Connection failures, timeouts and 5xx answers are retried per RetryPolicy
// and end in TransportError. Any other non-200 status or a malformed body is a
// ProtocolError and is not retried.
class RemoteOracle final : public Oracle {
 public:
  RemoteOracle(std::string id, std::string endpoint, TaskKind task, AccessLevel access,
               Shape input_shape, std::chrono::milliseconds timeout = http_timeout_from_env(),
               RetryPolicy retry = {})
      : Oracle(std::move(id), task, access, std::move(input_shape)),
        endpoint_(std::move(endpoint)),
        split_(detail::split_endpoint(endpoint_)),
        timeout_(timeout),
        retry_(retry) {
    if (retry_.attempts < 1) throw ConfigError("retry attempts must be >= 1");
  }

  std::unique_ptr<Oracle> clone() const override {
    return std::make_unique<RemoteOracle>(id(), endpoint_, task(), access_level(), input_shape(),
                                          timeout_, retry_);
  }

  const std::string& endpoint() const noexcept { return endpoint_; }

 protected:
  Prediction evaluate(const InputTensor& x) override {
    const nlohmann::json body = {
        {"input", std::vector<double>(x.values().begin(), x.values().end())},
        {"shape", x.shape().dims()}};
    const std::string payload = body.dump();
    const std::string path = split_.path + "/predict";

    std::string last_failure;
    for (int attempt = 1; attempt <= retry_.attempts; ++attempt) {
      if (attempt > 1) std::this_thread::sleep_for(retry_.backoff);
      httplib::Client client(split_.origin);
      const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
      const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
      client.set_connection_timeout(secs.count(), usecs.count());
      client.set_read_timeout(secs.count(), usecs.count());
      client.set_write_timeout(secs.count(), usecs.count());

      auto res = client.Post(path, payload, "application/json");
      if (!res) {
        last_failure = "request to " + endpoint_ + " failed: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 500) {
        last_failure = endpoint_ + " answered HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) {
        throw ProtocolError(endpoint_ + " answered HTTP " + std::to_string(res->status));
      }
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(endpoint_ + " returned invalid JSON: " + e.what());
      }
      Prediction p = prediction_from_json(j);
      require_access(p);
      return p;
    }
    throw TransportError(last_failure, retry_.attempts);
  }

 private:
  void require_access(const Prediction& p) const {
    if (p.task != TaskKind::kClassification) return;
    if (access_level() == AccessLevel::kFullDistribution && !p.distribution) {
      throw ProtocolError(endpoint_ + " omitted the distribution required for full access");
    }
    if (access_level() == AccessLevel::kTop1 && !p.top_prob && !p.distribution) {
      throw ProtocolError(endpoint_ + " omitted top_prob required for top-1 access");
    }
  }

  std::string endpoint_;
  detail::Endpoint split_;
  std::chrono::milliseconds timeout_;
  RetryPolicy retry_;
};

// Minimal in-process server speaking the predict protocol for a local model.
// Always answers with the full distribution; the client side truncates.
// fail_next(n) makes the next n requests answer HTTP 500.
class StubServer {
 public:
  explicit StubServer(Model model) : model_(std::move(model)) {
    model_.validate();
    server_.Post("/predict", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res);
    });
  }

  ~StubServer() { stop(); }

  StubServer(const StubServer&) = delete;
  StubServer& operator=(const StubServer&) = delete;

  // Binds to host:port (port 0 picks a free port) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    if (port == 0) {
      port_ = server_.bind_to_any_port(host);
    } else {
      port_ = server_.bind_to_port(host, port) ? port : -1;
    }
    if (port_ < 0) throw IoError("stub server cannot bind " + host);
    host_ = host;
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  // Serves on the calling thread until stop() is called from elsewhere.
  void listen(const std::string& host, int port) {
    host_ = host;
    port_ = port;
    if (!server_.listen(host, port)) throw IoError("stub server cannot listen on " + host);
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  std::string url() const { return "http://" + host_ + ":" + std::to_string(port_); }
  int port() const noexcept { return port_; }

  void fail_next(int n) { fail_remaining_.store(n); }
  int request_count() const noexcept { return requests_.load(); }

 private:
  void handle(const httplib::Request& req, httplib::Response& res) {
    ++requests_;
    if (fail_remaining_.load() > 0) {
      --fail_remaining_;
      res.status = 500;
      res.set_content(R"({"error":"injected failure"})", "application/json");
      return;
    }
    try {
      const auto body = nlohmann::json::parse(req.body);
      const auto input = body.at("input").get<std::vector<double>>();
      if (body.contains("shape")) {
        const Shape shape(body["shape"].get<std::vector<std::size_t>>());
        if (shape.element_count() != input.size()) throw ShapeError("shape/input length mismatch");
      }
      if (input.size() != model_.input_shape.element_count()) {
        throw ShapeError("expected " + std::to_string(model_.input_shape.element_count()) +
                         " inputs");
      }
      const Prediction p = prediction_from_output(model_.task, model_.run(input));
      res.status = 200;
      res.set_content(prediction_to_json(p).dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
    }
  }

  Model model_;
  httplib::Server server_;
  std::thread thread_;
  std::string host_ = "127.0.0.1";
  int port_ = -1;
  std::atomic<int> fail_remaining_{0};
  std::atomic<int> requests_{0};
};

}  // namespace diffattack
