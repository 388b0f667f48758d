#pragma once

// HTTP transport for the adapter protocol: a client backend that POSTs one
// JSON request per call to `/v1/adapter`, and a mock server exposing any
// Backend over the same endpoint.
//
// Status mapping: 200 carries an AdapterResponse; 400 means the request broke
// the wire contract (fatal); 502 carries a backend-reported failure. Transport
// failures are retried with exponential backoff, nothing else is.

#include <atomic>
#include <chrono>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "fastvis/adapter.hpp"
#include "fastvis/log.hpp"

namespace fastvis {

inline constexpr const char* kAdapterPath = "/v1/adapter";

struct RemoteOptions {
  std::chrono::milliseconds timeout{30'000};
  int retries = 2;
  std::chrono::milliseconds backoff{100};
};

inline std::string error_body(std::string_view message) {
  return Json{{"error", message}}.dump();
}

class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(std::string endpoint, RemoteOptions opts = {})
      : base_(normalize_endpoint(std::move(endpoint))), opts_(opts) {
    if (opts_.retries < 0) throw ConfigError("remote: retries must be >= 0");
  }

  const std::string& endpoint() const { return base_; }

  AdapterResponse call(const AdapterRequest& req) override {
    const std::string body = encode(req).dump();
    std::string last_error;
    for (int attempt = 0; attempt <= opts_.retries; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(opts_.backoff * (1 << (attempt - 1)));
      httplib::Client client(base_);
      const auto secs = std::chrono::duration_cast<std::chrono::seconds>(opts_.timeout);
      const auto usecs =
          std::chrono::duration_cast<std::chrono::microseconds>(opts_.timeout - secs);
      client.set_connection_timeout(secs.count(), usecs.count());
      client.set_read_timeout(secs.count(), usecs.count());
      client.set_write_timeout(secs.count(), usecs.count());
      auto res = client.Post(kAdapterPath, body, "application/json");
      if (!res) {
        last_error = httplib::to_string(res.error());
        logger().debug("remote: attempt {} to {} failed: {}", attempt + 1, base_, last_error);
        continue;
      }
      return interpret(*res);
    }
    throw TransportError(fmt::format("remote: {} unreachable after {} attempts: {}", base_,
                                     opts_.retries + 1, last_error));
  }

 private:
  static std::string normalize_endpoint(std::string endpoint) {
    if (endpoint.empty()) throw ConfigError("remote: empty endpoint");
    if (endpoint.find("://") == std::string::npos) endpoint = "http://" + endpoint;
    while (!endpoint.empty() && endpoint.back() == '/') endpoint.pop_back();
    return endpoint;
  }

  static std::string error_message(const httplib::Response& res) {
    try {
      const Json j = Json::parse(res.body);
      if (j.is_object() && j.contains("error") && j["error"].is_string()) {
        return j["error"].get<std::string>();
      }
    } catch (const Json::exception&) {
    }
    return res.body;
  }

  static AdapterResponse interpret(const httplib::Response& res) {
    if (res.status == 400) {
      throw ProtocolError("remote: request rejected: " + error_message(res));
    }
    if (res.status != 200) {
      throw AdapterError(fmt::format("remote: backend failure ({}): {}", res.status, error_message(res)));
    }
    try {
      return decode_response(detail::parse_json(res.body, "response"));
    } catch (const ParseError& e) {
      throw ProtocolError(std::string("remote: malformed response: ") + e.what());
    }
  }

  std::string base_;
  RemoteOptions opts_;
};

/// Serves a Backend over the adapter wire protocol. One JSON line per request
/// is written to `request_log` when given.
class MockServer {
 public:
  explicit MockServer(Backend& backend, std::ostream* request_log = nullptr)
      : backend_(backend), log_(request_log) {
    server_.Post(kAdapterPath, [this](const httplib::Request& in, httplib::Response& out) {
      handle(in, out);
    });
  }

  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  ~MockServer() { stop(); }

  /// Binds to host:port (port 0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port) {
    if (port == 0) {
      port_ = server_.bind_to_any_port(host);
    } else if (server_.bind_to_port(host, port)) {
      port_ = port;
    } else {
      port_ = -1;
    }
    if (port_ < 0) throw TransportError(fmt::format("mock server: cannot bind {}:{}", host, port));
    return port_;
  }

  int port() const { return port_; }

  /// Serves on a background thread until stop().
  void start() {
    started_ = true;
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  /// Serves on the calling thread until stop() is called from elsewhere.
  void serve() {
    started_ = true;
    server_.listen_after_bind();
  }

  void stop() {
    // httplib only closes a listening socket once it is serving, so a bound
    // but never-started server is started briefly to release its port.
    if (port_ > 0 && !started_) start();
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  void handle(const httplib::Request& in, httplib::Response& out) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string role = "?", query_id = "?";
    try {
      const AdapterRequest req = decode_request(detail::parse_json(in.body, "request"));
      role = to_string(req.role);
      query_id = req.query.query_id();
      const AdapterResponse resp = call_adapter(backend_, req);
      out.status = 200;
      out.set_content(encode(resp).dump(), "application/json");
    } catch (const ParseError& e) {
      out.status = 400;
      out.set_content(error_body(e.what()), "application/json");
    } catch (const ProtocolError& e) {
      out.status = 400;
      out.set_content(error_body(e.what()), "application/json");
    } catch (const std::exception& e) {
      out.status = 502;
      out.set_content(error_body(e.what()), "application/json");
    }
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (log_) {
      const Json line{{"role", role}, {"query_id", query_id}, {"status", out.status}, {"ms", ms}};
      std::lock_guard lock(log_mutex_);
      *log_ << line.dump() << '\n' << std::flush;
    }
  }

  Backend& backend_;
  std::ostream* log_;
  std::mutex log_mutex_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
  std::atomic<bool> started_{false};
};

}  // namespace fastvis
