#pragma once

#include <chrono>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "labloop/common/json.hpp"

namespace labloop::net {

struct HttpRequest {
  std::string method = "GET";
  std::string url;
  std::map<std::string, std::string> headers;
  std::string body;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Sends one request. Connection-level failures throw TransportError; HTTP
/// error statuses are returned to the caller.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse send(const HttpRequest& request) = 0;
};

struct Url {
  std::string scheme;
  std::string host;
  int port = 0;
  std::string path;  // includes query

  static Url parse(const std::string& url);
  std::string origin() const;
};

std::string url_encode(const std::string& s);

/// cpp-httplib backed transport with a per-host minimum request interval.
class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(std::chrono::milliseconds min_interval_per_host = std::chrono::milliseconds{0},
                         std::chrono::seconds timeout = std::chrono::seconds{30});
  HttpResponse send(const HttpRequest& request) override;

 private:
  void throttle(const std::string& host);

  std::chrono::milliseconds min_interval_;
  std::chrono::seconds timeout_;
  std::mutex mu_;
  std::map<std::string, std::chrono::steady_clock::time_point> last_call_;
};

/// Serves recorded responses keyed by "METHOD url". Unknown URLs get 404, or
/// a TransportError when the host is listed as down. Every call is logged.
class FixtureTransport final : public Transport {
 public:
  FixtureTransport() = default;
  /// {"GET https://...": {"status": 200, "body": ...}, ...}; a non-string body is dumped.
  explicit FixtureTransport(const Json& fixtures);

  void add(const std::string& method, const std::string& url, int status, std::string body);
  void set_host_down(const std::string& host, bool down = true);

  HttpResponse send(const HttpRequest& request) override;

  std::vector<HttpRequest> calls() const;
  std::size_t call_count() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, HttpResponse> responses_;
  std::map<std::string, bool> down_hosts_;
  std::vector<HttpRequest> calls_;
};

}  // namespace labloop::net
