#include "labloop/net/transport.hpp"

#include <cctype>
#include <thread>

#include <fmt/format.h>

#include <httplib.h>

#include "labloop/common/error.hpp"

namespace labloop::net {

Url Url::parse(const std::string& url) {
  Url u;
  auto sep = url.find("://");
  if (sep == std::string::npos) throw ConfigError("not an absolute URL: " + url);
  u.scheme = url.substr(0, sep);
  auto rest = url.substr(sep + 3);
  auto slash = rest.find('/');
  std::string authority = slash == std::string::npos ? rest : rest.substr(0, slash);
  u.path = slash == std::string::npos ? "/" : rest.substr(slash);
  auto colon = authority.rfind(':');
  if (colon != std::string::npos) {
    u.host = authority.substr(0, colon);
    u.port = std::stoi(authority.substr(colon + 1));
  } else {
    u.host = authority;
    u.port = u.scheme == "https" ? 443 : 80;
  }
  if (u.host.empty()) throw ConfigError("URL has no host: " + url);
  return u;
}

std::string Url::origin() const { return fmt::format("{}://{}:{}", scheme, host, port); }

std::string url_encode(const std::string& s) {
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out += fmt::format("%{:02X}", c);
    }
  }
  return out;
}

HttpTransport::HttpTransport(std::chrono::milliseconds min_interval_per_host, std::chrono::seconds timeout)
    : min_interval_(min_interval_per_host), timeout_(timeout) {}

void HttpTransport::throttle(const std::string& host) {
  if (min_interval_.count() <= 0) return;
  std::chrono::steady_clock::time_point wait_until;
  {
    std::lock_guard lock(mu_);
    auto now = std::chrono::steady_clock::now();
    auto& last = last_call_[host];
    wait_until = std::max(now, last + min_interval_);
    last = wait_until;
  }
  std::this_thread::sleep_until(wait_until);
}

HttpResponse HttpTransport::send(const HttpRequest& request) {
  const Url url = Url::parse(request.url);
  throttle(url.host);
#ifndef LABLOOP_WITH_OPENSSL
  if (url.scheme == "https") throw TransportError("https not available in this build: " + request.url);
#endif
  httplib::Client client(url.origin());
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_follow_location(true);
  httplib::Headers headers(request.headers.begin(), request.headers.end());
  httplib::Result res{nullptr, httplib::Error::Unknown};
  if (request.method == "GET") {
    res = client.Get(url.path, headers);
  } else if (request.method == "POST") {
    auto type_it = request.headers.find("Content-Type");
    std::string type = type_it == request.headers.end() ? "application/json" : type_it->second;
    res = client.Post(url.path, headers, request.body, type);
  } else {
    throw ConfigError("unsupported method " + request.method);
  }
  if (!res) {
    throw TransportError(fmt::format("{} {} failed: {}", request.method, request.url, httplib::to_string(res.error())));
  }
  return {res->status, res->body};
}

FixtureTransport::FixtureTransport(const Json& fixtures) {
  for (const auto& [key, value] : fixtures.items()) {
    auto space = key.find(' ');
    if (space == std::string::npos) throw ConfigError("fixture key must be 'METHOD url': " + key);
    std::string body = value.contains("body")
                           ? (value["body"].is_string() ? value["body"].get<std::string>() : value["body"].dump())
                           : std::string{};
    add(key.substr(0, space), key.substr(space + 1), value.value("status", 200), std::move(body));
  }
}

void FixtureTransport::add(const std::string& method, const std::string& url, int status, std::string body) {
  std::lock_guard lock(mu_);
  responses_[method + " " + url] = {status, std::move(body)};
}

void FixtureTransport::set_host_down(const std::string& host, bool down) {
  std::lock_guard lock(mu_);
  down_hosts_[host] = down;
}

HttpResponse FixtureTransport::send(const HttpRequest& request) {
  std::lock_guard lock(mu_);
  calls_.push_back(request);
  const Url url = Url::parse(request.url);
  if (auto it = down_hosts_.find(url.host); it != down_hosts_.end() && it->second) {
    throw TransportError("connection refused: " + url.host);
  }
  auto it = responses_.find(request.method + " " + request.url);
  if (it == responses_.end()) return {404, ""};
  return it->second;
}

std::vector<HttpRequest> FixtureTransport::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::size_t FixtureTransport::call_count() const {
  std::lock_guard lock(mu_);
  return calls_.size();
}

}  // namespace labloop::net
