#include "labloop/common/clock.hpp"

#include <ctime>
#include <iomanip>
#include <sstream>

#include <fmt/format.h>

#include "labloop/common/error.hpp"

namespace labloop {

Seconds SystemClock::now() {
  return std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
}

Seconds ManualClock::now() {
  std::lock_guard lock(mu_);
  Seconds t = current_;
  current_ += step_;
  return t;
}

void ManualClock::set(Seconds t) {
  std::lock_guard lock(mu_);
  current_ = t;
}

void ManualClock::advance(std::chrono::seconds d) {
  std::lock_guard lock(mu_);
  current_ += d;
}

std::string format_iso8601(Seconds t) {
  std::time_t raw = std::chrono::system_clock::to_time_t(t);
  std::tm utc{};
  gmtime_r(&raw, &utc);
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z", utc.tm_year + 1900, utc.tm_mon + 1,
                     utc.tm_mday, utc.tm_hour, utc.tm_min, utc.tm_sec);
}

Seconds parse_iso8601(const std::string& text) {
  std::tm utc{};
  std::istringstream in(text);
  in >> std::get_time(&utc, "%Y-%m-%dT%H:%M:%S");
  if (in.fail()) throw ConfigError("bad timestamp: " + text);
  return Seconds{std::chrono::seconds{timegm(&utc)}};
}

}  // namespace labloop
