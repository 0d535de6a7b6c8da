#pragma once

#include <chrono>
#include <cstdint>
#include <mutex>
#include <string>

namespace labloop {

using Seconds = std::chrono::sys_seconds;

class Clock {
 public:
  virtual ~Clock() = default;
  virtual Seconds now() = 0;
};

class SystemClock final : public Clock {
 public:
  Seconds now() override;
};

// Returns a fixed instant, advancing by `step` after every read. Tests and
// scripted runs use it so timestamps are reproducible.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(Seconds start, std::chrono::seconds step = std::chrono::seconds{0})
      : current_(start), step_(step) {}
  Seconds now() override;
  void set(Seconds t);
  void advance(std::chrono::seconds d);

 private:
  std::mutex mu_;
  Seconds current_;
  std::chrono::seconds step_;
};

std::string format_iso8601(Seconds t);
Seconds parse_iso8601(const std::string& text);

}  // namespace labloop
