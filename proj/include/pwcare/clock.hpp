#pragma once

#include <atomic>
#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace pwcare {

using Timestamp = std::chrono::sys_seconds;
using Date = std::chrono::year_month_day;

// Strict ISO-8601 UTC: "YYYY-MM-DDTHH:MM:SSZ". A numeric offset
// ("+03:00") is also accepted on input and normalized to UTC.
std::optional<Timestamp> parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp t);

// "YYYY-MM-DD"; rejects impossible calendar dates.
std::optional<Date> parse_date(std::string_view text);
std::string format_date(Date d);

inline Date date_of(Timestamp t) {
  return Date{std::chrono::floor<std::chrono::days>(t)};
}

inline std::chrono::sys_days days_of(Date d) { return std::chrono::sys_days{d}; }

class Clock {
 public:
  virtual ~Clock() = default;
  virtual Timestamp now() const = 0;
};

class SystemClock final : public Clock {
 public:
  Timestamp now() const override {
    return std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
  }
};

// Test clock; thread-safe so handlers may read it while a test advances it.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(Timestamp start) : now_(start.time_since_epoch().count()) {}

  Timestamp now() const override { return Timestamp{std::chrono::seconds{now_.load()}}; }
  void set(Timestamp t) { now_.store(t.time_since_epoch().count()); }
  void advance(std::chrono::seconds by) { now_.fetch_add(by.count()); }

 private:
  std::atomic<std::int64_t> now_;
};

}  // namespace pwcare
