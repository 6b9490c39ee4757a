#pragma once

#include <deque>
#include <iosfwd>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pwcare/clock.hpp"

namespace pwcare {

// Machine-parseable event stream: one JSON object per line,
// {"ts":...,"event":...,<fields>}. Keeps the most recent lines in memory
// so tests and /stats can inspect alerts.
class EventLog {
 public:
  explicit EventLog(std::ostream* out = nullptr, const Clock* clock = nullptr,
                    std::size_t keep = 512);

  void emit(std::string_view event, nlohmann::ordered_json fields = nlohmann::ordered_json::object());

  std::vector<std::string> recent() const;
  std::size_t count(std::string_view event) const;
  std::vector<std::pair<std::string, std::size_t>> counts() const;

 private:
  std::ostream* out_;
  const Clock* clock_;
  SystemClock system_clock_;
  std::size_t keep_;
  mutable std::mutex mu_;
  std::deque<std::string> recent_;
  std::vector<std::pair<std::string, std::size_t>> counts_;
};

// Receives ids of freshly committed (queued) notification rows. The
// service's delivery pool implements it; a null outbox leaves rows queued
// for the next restart to re-drive.
class Outbox {
 public:
  virtual ~Outbox() = default;
  virtual void enqueue(const std::vector<std::string>& notification_ids) = 0;
};

}  // namespace pwcare
