#include "pwcare/event_log.hpp"

#include <ostream>

namespace pwcare {

EventLog::EventLog(std::ostream* out, const Clock* clock, std::size_t keep)
    : out_(out), clock_(clock ? clock : &system_clock_), keep_(keep) {}

void EventLog::emit(std::string_view event, nlohmann::ordered_json fields) {
  nlohmann::ordered_json line{{"ts", format_timestamp(clock_->now())}, {"event", event}};
  for (auto& [key, value] : fields.items()) line[key] = value;
  std::string text = line.dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace);

  std::lock_guard lock(mu_);
  if (out_ != nullptr) *out_ << text << '\n' << std::flush;
  recent_.push_back(std::move(text));
  if (recent_.size() > keep_) recent_.pop_front();
  for (auto& [name, n] : counts_) {
    if (name == event) {
      ++n;
      return;
    }
  }
  counts_.emplace_back(std::string(event), 1);
}

std::vector<std::string> EventLog::recent() const {
  std::lock_guard lock(mu_);
  return {recent_.begin(), recent_.end()};
}

std::size_t EventLog::count(std::string_view event) const {
  std::lock_guard lock(mu_);
  for (const auto& [name, n] : counts_) {
    if (name == event) return n;
  }
  return 0;
}

std::vector<std::pair<std::string, std::size_t>> EventLog::counts() const {
  std::lock_guard lock(mu_);
  return counts_;
}

}  // namespace pwcare
