#pragma once

#include <array>
#include <chrono>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pwcare/event_log.hpp"
#include "pwcare/protocol.hpp"
#include "pwcare/registry.hpp"

namespace pwcare::dispatch {

struct Options {
  std::chrono::seconds dedup_window{120};
};

// The control-panel row: patient name, both timestamps, coordinates,
// hospital name and state, plus ids the console needs to act.
struct RequestView {
  std::string request_id;
  std::string patient_id;
  std::string patient_name;
  Timestamp request_time;
  Timestamp received_time;
  double lat = 0;
  double lon = 0;
  std::string hospital_id;
  std::string hospital_name;
  RequestState state = RequestState::Received;
  std::string unit_id;
};

// Legal edges: received→located→dispatched→complete, and →cancelled from
// any non-terminal state.
bool is_legal_transition(RequestState from, RequestState to) noexcept;

class Dispatcher {
 public:
  Dispatcher(registry::Registry& registry, const protocol::TemplateCatalog& templates,
             Outbox* outbox = nullptr, EventLog* events = nullptr, Options options = {});

  // HELP → persisted request, located at the nearest hospital, fan-out
  // queued. Retries of the same (patient_id, client_ts) within the dedup
  // window return the original request without a second fan-out.
  // Throws UnknownPatient (after queueing a registration prompt to the
  // sender) or EmptyCandidateSet (request stays parked in received).
  HelpRequest ingest_help(const protocol::InboundMessage& msg);

  HelpRequest assign_unit(std::string_view request_id, std::string_view unit_id,
                          std::string_view actor);
  HelpRequest complete_request(std::string_view request_id, std::string_view actor);
  HelpRequest cancel_request(std::string_view request_id, std::string_view actor);

  // Newest received_time first; an empty filter means every state.
  std::vector<RequestView> list_requests(const std::set<RequestState>& states = {},
                                         std::optional<Timestamp> since = std::nullopt) const;
  RequestView view(std::string_view request_id) const;

  // Queues one notification per target of a located request: hospital,
  // each doctor of that hospital, husband (when known), patient ack.
  std::vector<protocol::OutboundNotification> fan_out(const HelpRequest& request);

  // Locates requests parked in received (e.g. after a crash or before any
  // hospital was seeded). Returns how many moved to located.
  std::size_t recover();

  const Options& options() const noexcept { return options_; }

 private:
  std::vector<NotificationRecord> build_fan_out(const HelpRequest& request,
                                                const PatientRecord& patient);
  HelpRequest locate(HelpRequest request, const PatientRecord& patient);
  HelpRequest transition(std::string_view request_id, RequestState to, std::string_view actor,
                         std::string_view unit_id);
  void deliver(const std::vector<NotificationRecord>& rows);
  Timestamp stamp(const HelpRequest& request) const;
  std::mutex& request_lock(std::string_view request_id) const;
  RequestView make_view(const HelpRequest& r) const;

  registry::Registry& registry_;
  const protocol::TemplateCatalog& templates_;
  Outbox* outbox_;
  EventLog* events_;
  EventLog null_events_;
  Options options_;

  static constexpr std::size_t kStripes = 64;
  mutable std::array<std::mutex, kStripes> ingest_stripes_;
  mutable std::array<std::mutex, kStripes> request_stripes_;

  std::mutex dedup_mu_;
  std::map<std::pair<std::string, std::int64_t>, std::string> dedup_;  // (patient, client_ts) → request
};

}  // namespace pwcare::dispatch
