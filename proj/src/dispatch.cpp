#include "pwcare/dispatch.hpp"

#include <algorithm>
#include <functional>

namespace pwcare::dispatch {

using registry::Batch;

namespace {

std::size_t stripe_of(std::string_view key, std::size_t n) { return std::hash<std::string_view>{}(key) % n; }

nlohmann::ordered_json request_fields(const HelpRequest& r) {
  return {{"request_id", r.request_id}, {"patient_id", r.patient_id},
          {"state", to_string(r.state)}};
}

}  // namespace

bool is_legal_transition(RequestState from, RequestState to) noexcept {
  switch (from) {
    case RequestState::Received:
      return to == RequestState::Located || to == RequestState::Cancelled;
    case RequestState::Located:
      return to == RequestState::Dispatched || to == RequestState::Cancelled;
    case RequestState::Dispatched:
      return to == RequestState::Complete || to == RequestState::Cancelled;
    case RequestState::Complete:
    case RequestState::Cancelled:
      return false;
  }
  return false;
}

Dispatcher::Dispatcher(registry::Registry& registry, const protocol::TemplateCatalog& templates,
                       Outbox* outbox, EventLog* events, Options options)
    : registry_(registry),
      templates_(templates),
      outbox_(outbox),
      events_(events ? events : &null_events_),
      options_(options) {
  for (const auto& r : registry_.requests()) {
    dedup_[{r.patient_id, r.client_ts.time_since_epoch().count()}] = r.request_id;
  }
}

std::mutex& Dispatcher::request_lock(std::string_view request_id) const {
  return request_stripes_[stripe_of(request_id, kStripes)];
}

Timestamp Dispatcher::stamp(const HelpRequest& request) const {
  const Timestamp now = registry_.clock().now();
  return request.history.empty() ? now : std::max(now, request.history.back().at);
}

void Dispatcher::deliver(const std::vector<NotificationRecord>& rows) {
  if (outbox_ == nullptr || rows.empty()) return;
  std::vector<std::string> ids;
  ids.reserve(rows.size());
  for (const auto& n : rows) ids.push_back(n.notification_id);
  outbox_->enqueue(ids);
}

HelpRequest Dispatcher::ingest_help(const protocol::InboundMessage& msg) {
  const auto* help = std::get_if<protocol::HelpPayload>(&msg.body);
  if (help == nullptr) throw Error(ErrorCode::BadRequest, "not a HELP message");

  std::lock_guard ingest_lock(ingest_stripes_[stripe_of(help->patient_id, kStripes)]);

  const auto patient = registry_.patient(help->patient_id);
  if (!patient || !patient->active) {
    events_->emit("help.unknown_patient",
                  {{"patient_id", help->patient_id}, {"sender", msg.sender_phone}});
    try {
      auto prompt = templates_.render(msg.sender_phone, "registration_prompt",
                                      protocol::Language::En, {{"patient_id", help->patient_id}});
      auto row = registry_.append_notification(
          {prompt.recipient_phone, prompt.template_id, prompt.language, prompt.rendered,
           help->patient_id});
      deliver({row});
    } catch (const Error& e) {
      events_->emit("notify.render_failed", {{"template", "registration_prompt"}, {"error", e.what()}});
    }
    throw Error(ErrorCode::UnknownPatient, "patient " + help->patient_id + " is not registered");
  }

  const Timestamp now = msg.received_at;
  const auto key = std::make_pair(help->patient_id, help->client_ts.time_since_epoch().count());
  {
    std::lock_guard lock(dedup_mu_);
    if (auto it = dedup_.find(key); it != dedup_.end()) {
      if (auto prior = registry_.request(it->second)) {
        const auto gap = now > prior->received_time ? now - prior->received_time
                                                    : prior->received_time - now;
        if (gap <= options_.dedup_window) {
          events_->emit("help.duplicate", request_fields(*prior));
          return *prior;
        }
      }
    }
  }

  HelpRequest request;
  request.request_id = registry_.next_id(registry::TableId::HelpRequests);
  request.patient_id = help->patient_id;
  request.location = help->location;
  request.client_ts = help->client_ts;
  request.received_time = now;
  request.request_time = std::min(help->client_ts, now);
  request.state = RequestState::Received;
  std::string note = "client_ts=" + format_timestamp(help->client_ts);
  if (help->client_ts > now) note += " clamped";
  request.history.push_back({RequestState::Received, now, "server", note});

  std::lock_guard request_guard(request_lock(request.request_id));
  registry_.put_request(request);
  {
    std::lock_guard lock(dedup_mu_);
    dedup_[key] = request.request_id;
  }
  events_->emit("help.received", request_fields(request));
  return locate(std::move(request), *patient);
}

HelpRequest Dispatcher::locate(HelpRequest request, const PatientRecord& patient) {
  geo::Nearest nearest;
  try {
    const auto candidates = registry_.facility_candidates();
    nearest = geo::nearest_facility(request.location, candidates, geo::FacilityKind::Hospital);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmptyCandidateSet) throw;
    events_->emit("alert.no_hospital", request_fields(request));
    throw Error(ErrorCode::EmptyCandidateSet,
                "no hospital registered; request " + request.request_id + " parked in received");
  }

  request.state = RequestState::Located;
  request.hospital_id = nearest.id;
  request.history.push_back({RequestState::Located, stamp(request), "server",
                             "distance_km=" + protocol::format_degrees(nearest.distance.value)});

  const auto rows = build_fan_out(request, patient);
  Batch batch;
  batch.put(request);
  for (const auto& n : rows) batch.put(n);
  registry_.commit(batch);

  auto fields = request_fields(request);
  fields["hospital_id"] = request.hospital_id;
  fields["distance_km"] = nearest.distance.value;
  fields["notifications"] = rows.size();
  events_->emit("help.located", std::move(fields));
  deliver(rows);
  return request;
}

std::vector<NotificationRecord> Dispatcher::build_fan_out(const HelpRequest& request,
                                                          const PatientRecord& patient) {
  const auto hospital = registry_.facility(request.hospital_id);
  if (!hospital) throw Error(ErrorCode::Internal, "located request without hospital row");

  protocol::Bindings b{{"request_id", request.request_id},
                       {"patient_id", patient.patient_id},
                       {"name", patient.name},
                       {"lat", protocol::format_degrees(request.location.lat())},
                       {"lon", protocol::format_degrees(request.location.lon())},
                       {"hospital", hospital->name}};

  std::vector<protocol::OutboundNotification> out;
  out.push_back(templates_.render(hospital->contact_phone, "notify_hospital", protocol::Language::En, b));
  for (const auto& doctor : registry_.doctors_of(hospital->facility_id)) {
    b.insert_or_assign("doctor", doctor.username);
    out.push_back(templates_.render(doctor.phone, "notify_doctor", protocol::Language::En, b));
  }
  if (!patient.husband_phone.empty()) {
    out.push_back(templates_.render(patient.husband_phone, "notify_husband", patient.language, b));
  }
  out.push_back(templates_.render(patient.phone, "help_ack", patient.language, b));

  std::vector<NotificationRecord> rows;
  rows.reserve(out.size());
  for (auto& n : out) {
    rows.push_back(registry_.make_notification(
        {n.recipient_phone, n.template_id, n.language, n.rendered, request.request_id}));
  }
  return rows;
}

std::vector<protocol::OutboundNotification> Dispatcher::fan_out(const HelpRequest& request) {
  if (request.state != RequestState::Located) {
    throw Error(ErrorCode::IllegalTransition, "fan-out requires a located request");
  }
  const auto patient = registry_.find_patient_by_id(request.patient_id);
  const auto rows = build_fan_out(request, patient);
  Batch batch;
  for (const auto& n : rows) batch.put(n);
  registry_.commit(batch);
  deliver(rows);

  std::vector<protocol::OutboundNotification> out;
  for (const auto& n : rows) out.push_back({n.recipient_phone, n.template_id, n.language, n.payload});
  return out;
}

HelpRequest Dispatcher::transition(std::string_view request_id, RequestState to,
                                   std::string_view actor, std::string_view unit_id) {
  std::lock_guard guard(request_lock(request_id));
  auto current = registry_.request(request_id);
  if (!current) throw Error(ErrorCode::NotFound, "no request " + std::string(request_id));
  if (!is_legal_transition(current->state, to)) {
    throw Error(ErrorCode::IllegalTransition, "request " + current->request_id + " is " +
                                                  std::string(to_string(current->state)) +
                                                  ", cannot become " + std::string(to_string(to)));
  }

  HelpRequest next = *current;
  next.state = to;
  Batch batch;
  if (to == RequestState::Dispatched) {
    auto unit = registry_.unit(unit_id);
    if (!unit) throw Error(ErrorCode::NotFound, "no unit " + std::string(unit_id));
    next.unit_id = unit->unit_id;
    unit->status = UnitStatus::Dispatched;
    batch.put(*unit).require([this, id = unit->unit_id] {
      if (registry_.unit(id)->status != UnitStatus::Available) {
        throw Error(ErrorCode::UnitUnavailable, "unit " + id + " is not available");
      }
    });
  } else if (!current->unit_id.empty() && current->state == RequestState::Dispatched) {
    // Completing or cancelling a dispatched request frees its unit.
    auto unit = registry_.unit(current->unit_id);
    unit->status = UnitStatus::Available;
    batch.put(*unit);
  }
  next.history.push_back({to, stamp(*current), std::string(actor), ""});
  batch.put(next);
  registry_.commit(batch);

  auto fields = request_fields(next);
  fields["actor"] = actor;
  if (!next.unit_id.empty()) fields["unit_id"] = next.unit_id;
  events_->emit("request.transition", std::move(fields));
  return next;
}

HelpRequest Dispatcher::assign_unit(std::string_view request_id, std::string_view unit_id,
                                    std::string_view actor) {
  return transition(request_id, RequestState::Dispatched, actor, unit_id);
}

HelpRequest Dispatcher::complete_request(std::string_view request_id, std::string_view actor) {
  return transition(request_id, RequestState::Complete, actor, {});
}

HelpRequest Dispatcher::cancel_request(std::string_view request_id, std::string_view actor) {
  return transition(request_id, RequestState::Cancelled, actor, {});
}

RequestView Dispatcher::make_view(const HelpRequest& r) const {
  RequestView v{r.request_id, r.patient_id, "", r.request_time, r.received_time,
                r.location.lat(), r.location.lon(), r.hospital_id, "", r.state, r.unit_id};
  if (auto p = registry_.patient(r.patient_id)) v.patient_name = p->name;
  if (!r.hospital_id.empty()) {
    if (auto h = registry_.facility(r.hospital_id)) v.hospital_name = h->name;
  }
  return v;
}

std::vector<RequestView> Dispatcher::list_requests(const std::set<RequestState>& states,
                                                   std::optional<Timestamp> since) const {
  std::vector<HelpRequest> rows = registry_.requests();
  std::erase_if(rows, [&](const HelpRequest& r) {
    return (!states.empty() && !states.contains(r.state)) || (since && r.received_time < *since);
  });
  std::sort(rows.begin(), rows.end(), [](const HelpRequest& a, const HelpRequest& b) {
    if (a.received_time != b.received_time) return a.received_time > b.received_time;
    return a.request_id > b.request_id;
  });
  std::vector<RequestView> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(make_view(r));
  return out;
}

RequestView Dispatcher::view(std::string_view request_id) const {
  auto r = registry_.request(request_id);
  if (!r) throw Error(ErrorCode::NotFound, "no request " + std::string(request_id));
  return make_view(*r);
}

std::size_t Dispatcher::recover() {
  std::size_t moved = 0;
  for (const auto& r : registry_.requests()) {
    if (r.state != RequestState::Received) continue;
    std::lock_guard guard(request_lock(r.request_id));
    auto current = registry_.request(r.request_id);
    if (!current || current->state != RequestState::Received) continue;
    auto patient = registry_.patient(current->patient_id);
    if (!patient) continue;
    try {
      locate(*current, *patient);
      ++moved;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EmptyCandidateSet) throw;
      break;
    }
  }
  return moved;
}

}  // namespace pwcare::dispatch
