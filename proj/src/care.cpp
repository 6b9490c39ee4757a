#include "pwcare/care.hpp"

#include <algorithm>
#include <charconv>
#include <functional>

#include "csv.hpp"
#include "embedded_catalogs.hpp"

namespace pwcare::care {

using namespace std::chrono;
using registry::Batch;

int gestation_week(Date lmp, Date today) {
  const auto elapsed = days_of(today) - days_of(lmp);
  if (elapsed.count() < 0) throw Error(ErrorCode::FutureLmp, "lmp date is in the future");
  return static_cast<int>(elapsed.count() / 7);
}

int trimester_of(int week) {
  if (week < 0 || week > kMaxGestationWeek) {
    throw Error(ErrorCode::OutOfPregnancyRange,
                "gestational week " + std::to_string(week) + " is outside 0-44");
  }
  if (week <= 12) return 1;
  if (week <= 27) return 2;
  return 3;
}

Date first_review_date(Date today) {
  sys_days d = days_of(today) + days{2};
  while (true) {
    const unsigned wd = std::chrono::weekday{d}.c_encoding();
    if (wd != 0 && wd != 6) return Date{d};
    d += days{1};
  }
}

namespace {

int parse_int(const std::string& text, const char* what) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw Error(ErrorCode::InvalidField, std::string(what) + " must be an integer");
  }
  return v;
}

}  // namespace

registry::SeedReport load_advice_tsv(registry::Registry& registry, std::string_view tsv) {
  registry::SeedReport report;
  for (const auto& row : detail::read_delimited(tsv, '\t')) {
    try {
      if (row.cells.size() != 5) {
        throw Error(ErrorCode::InvalidField, "expected 5 tab-separated columns");
      }
      AdviceEntry entry;
      entry.trimester = parse_int(row.cells[0], "trimester");
      entry.week_min = parse_int(row.cells[1], "week_min");
      entry.week_max = parse_int(row.cells[2], "week_max");
      auto lang = protocol::language_from(row.cells[3]);
      if (!lang) throw Error(ErrorCode::InvalidField, "language must be en, ku or ar");
      entry.language = *lang;
      entry.text = row.cells[4];
      if (entry.week_min < 0 || entry.week_min > entry.week_max ||
          entry.week_max > kMaxGestationWeek) {
        throw Error(ErrorCode::InvalidField, "week band must satisfy 0 <= min <= max <= 44");
      }
      if (trimester_of(entry.week_min) != entry.trimester ||
          trimester_of(entry.week_max) != entry.trimester) {
        throw Error(ErrorCode::InvalidField, "week band does not match trimester " +
                                                 std::to_string(entry.trimester));
      }
      for (const auto& existing : registry.advice()) {
        if (existing.trimester == entry.trimester && existing.week_min == entry.week_min &&
            existing.week_max == entry.week_max && existing.language == entry.language) {
          entry.advice_id = existing.advice_id;
        }
      }
      if (entry.advice_id.empty()) entry.advice_id = registry.next_id(registry::TableId::AdviceCatalog);
      registry.put_advice(entry);
      ++report.ingested;
    } catch (const Error& e) {
      report.errors.push_back({row.line, e.code(), e.what()});
    }
  }
  return report;
}

registry::SeedReport load_default_advice(registry::Registry& registry) {
  return load_advice_tsv(registry, embedded::kAdviceTsv);
}

Timestamp WeeklySchedule::last_slot(Timestamp now) const {
  const sys_days today = floor<days>(now);
  const unsigned today_wd = std::chrono::weekday{today}.c_encoding();
  const unsigned back = (today_wd + 7 - weekday % 7) % 7;
  Timestamp slot = Timestamp{today - days{back}} + hours{hour};
  if (slot > now) slot -= weeks{1};
  return slot;
}

bool WeeklySchedule::due(Timestamp now, std::optional<Timestamp> last_run) const {
  const Timestamp slot = last_slot(now);
  return !last_run || *last_run < slot;
}

CareDesk::CareDesk(registry::Registry& registry, const protocol::TemplateCatalog& templates,
                   Outbox* outbox, EventLog* events)
    : registry_(registry),
      templates_(templates),
      outbox_(outbox),
      events_(events ? events : &null_events_) {}

std::mutex& CareDesk::patient_lock(std::string_view key) {
  return stripes_[std::hash<std::string_view>{}(key) % stripes_.size()];
}

void CareDesk::commit_and_deliver(Batch& batch, const std::vector<NotificationRecord>& rows) {
  registry_.commit(batch);
  if (outbox_ != nullptr && !rows.empty()) {
    std::vector<std::string> ids;
    for (const auto& n : rows) ids.push_back(n.notification_id);
    outbox_->enqueue(ids);
  }
}

Registration CareDesk::register_patient(const protocol::InboundMessage& msg) {
  const auto* reg = std::get_if<protocol::RegPayload>(&msg.body);
  if (reg == nullptr) throw Error(ErrorCode::BadRequest, "not a REG message");

  std::lock_guard guard(patient_lock(reg->phone));
  const auto candidates = registry_.facility_candidates();
  const geo::Nearest center = [&] {
    try {
      return geo::nearest_facility(reg->home, candidates, geo::FacilityKind::CareCenter);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::EmptyCandidateSet) {
        events_->emit("alert.no_care_center", {{"phone", reg->phone}});
      }
      throw;
    }
  }();

  const std::string husband = msg.sender_phone != reg->phone ? msg.sender_phone : "";
  PatientRecord patient = registry_.create_patient(
      {reg->name, reg->phone, husband, reg->home, reg->lmp, reg->language, center.id});
  const auto facility = registry_.facility(center.id);

  Appointment appointment{registry_.next_id(registry::TableId::Appointments),
                          patient.patient_id,
                          center.id,
                          first_review_date(date_of(registry_.clock().now())),
                          kReviewSlot,
                          AppointmentState::Scheduled,
                          registry_.clock().now()};

  const protocol::Bindings b{{"name", patient.name},
                             {"patient_id", patient.patient_id},
                             {"center", facility->name},
                             {"date", format_date(appointment.date)},
                             {"time", appointment.slot}};
  Registration out{patient, appointment, {}};
  out.notifications.push_back(templates_.render(patient.phone, "registration_ack", patient.language, b));
  out.notifications.push_back(templates_.render(patient.phone, "first_review", patient.language, b));

  Batch batch;
  batch.put(appointment);
  std::vector<NotificationRecord> rows;
  for (const auto& n : out.notifications) {
    rows.push_back(registry_.make_notification(
        {n.recipient_phone, n.template_id, n.language, n.rendered, patient.patient_id}));
    batch.put(rows.back());
  }
  commit_and_deliver(batch, rows);
  events_->emit("patient.registered", {{"patient_id", patient.patient_id},
                                       {"care_center_id", center.id},
                                       {"distance_km", center.distance.value},
                                       {"first_review", format_date(appointment.date)}});
  return out;
}

Appointment CareDesk::reschedule(const protocol::InboundMessage& msg) {
  const auto* chg = std::get_if<protocol::ChgPayload>(&msg.body);
  if (chg == nullptr) throw Error(ErrorCode::BadRequest, "not a CHG message");

  std::lock_guard guard(patient_lock(chg->patient_id));
  const auto patient = registry_.patient(chg->patient_id);
  if (!patient || !patient->active) {
    throw Error(ErrorCode::UnknownPatient, "patient " + chg->patient_id + " is not registered");
  }
  if (days_of(chg->preferred_date) <= days_of(date_of(registry_.clock().now()))) {
    throw Error(ErrorCode::PastDate, "preferred date must be after today");
  }
  auto appointments = registry_.appointments_of(patient->patient_id);
  auto open = std::find_if(appointments.begin(), appointments.end(),
                           [](const Appointment& a) { return is_open(a.state); });
  if (open == appointments.end()) {
    throw Error(ErrorCode::NoOpenAppointment, "no open appointment for " + patient->patient_id);
  }

  Appointment moved = *open;
  moved.date = chg->preferred_date;
  moved.state = AppointmentState::Rescheduled;
  const auto facility = registry_.facility(moved.facility_id);
  const auto note = templates_.render(patient->phone, "review_changed", patient->language,
                                      {{"center", facility ? facility->name : moved.facility_id},
                                       {"date", format_date(moved.date)},
                                       {"time", moved.slot}});
  const auto row = registry_.make_notification(
      {note.recipient_phone, note.template_id, note.language, note.rendered, patient->patient_id});
  Batch batch;
  batch.put(moved).put(row);
  commit_and_deliver(batch, {row});
  events_->emit("appointment.rescheduled", {{"patient_id", patient->patient_id},
                                            {"appointment_id", moved.appointment_id},
                                            {"date", format_date(moved.date)}});
  return moved;
}

WeeklyBatch CareDesk::weekly_advice_batch(Date today) {
  WeeklyBatch out;
  const auto catalog = registry_.advice();
  Batch batch;
  std::vector<NotificationRecord> rows;
  for (const auto& patient : registry_.patients()) {
    if (!patient.active) continue;
    int week = 0;
    try {
      week = gestation_week(patient.lmp, today);
    } catch (const Error&) {
      continue;  // lmp after `today`: nothing to advise yet
    }
    if (week > kMaxGestationWeek) {
      out.past_term.push_back(patient.patient_id);
      events_->emit("care.past_term", {{"patient_id", patient.patient_id}, {"week", week}});
      continue;
    }
    const AdviceEntry* match = nullptr;
    for (const auto& entry : catalog) {
      if (entry.language == patient.language && entry.week_min <= week && week <= entry.week_max &&
          (match == nullptr || entry.advice_id < match->advice_id)) {
        match = &entry;
      }
    }
    if (match == nullptr) {
      out.missing.push_back({patient.patient_id, week, patient.language});
      events_->emit("care.missing_advice", {{"code", to_string(ErrorCode::MissingAdvice)},
                                            {"patient_id", patient.patient_id},
                                            {"week", week},
                                            {"language", protocol::to_string(patient.language)}});
      continue;
    }
    auto n = templates_.render(patient.phone, "weekly_advice", patient.language,
                               {{"week", std::to_string(week)}, {"advice", match->text}});
    rows.push_back(registry_.make_notification(
        {n.recipient_phone, n.template_id, n.language, n.rendered, patient.patient_id}));
    batch.put(rows.back());
    out.notifications.push_back(std::move(n));
  }
  commit_and_deliver(batch, rows);
  events_->emit("care.weekly_batch", {{"date", format_date(today)},
                                      {"sent", out.notifications.size()},
                                      {"missing", out.missing.size()},
                                      {"past_term", out.past_term.size()}});
  return out;
}

}  // namespace pwcare::care
