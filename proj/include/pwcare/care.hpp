#pragma once

#include <array>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "pwcare/event_log.hpp"
#include "pwcare/protocol.hpp"
#include "pwcare/registry.hpp"

namespace pwcare::care {

inline constexpr int kMaxGestationWeek = 44;

// floor(days since LMP / 7). Throws FutureLmp when lmp is after today.
int gestation_week(Date lmp, Date today);

// 0-12 → 1, 13-27 → 2, 28-44 → 3. Throws OutOfPregnancyRange outside [0, 44].
int trimester_of(int week);

// First weekday (Mon-Fri) at least two days after `today`.
Date first_review_date(Date today);

inline constexpr const char* kReviewSlot = "09:00";

// Advice catalog rows: trimester\tweek_min\tweek_max\tlang\ttext. Upserts
// keyed by (trimester, week band, language), so reloading is idempotent.
registry::SeedReport load_advice_tsv(registry::Registry& registry, std::string_view tsv);
registry::SeedReport load_default_advice(registry::Registry& registry);

struct Registration {
  PatientRecord patient;
  Appointment appointment;
  std::vector<protocol::OutboundNotification> notifications;
};

struct AdviceGap {
  std::string patient_id;
  int week = 0;
  Language language = Language::En;
};

struct WeeklyBatch {
  std::vector<protocol::OutboundNotification> notifications;
  std::vector<AdviceGap> missing;          // MissingAdvice reports
  std::vector<std::string> past_term;      // beyond week 44, flagged for deactivation review
};

// Fires once per week at `weekday` (0 = Sunday) and `hour` UTC.
struct WeeklySchedule {
  unsigned weekday = 1;
  unsigned hour = 8;

  // Most recent firing instant at or before `now`.
  Timestamp last_slot(Timestamp now) const;
  bool due(Timestamp now, std::optional<Timestamp> last_run) const;
};

class CareDesk {
 public:
  CareDesk(registry::Registry& registry, const protocol::TemplateCatalog& templates,
           Outbox* outbox = nullptr, EventLog* events = nullptr);

  // REG → patient at the nearest care center, first review booked,
  // registration_ack + first_review queued in her language.
  // Throws DuplicatePhone, EmptyCandidateSet, InvalidField.
  Registration register_patient(const protocol::InboundMessage& msg);

  // CHG → open appointment moved to the preferred date.
  // Throws UnknownPatient, PastDate, NoOpenAppointment.
  Appointment reschedule(const protocol::InboundMessage& msg);

  WeeklyBatch weekly_advice_batch(Date today);

 private:
  std::mutex& patient_lock(std::string_view key);
  void commit_and_deliver(registry::Batch& batch, const std::vector<NotificationRecord>& rows);

  registry::Registry& registry_;
  const protocol::TemplateCatalog& templates_;
  Outbox* outbox_;
  EventLog* events_;
  EventLog null_events_;
  std::array<std::mutex, 64> stripes_;
};

}  // namespace pwcare::care
