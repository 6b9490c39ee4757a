#pragma once

// Rows of the registration database. One struct per table; the registry
// owns persistence, dispatch and care own the behaviour.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pwcare/clock.hpp"
#include "pwcare/geo.hpp"
#include "pwcare/protocol.hpp"

namespace pwcare {

using protocol::Language;

struct PatientRecord {
  std::string patient_id;
  std::string name;
  std::string phone;
  std::string husband_phone;  // empty when unknown
  geo::GeoPoint home{0, 0};
  Date lmp;
  Language language = Language::En;
  std::string care_center_id;
  Timestamp registered_at;
  bool active = true;

  friend bool operator==(const PatientRecord&, const PatientRecord&) = default;
};

struct Facility {
  std::string facility_id;
  geo::FacilityKind kind = geo::FacilityKind::CareCenter;
  std::string name;
  geo::GeoPoint location{0, 0};
  std::string contact_phone;

  friend bool operator==(const Facility&, const Facility&) = default;
};

struct DoctorAccount {
  std::string doctor_id;
  std::string username;
  std::string password_hash;
  std::string hospital_id;
  std::string phone;

  friend bool operator==(const DoctorAccount&, const DoctorAccount&) = default;
};

enum class Role { EmcOperator, Admin };

std::string_view to_string(Role role) noexcept;
std::optional<Role> role_from(std::string_view text) noexcept;

struct AdminAccount {
  std::string account_id;
  std::string username;
  std::string password_hash;
  Role role = Role::EmcOperator;

  friend bool operator==(const AdminAccount&, const AdminAccount&) = default;
};

enum class UnitKind { Car, BoatLife, Helicopter };
enum class UnitStatus { Available, Dispatched, OutOfService };

std::string_view to_string(UnitKind kind) noexcept;
std::optional<UnitKind> unit_kind_from(std::string_view text) noexcept;
std::string_view to_string(UnitStatus status) noexcept;
std::optional<UnitStatus> unit_status_from(std::string_view text) noexcept;

struct SuccoringUnit {
  std::string unit_id;
  UnitKind kind = UnitKind::Car;
  geo::GeoPoint base{0, 0};
  UnitStatus status = UnitStatus::Available;

  friend bool operator==(const SuccoringUnit&, const SuccoringUnit&) = default;
};

enum class RequestState { Received, Located, Dispatched, Complete, Cancelled };

std::string_view to_string(RequestState state) noexcept;
std::optional<RequestState> request_state_from(std::string_view text) noexcept;
bool is_terminal(RequestState state) noexcept;

struct StateChange {
  RequestState state = RequestState::Received;
  Timestamp at;
  std::string actor;
  std::string note;

  friend bool operator==(const StateChange&, const StateChange&) = default;
};

struct HelpRequest {
  std::string request_id;
  std::string patient_id;
  geo::GeoPoint location{0, 0};
  Timestamp request_time;    // client claim after skew clamp
  Timestamp received_time;   // server ingest clock
  Timestamp client_ts;       // raw client claim, the dedup key
  RequestState state = RequestState::Received;
  std::string hospital_id;
  std::string unit_id;
  std::vector<StateChange> history;

  friend bool operator==(const HelpRequest&, const HelpRequest&) = default;
};

enum class AppointmentState { Scheduled, Rescheduled, Attended, Missed };

std::string_view to_string(AppointmentState state) noexcept;
std::optional<AppointmentState> appointment_state_from(std::string_view text) noexcept;

inline bool is_open(AppointmentState s) noexcept {
  return s == AppointmentState::Scheduled || s == AppointmentState::Rescheduled;
}

struct Appointment {
  std::string appointment_id;
  std::string patient_id;
  std::string facility_id;
  Date date;
  std::string slot = "09:00";
  AppointmentState state = AppointmentState::Scheduled;
  Timestamp created_at;

  friend bool operator==(const Appointment&, const Appointment&) = default;
};

struct AdviceEntry {
  std::string advice_id;
  int trimester = 1;
  int week_min = 0;
  int week_max = 0;
  Language language = Language::En;
  std::string text;

  friend bool operator==(const AdviceEntry&, const AdviceEntry&) = default;
};

enum class DeliveryStatus { Queued, Sent, Failed };

std::string_view to_string(DeliveryStatus status) noexcept;
std::optional<DeliveryStatus> delivery_status_from(std::string_view text) noexcept;

struct NotificationRecord {
  std::string notification_id;
  std::string recipient_phone;
  std::string channel = "soip";
  std::string template_id;
  Language language = Language::En;
  std::string payload;
  std::string ref;  // request or patient id that caused the send
  DeliveryStatus status = DeliveryStatus::Queued;
  int attempts = 0;
  Timestamp created_at;
  std::optional<Timestamp> sent_at;

  friend bool operator==(const NotificationRecord&, const NotificationRecord&) = default;
};

struct PatientFile {
  std::string file_id;
  std::string patient_id;
  std::string doctor_id;
  std::string request_id;
  std::string notes;
  Timestamp created_at;

  friend bool operator==(const PatientFile&, const PatientFile&) = default;
};

}  // namespace pwcare
