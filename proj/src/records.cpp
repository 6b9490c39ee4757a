#include "pwcare/records.hpp"

namespace pwcare {

std::string_view to_string(Role role) noexcept {
  return role == Role::Admin ? "admin" : "emc_operator";
}

std::optional<Role> role_from(std::string_view text) noexcept {
  if (text == "emc_operator") return Role::EmcOperator;
  if (text == "admin") return Role::Admin;
  return std::nullopt;
}

std::string_view to_string(UnitKind kind) noexcept {
  switch (kind) {
    case UnitKind::Car: return "car";
    case UnitKind::BoatLife: return "boat_life";
    case UnitKind::Helicopter: return "helicopter";
  }
  return "car";
}

std::optional<UnitKind> unit_kind_from(std::string_view text) noexcept {
  if (text == "car") return UnitKind::Car;
  if (text == "boat_life") return UnitKind::BoatLife;
  if (text == "helicopter") return UnitKind::Helicopter;
  return std::nullopt;
}

std::string_view to_string(UnitStatus status) noexcept {
  switch (status) {
    case UnitStatus::Available: return "available";
    case UnitStatus::Dispatched: return "dispatched";
    case UnitStatus::OutOfService: return "out_of_service";
  }
  return "available";
}

std::optional<UnitStatus> unit_status_from(std::string_view text) noexcept {
  if (text == "available") return UnitStatus::Available;
  if (text == "dispatched") return UnitStatus::Dispatched;
  if (text == "out_of_service") return UnitStatus::OutOfService;
  return std::nullopt;
}

std::string_view to_string(RequestState state) noexcept {
  switch (state) {
    case RequestState::Received: return "received";
    case RequestState::Located: return "located";
    case RequestState::Dispatched: return "dispatched";
    case RequestState::Complete: return "complete";
    case RequestState::Cancelled: return "cancelled";
  }
  return "received";
}

std::optional<RequestState> request_state_from(std::string_view text) noexcept {
  if (text == "received") return RequestState::Received;
  if (text == "located") return RequestState::Located;
  if (text == "dispatched") return RequestState::Dispatched;
  if (text == "complete") return RequestState::Complete;
  if (text == "cancelled") return RequestState::Cancelled;
  return std::nullopt;
}

bool is_terminal(RequestState state) noexcept {
  return state == RequestState::Complete || state == RequestState::Cancelled;
}

std::string_view to_string(AppointmentState state) noexcept {
  switch (state) {
    case AppointmentState::Scheduled: return "scheduled";
    case AppointmentState::Rescheduled: return "rescheduled";
    case AppointmentState::Attended: return "attended";
    case AppointmentState::Missed: return "missed";
  }
  return "scheduled";
}

std::optional<AppointmentState> appointment_state_from(std::string_view text) noexcept {
  if (text == "scheduled") return AppointmentState::Scheduled;
  if (text == "rescheduled") return AppointmentState::Rescheduled;
  if (text == "attended") return AppointmentState::Attended;
  if (text == "missed") return AppointmentState::Missed;
  return std::nullopt;
}

std::string_view to_string(DeliveryStatus status) noexcept {
  switch (status) {
    case DeliveryStatus::Queued: return "queued";
    case DeliveryStatus::Sent: return "sent";
    case DeliveryStatus::Failed: return "failed";
  }
  return "queued";
}

std::optional<DeliveryStatus> delivery_status_from(std::string_view text) noexcept {
  if (text == "queued") return DeliveryStatus::Queued;
  if (text == "sent") return DeliveryStatus::Sent;
  if (text == "failed") return DeliveryStatus::Failed;
  return std::nullopt;
}

}  // namespace pwcare
