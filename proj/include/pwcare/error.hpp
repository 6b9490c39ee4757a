#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pwcare {

// Stable error codes. The string forms are part of the wire contract
// (ingress replies, API error bodies, CLI output) and must not change.
enum class ErrorCode {
  MalformedCoordinate,
  OutOfRange,
  EmptyCandidateSet,
  DuplicatePhone,
  InvalidField,
  NotFound,
  UnknownKind,
  FieldCountMismatch,
  OversizedPayload,
  InvalidEncoding,
  MissingTemplate,
  UnboundPlaceholder,
  UnknownPatient,
  IllegalTransition,
  UnitUnavailable,
  FutureLmp,
  OutOfPregnancyRange,
  MissingAdvice,
  NoOpenAppointment,
  PastDate,
  BadCredentials,
  Unauthorized,
  Forbidden,
  GatewayUnreachable,
  BadRequest,
  Internal,
};

std::string_view to_string(ErrorCode code) noexcept;
std::optional<ErrorCode> error_code_from(std::string_view text) noexcept;

// HTTP status used when an error crosses the service boundary.
int http_status(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace pwcare
