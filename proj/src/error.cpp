#include "pwcare/error.hpp"

namespace pwcare {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedCoordinate: return "MALFORMED_COORDINATE";
    case ErrorCode::OutOfRange: return "OUT_OF_RANGE";
    case ErrorCode::EmptyCandidateSet: return "EMPTY_CANDIDATE_SET";
    case ErrorCode::DuplicatePhone: return "DUPLICATE_PHONE";
    case ErrorCode::InvalidField: return "INVALID_FIELD";
    case ErrorCode::NotFound: return "NOT_FOUND";
    case ErrorCode::UnknownKind: return "UNKNOWN_KIND";
    case ErrorCode::FieldCountMismatch: return "FIELD_COUNT_MISMATCH";
    case ErrorCode::OversizedPayload: return "OVERSIZED_PAYLOAD";
    case ErrorCode::InvalidEncoding: return "INVALID_ENCODING";
    case ErrorCode::MissingTemplate: return "MISSING_TEMPLATE";
    case ErrorCode::UnboundPlaceholder: return "UNBOUND_PLACEHOLDER";
    case ErrorCode::UnknownPatient: return "UNKNOWN_PATIENT";
    case ErrorCode::IllegalTransition: return "ILLEGAL_TRANSITION";
    case ErrorCode::UnitUnavailable: return "UNIT_UNAVAILABLE";
    case ErrorCode::FutureLmp: return "FUTURE_LMP";
    case ErrorCode::OutOfPregnancyRange: return "OUT_OF_PREGNANCY_RANGE";
    case ErrorCode::MissingAdvice: return "MISSING_ADVICE";
    case ErrorCode::NoOpenAppointment: return "NO_OPEN_APPOINTMENT";
    case ErrorCode::PastDate: return "PAST_DATE";
    case ErrorCode::BadCredentials: return "BAD_CREDENTIALS";
    case ErrorCode::Unauthorized: return "UNAUTHORIZED";
    case ErrorCode::Forbidden: return "FORBIDDEN";
    case ErrorCode::GatewayUnreachable: return "GATEWAY_UNREACHABLE";
    case ErrorCode::BadRequest: return "BAD_REQUEST";
    case ErrorCode::Internal: return "INTERNAL";
  }
  return "INTERNAL";
}

std::optional<ErrorCode> error_code_from(std::string_view text) noexcept {
  for (int i = 0; i <= static_cast<int>(ErrorCode::Internal); ++i) {
    if (to_string(static_cast<ErrorCode>(i)) == text) return static_cast<ErrorCode>(i);
  }
  return std::nullopt;
}

int http_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NotFound:
      return 404;
    case ErrorCode::DuplicatePhone:
    case ErrorCode::IllegalTransition:
    case ErrorCode::UnitUnavailable:
      return 409;
    case ErrorCode::BadCredentials:
    case ErrorCode::Unauthorized:
      return 401;
    case ErrorCode::Forbidden:
      return 403;
    case ErrorCode::OversizedPayload:
      return 413;
    case ErrorCode::EmptyCandidateSet:
    case ErrorCode::GatewayUnreachable:
      return 503;
    case ErrorCode::Internal:
      return 500;
    case ErrorCode::BadRequest:
      return 400;
    default:
      return 422;
  }
}

}  // namespace pwcare
