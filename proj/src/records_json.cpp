#include <json.hpp>

#include "pwcare/registry.hpp"

namespace pwcare::registry {
namespace {

using Json = nlohmann::ordered_json;

[[noreturn]] void corrupt(const std::string& what) {
  throw Error(ErrorCode::Internal, "corrupt row: " + what);
}

template <class Enum>
Enum enum_field(const Json& j, const char* key, std::optional<Enum> (*from)(std::string_view) noexcept) {
  auto v = from(j.at(key).get<std::string>());
  if (!v) corrupt(std::string("bad enum in ") + key);
  return *v;
}

Json ts(Timestamp t) { return format_timestamp(t); }
Timestamp ts_field(const Json& j, const char* key) {
  auto t = parse_timestamp(j.at(key).get<std::string>());
  if (!t) corrupt(std::string("bad timestamp in ") + key);
  return *t;
}
Date date_field(const Json& j, const char* key) {
  auto d = parse_date(j.at(key).get<std::string>());
  if (!d) corrupt(std::string("bad date in ") + key);
  return *d;
}
Json point(const geo::GeoPoint& p) { return Json{{"lat", p.lat()}, {"lon", p.lon()}}; }
geo::GeoPoint point_field(const Json& j, const char* key) {
  const Json& p = j.at(key);
  return geo::GeoPoint(p.at("lat").get<double>(), p.at("lon").get<double>());
}
Language lang_field(const Json& j) {
  return enum_field<Language>(j, "language", &protocol::language_from);
}
std::string str(const Json& j, const char* key) { return j.at(key).get<std::string>(); }

template <class Row>
Row decode(const Json& j);

template <>
PatientRecord decode(const Json& j) {
  return PatientRecord{str(j, "patient_id"), str(j, "name"), str(j, "phone"),
                       str(j, "husband_phone"), point_field(j, "home"), date_field(j, "lmp"),
                       lang_field(j), str(j, "care_center_id"), ts_field(j, "registered_at"),
                       j.at("active").get<bool>()};
}

template <>
Facility decode(const Json& j) {
  return Facility{str(j, "facility_id"), geo::facility_kind_from(str(j, "kind")), str(j, "name"),
                  point_field(j, "location"), str(j, "contact_phone")};
}

template <>
DoctorAccount decode(const Json& j) {
  return DoctorAccount{str(j, "doctor_id"), str(j, "username"), str(j, "password_hash"),
                       str(j, "hospital_id"), str(j, "phone")};
}

template <>
AdminAccount decode(const Json& j) {
  return AdminAccount{str(j, "account_id"), str(j, "username"), str(j, "password_hash"),
                      enum_field<Role>(j, "role", &role_from)};
}

template <>
SuccoringUnit decode(const Json& j) {
  return SuccoringUnit{str(j, "unit_id"), enum_field<UnitKind>(j, "kind", &unit_kind_from),
                       point_field(j, "base"),
                       enum_field<UnitStatus>(j, "status", &unit_status_from)};
}

template <>
HelpRequest decode(const Json& j) {
  HelpRequest r{str(j, "request_id"), str(j, "patient_id"), point_field(j, "location"),
                ts_field(j, "request_time"), ts_field(j, "received_time"),
                ts_field(j, "client_ts"),
                enum_field<RequestState>(j, "state", &request_state_from),
                str(j, "hospital_id"), str(j, "unit_id"), {}};
  for (const Json& h : j.at("history")) {
    r.history.push_back(StateChange{enum_field<RequestState>(h, "state", &request_state_from),
                                    ts_field(h, "at"), str(h, "actor"), str(h, "note")});
  }
  return r;
}

template <>
Appointment decode(const Json& j) {
  return Appointment{str(j, "appointment_id"), str(j, "patient_id"), str(j, "facility_id"),
                     date_field(j, "date"), str(j, "slot"),
                     enum_field<AppointmentState>(j, "state", &appointment_state_from),
                     ts_field(j, "created_at")};
}

template <>
AdviceEntry decode(const Json& j) {
  return AdviceEntry{str(j, "advice_id"), j.at("trimester").get<int>(),
                     j.at("week_min").get<int>(), j.at("week_max").get<int>(), lang_field(j),
                     str(j, "text")};
}

template <>
NotificationRecord decode(const Json& j) {
  NotificationRecord n{str(j, "notification_id"), str(j, "recipient_phone"), str(j, "channel"),
                       str(j, "template_id"), lang_field(j), str(j, "payload"), str(j, "ref"),
                       enum_field<DeliveryStatus>(j, "status", &delivery_status_from),
                       j.at("attempts").get<int>(), ts_field(j, "created_at"), std::nullopt};
  if (!j.at("sent_at").is_null()) n.sent_at = ts_field(j, "sent_at");
  return n;
}

template <>
PatientFile decode(const Json& j) {
  return PatientFile{str(j, "file_id"), str(j, "patient_id"), str(j, "doctor_id"),
                     str(j, "request_id"), str(j, "notes"), ts_field(j, "created_at")};
}

std::string dump(const Json& j) { return j.dump(-1, ' ', false, Json::error_handler_t::strict); }

}  // namespace

std::string encode_row(const PatientRecord& r) {
  return dump(Json{{"patient_id", r.patient_id},
                   {"name", r.name},
                   {"phone", r.phone},
                   {"husband_phone", r.husband_phone},
                   {"home", point(r.home)},
                   {"lmp", format_date(r.lmp)},
                   {"language", protocol::to_string(r.language)},
                   {"care_center_id", r.care_center_id},
                   {"registered_at", ts(r.registered_at)},
                   {"active", r.active}});
}

std::string encode_row(const Facility& r) {
  return dump(Json{{"facility_id", r.facility_id},
                   {"kind", geo::to_string(r.kind)},
                   {"name", r.name},
                   {"location", point(r.location)},
                   {"contact_phone", r.contact_phone}});
}

std::string encode_row(const DoctorAccount& r) {
  return dump(Json{{"doctor_id", r.doctor_id},
                   {"username", r.username},
                   {"password_hash", r.password_hash},
                   {"hospital_id", r.hospital_id},
                   {"phone", r.phone}});
}

std::string encode_row(const AdminAccount& r) {
  return dump(Json{{"account_id", r.account_id},
                   {"username", r.username},
                   {"password_hash", r.password_hash},
                   {"role", to_string(r.role)}});
}

std::string encode_row(const SuccoringUnit& r) {
  return dump(Json{{"unit_id", r.unit_id},
                   {"kind", to_string(r.kind)},
                   {"base", point(r.base)},
                   {"status", to_string(r.status)}});
}

std::string encode_row(const HelpRequest& r) {
  Json history = Json::array();
  for (const auto& h : r.history) {
    history.push_back(Json{{"state", to_string(h.state)},
                           {"at", ts(h.at)},
                           {"actor", h.actor},
                           {"note", h.note}});
  }
  return dump(Json{{"request_id", r.request_id},
                   {"patient_id", r.patient_id},
                   {"location", point(r.location)},
                   {"request_time", ts(r.request_time)},
                   {"received_time", ts(r.received_time)},
                   {"client_ts", ts(r.client_ts)},
                   {"state", to_string(r.state)},
                   {"hospital_id", r.hospital_id},
                   {"unit_id", r.unit_id},
                   {"history", std::move(history)}});
}

std::string encode_row(const Appointment& r) {
  return dump(Json{{"appointment_id", r.appointment_id},
                   {"patient_id", r.patient_id},
                   {"facility_id", r.facility_id},
                   {"date", format_date(r.date)},
                   {"slot", r.slot},
                   {"state", to_string(r.state)},
                   {"created_at", ts(r.created_at)}});
}

std::string encode_row(const AdviceEntry& r) {
  return dump(Json{{"advice_id", r.advice_id},
                   {"trimester", r.trimester},
                   {"week_min", r.week_min},
                   {"week_max", r.week_max},
                   {"language", protocol::to_string(r.language)},
                   {"text", r.text}});
}

std::string encode_row(const NotificationRecord& r) {
  return dump(Json{{"notification_id", r.notification_id},
                   {"recipient_phone", r.recipient_phone},
                   {"channel", r.channel},
                   {"template_id", r.template_id},
                   {"language", protocol::to_string(r.language)},
                   {"payload", r.payload},
                   {"ref", r.ref},
                   {"status", to_string(r.status)},
                   {"attempts", r.attempts},
                   {"created_at", ts(r.created_at)},
                   {"sent_at", r.sent_at ? ts(*r.sent_at) : Json(nullptr)}});
}

std::string encode_row(const PatientFile& r) {
  return dump(Json{{"file_id", r.file_id},
                   {"patient_id", r.patient_id},
                   {"doctor_id", r.doctor_id},
                   {"request_id", r.request_id},
                   {"notes", r.notes},
                   {"created_at", ts(r.created_at)}});
}

template <class Row>
Row decode_row(std::string_view json) {
  try {
    return decode<Row>(Json::parse(json));
  } catch (const Json::exception& e) {
    corrupt(e.what());
  }
}

template PatientRecord decode_row<PatientRecord>(std::string_view);
template Facility decode_row<Facility>(std::string_view);
template DoctorAccount decode_row<DoctorAccount>(std::string_view);
template SuccoringUnit decode_row<SuccoringUnit>(std::string_view);
template HelpRequest decode_row<HelpRequest>(std::string_view);
template Appointment decode_row<Appointment>(std::string_view);
template AdviceEntry decode_row<AdviceEntry>(std::string_view);
template NotificationRecord decode_row<NotificationRecord>(std::string_view);
template PatientFile decode_row<PatientFile>(std::string_view);
template AdminAccount decode_row<AdminAccount>(std::string_view);

}  // namespace pwcare::registry
