#include "pwcare/registry.hpp"

#include <sodium.h>
#include <sqlite3.h>

#include <algorithm>
#include <cstdio>
#include <istream>
#include <json.hpp>
#include <ostream>

#include "csv.hpp"

namespace pwcare::registry {
namespace {

constexpr std::array<std::string_view, kTableCount> kTableNames{
    "patients",       "facilities", "doctors",       "units",        "help_requests",
    "appointments",   "advice_catalog", "notifications", "patient_files", "admin_accounts"};

// Facilities are keyed by their seed file; everything else is server-generated.
constexpr std::array<std::string_view, kTableCount> kIdPrefixes{"P", "F", "D", "U", "R",
                                                                "A", "V", "N", "PF", "OP"};

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::InvalidField, what); }

void ensure_sodium() {
  static const int rc = sodium_init();
  if (rc < 0) throw Error(ErrorCode::Internal, "libsodium failed to initialise");
}

template <class F>
void for_each_row_type(F&& f) {
  f(std::type_identity<PatientRecord>{});
  f(std::type_identity<Facility>{});
  f(std::type_identity<DoctorAccount>{});
  f(std::type_identity<SuccoringUnit>{});
  f(std::type_identity<HelpRequest>{});
  f(std::type_identity<Appointment>{});
  f(std::type_identity<AdviceEntry>{});
  f(std::type_identity<NotificationRecord>{});
  f(std::type_identity<PatientFile>{});
  f(std::type_identity<AdminAccount>{});
}

std::uint64_t id_counter_value(std::string_view id, std::string_view prefix) {
  if (id.size() <= prefix.size() || id.substr(0, prefix.size()) != prefix) return 0;
  std::uint64_t v = 0;
  for (char c : id.substr(prefix.size())) {
    if (c < '0' || c > '9') return 0;
    v = v * 10 + static_cast<std::uint64_t>(c - '0');
  }
  return v;
}

bool text_ok(std::string_view s) {
  if (!protocol::is_valid_utf8(s)) return false;
  return std::none_of(s.begin(), s.end(), [](char c) {
    const auto u = static_cast<unsigned char>(c);
    return u < 0x20 || u == 0x7F;
  });
}

void require_header(const std::vector<detail::CsvRow>& rows, std::vector<std::string> expected,
                    SeedReport& report) {
  if (rows.empty() || rows.front().cells != expected) {
    std::string want;
    for (const auto& col : expected) want += (want.empty() ? "" : ",") + col;
    report.errors.push_back({rows.empty() ? 1 : rows.front().line, ErrorCode::InvalidField,
                             "header must be: " + want});
  }
}

template <class F>
void each_data_row(const std::vector<detail::CsvRow>& rows, std::size_t width, SeedReport& report,
                   F&& f) {
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    try {
      if (row.malformed || row.cells.size() != width) {
        invalid("expected " + std::to_string(width) + " columns");
      }
      f(row.cells);
      ++report.ingested;
    } catch (const Error& e) {
      report.errors.push_back({row.line, e.code(), e.what()});
    }
  }
}

}  // namespace

PasswordCost PasswordCost::interactive() noexcept {
  return {crypto_pwhash_OPSLIMIT_INTERACTIVE, crypto_pwhash_MEMLIMIT_INTERACTIVE};
}

PasswordCost PasswordCost::minimal() noexcept {
  return {crypto_pwhash_OPSLIMIT_MIN, crypto_pwhash_MEMLIMIT_MIN};
}

std::string hash_password(std::string_view password, PasswordCost cost) {
  ensure_sodium();
  char out[crypto_pwhash_STRBYTES];
  if (crypto_pwhash_str(out, password.data(), password.size(), cost.opslimit, cost.memlimit) != 0) {
    throw Error(ErrorCode::Internal, "password hashing ran out of memory");
  }
  return out;
}

bool verify_password(std::string_view hash, std::string_view password) noexcept {
  if (sodium_init() < 0) return false;
  const std::string h(hash);
  return crypto_pwhash_str_verify(h.c_str(), password.data(), password.size()) == 0;
}

std::string_view table_name(TableId id) noexcept {
  return kTableNames[static_cast<std::size_t>(id)];
}

Registry::Registry(Options options) : options_(std::move(options)) {
  if (options_.clock == nullptr) {
    owned_clock_ = std::make_unique<SystemClock>();
    clock_ = owned_clock_.get();
  } else {
    clock_ = options_.clock;
  }
  ensure_sodium();
  open_database();
  load_tables();
}

Registry::~Registry() {
  if (db_ != nullptr) sqlite3_close_v2(db_);
}

void Registry::open_database() {
  const int rc = sqlite3_open_v2(options_.path.c_str(), &db_,
                                 SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_NOMUTEX,
                                 nullptr);
  if (rc != SQLITE_OK) {
    const std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
    throw Error(ErrorCode::Internal, "cannot open " + options_.path + ": " + msg);
  }
  std::string ddl =
      "PRAGMA journal_mode=WAL; PRAGMA synchronous=NORMAL; PRAGMA busy_timeout=5000;";
  for (auto name : kTableNames) {
    ddl += "CREATE TABLE IF NOT EXISTS " + std::string(name) +
           " (id TEXT PRIMARY KEY, body TEXT NOT NULL);";
  }
  char* err = nullptr;
  if (sqlite3_exec(db_, ddl.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown";
    sqlite3_free(err);
    throw Error(ErrorCode::Internal, "schema setup failed: " + msg);
  }
}

void Registry::load_tables() {
  for_each_row_type([this]<class Row>(std::type_identity<Row>) {
    auto& t = table<Row>();
    const auto index = static_cast<std::size_t>(TableTraits<Row>::id);
    const std::string sql = "SELECT id, body FROM " + std::string(kTableNames[index]);
    sqlite3_stmt* stmt = nullptr;
    if (sqlite3_prepare_v2(db_, sql.c_str(), -1, &stmt, nullptr) != SQLITE_OK) {
      throw Error(ErrorCode::Internal, sqlite3_errmsg(db_));
    }
    std::unique_lock lock(t.mu);
    t.rows.clear();
    std::uint64_t max_id = 0;
    while (sqlite3_step(stmt) == SQLITE_ROW) {
      const auto* body = reinterpret_cast<const char*>(sqlite3_column_text(stmt, 1));
      Row row = decode_row<Row>(body);
      const std::string& key = TableTraits<Row>::key(row);
      max_id = std::max(max_id, id_counter_value(key, kIdPrefixes[index]));
      t.rows.insert_or_assign(key, std::move(row));
    }
    sqlite3_finalize(stmt);
    t.counter.store(max_id);
  });
}

std::string Registry::next_id(TableId id) {
  TableBase* tables[kTableCount] = {&patients_, &facilities_,   &doctors_,       &units_,
                                    &requests_, &appointments_, &advice_,        &notifications_,
                                    &files_,    &accounts_};
  const auto index = static_cast<std::size_t>(id);
  const std::uint64_t n = tables[index]->counter.fetch_add(1) + 1;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%06llu", kIdPrefixes[index].data(),
                static_cast<unsigned long long>(n));
  return buf;
}

void Registry::write_rows(
    const std::vector<std::pair<TableId, std::pair<std::string, std::string>>>& rows) {
  std::lock_guard lock(db_mu_);
  auto exec = [this](const char* sql) {
    if (sqlite3_exec(db_, sql, nullptr, nullptr, nullptr) != SQLITE_OK) {
      throw Error(ErrorCode::Internal, std::string("storage: ") + sqlite3_errmsg(db_));
    }
  };
  exec("BEGIN IMMEDIATE");
  try {
    for (const auto& [table_id, row] : rows) {
      const std::string sql = "INSERT OR REPLACE INTO " + std::string(table_name(table_id)) +
                              " (id, body) VALUES (?1, ?2)";
      sqlite3_stmt* stmt = nullptr;
      if (sqlite3_prepare_v2(db_, sql.c_str(), -1, &stmt, nullptr) != SQLITE_OK) {
        throw Error(ErrorCode::Internal, std::string("storage: ") + sqlite3_errmsg(db_));
      }
      sqlite3_bind_text(stmt, 1, row.first.data(), static_cast<int>(row.first.size()),
                        SQLITE_TRANSIENT);
      sqlite3_bind_text(stmt, 2, row.second.data(), static_cast<int>(row.second.size()),
                        SQLITE_TRANSIENT);
      const int rc = sqlite3_step(stmt);
      sqlite3_finalize(stmt);
      if (rc != SQLITE_DONE) {
        throw Error(ErrorCode::Internal, std::string("storage: ") + sqlite3_errmsg(db_));
      }
    }
    exec("COMMIT");
  } catch (...) {
    sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
    throw;
  }
}

void Registry::commit(Batch& batch) {
  if (batch.writes_.empty()) return;
  TableBase* tables[kTableCount] = {&patients_, &facilities_,   &doctors_,       &units_,
                                    &requests_, &appointments_, &advice_,        &notifications_,
                                    &files_,    &accounts_};
  std::array<bool, kTableCount> touched{};
  for (const auto& w : batch.writes_) touched[static_cast<std::size_t>(w.table)] = true;

  // Writer gates in TableId order; readers are never blocked by a gate.
  std::vector<std::unique_lock<std::mutex>> gates;
  for (std::size_t i = 0; i < kTableCount; ++i) {
    if (touched[i]) gates.emplace_back(tables[i]->gate);
  }

  for (const auto& w : batch.writes_) w.validate(*this);
  for (const auto& check : batch.checks_) check();

  std::vector<std::pair<TableId, std::pair<std::string, std::string>>> rows;
  rows.reserve(batch.writes_.size());
  for (const auto& w : batch.writes_) rows.push_back({w.table, {w.id, w.encode()}});
  write_rows(rows);
  for (const auto& w : batch.writes_) w.apply(*this);
}

// -- validation -------------------------------------------------------------

void Registry::validate(const PatientRecord& row) const {
  if (row.name.empty() || row.name.find('|') != std::string::npos || !text_ok(row.name)) {
    invalid("patient name must be non-empty printable text without '|'");
  }
  if (!protocol::is_valid_phone(row.phone)) invalid("patient phone is not a valid number");
  if (!row.husband_phone.empty() && !protocol::is_valid_phone(row.husband_phone)) {
    invalid("husband phone is not a valid number");
  }
  auto center = facility(row.care_center_id);
  if (!center || center->kind != geo::FacilityKind::CareCenter) {
    invalid("care center '" + row.care_center_id + "' does not exist");
  }
  if (row.active) {
    std::shared_lock lock(patients_.mu);
    for (const auto& [id, other] : patients_.rows) {
      if (other.active && other.phone == row.phone && id != row.patient_id) {
        throw Error(ErrorCode::DuplicatePhone, "phone " + row.phone + " is already registered");
      }
    }
  }
}

void Registry::validate(const Facility& row) const {
  if (row.facility_id.empty() || !text_ok(row.facility_id)) invalid("facility id is empty");
  if (row.name.empty() || !text_ok(row.name)) invalid("facility name is empty");
  if (!protocol::is_valid_phone(row.contact_phone)) invalid("contact phone is not a valid number");
}

namespace {
bool username_ok(std::string_view u) {
  return !u.empty() && u.size() <= 64 && text_ok(u) && u.find(' ') == std::string_view::npos;
}
}  // namespace

void Registry::validate(const DoctorAccount& row) const {
  if (!username_ok(row.username)) invalid("username is empty or malformed");
  if (row.password_hash.empty()) invalid("password hash missing");
  if (auto other = doctor_by_username(row.username); other && other->doctor_id != row.doctor_id) {
    invalid("username '" + row.username + "' is taken");
  }
  if (account_by_username(row.username)) invalid("username '" + row.username + "' is taken");
  auto hospital = facility(row.hospital_id);
  if (!hospital || hospital->kind != geo::FacilityKind::Hospital) {
    invalid("hospital '" + row.hospital_id + "' does not exist");
  }
  if (!protocol::is_valid_phone(row.phone)) invalid("doctor phone is not a valid number");
}

void Registry::validate(const AdminAccount& row) const {
  if (!username_ok(row.username)) invalid("username is empty or malformed");
  if (row.password_hash.empty()) invalid("password hash missing");
  if (auto other = account_by_username(row.username); other && other->account_id != row.account_id) {
    invalid("username '" + row.username + "' is taken");
  }
  if (doctor_by_username(row.username)) invalid("username '" + row.username + "' is taken");
}

void Registry::validate(const SuccoringUnit& row) const {
  if (row.unit_id.empty() || !text_ok(row.unit_id)) invalid("unit id is empty");
}

void Registry::validate(const HelpRequest& row) const {
  if (!patient(row.patient_id)) invalid("request references unknown patient " + row.patient_id);
  if (!row.hospital_id.empty()) {
    auto hospital = facility(row.hospital_id);
    if (!hospital || hospital->kind != geo::FacilityKind::Hospital) {
      invalid("request references unknown hospital " + row.hospital_id);
    }
  }
  if (!row.unit_id.empty() && !unit(row.unit_id)) {
    invalid("request references unknown unit " + row.unit_id);
  }
  const bool needs_hospital = row.state == RequestState::Located ||
                              row.state == RequestState::Dispatched ||
                              row.state == RequestState::Complete;
  const bool needs_unit =
      row.state == RequestState::Dispatched || row.state == RequestState::Complete;
  if (needs_hospital && row.hospital_id.empty()) invalid("located request without hospital");
  if (needs_unit && row.unit_id.empty()) invalid("dispatched request without unit");
  if (row.history.empty() || row.history.back().state != row.state) {
    invalid("request history must end in the current state");
  }
}

void Registry::validate(const Appointment& row) const {
  if (!patient(row.patient_id)) invalid("appointment references unknown patient");
  if (!facility(row.facility_id)) invalid("appointment references unknown facility");
}

void Registry::validate(const AdviceEntry& row) const {
  if (row.trimester < 1 || row.trimester > 3) invalid("trimester must be 1, 2 or 3");
  if (row.week_min < 0 || row.week_min > row.week_max || row.week_max > 44) {
    invalid("advice week band must satisfy 0 <= week_min <= week_max <= 44");
  }
  if (row.text.empty() || !text_ok(row.text)) invalid("advice text is empty");
}

void Registry::validate(const NotificationRecord& row) const {
  if (row.payload.empty()) invalid("notification payload is empty");
  if (row.sent_at.has_value() != (row.status == DeliveryStatus::Sent)) {
    invalid("sent_at must be present exactly when status is sent");
  }
  if (auto prior = notification(row.notification_id)) {
    if (prior->recipient_phone != row.recipient_phone || prior->payload != row.payload ||
        prior->template_id != row.template_id || prior->language != row.language ||
        prior->ref != row.ref || prior->created_at != row.created_at) {
      invalid("notification log is append-only");
    }
  }
}

void Registry::validate(const PatientFile& row) const {
  if (!patient(row.patient_id)) invalid("file references unknown patient");
  auto doc = doctor(row.doctor_id);
  if (!doc) invalid("file references unknown doctor");
  auto req = request(row.request_id);
  if (!req || req->patient_id != row.patient_id) {
    invalid("file must reference a help request of this patient");
  }
  if (req->hospital_id != doc->hospital_id) {
    throw Error(ErrorCode::Forbidden, "doctor does not belong to the request's hospital");
  }
}

// -- patients ---------------------------------------------------------------

PatientRecord Registry::create_patient(const RegistrationData& reg) {
  const Timestamp now = clock_->now();
  const auto today = days_of(date_of(now));
  const auto lmp = days_of(reg.lmp);
  if (lmp > today) throw Error(ErrorCode::FutureLmp, "lmp date is after the registration date");
  if ((today - lmp).count() / 7 > 44) {
    throw Error(ErrorCode::OutOfPregnancyRange, "lmp date is more than 44 weeks ago");
  }
  if (auto existing = patients(); std::any_of(existing.begin(), existing.end(), [&](auto& p) {
        return p.active && p.phone == reg.phone;
      })) {
    throw Error(ErrorCode::DuplicatePhone, "phone " + reg.phone + " is already registered");
  }
  PatientRecord record{next_id(TableId::Patients), reg.name,     reg.phone,
                       reg.husband_phone,          reg.home,     reg.lmp,
                       reg.language,               reg.care_center_id, now,
                       true};
  Batch batch;
  batch.put(record);
  commit(batch);
  return record;
}

PatientRecord Registry::find_patient_by_id(std::string_view patient_id) const {
  auto p = patient(patient_id);
  if (!p) throw Error(ErrorCode::NotFound, "no patient " + std::string(patient_id));
  return *p;
}

PatientRecord Registry::find_patient_by_phone(std::string_view phone) const {
  std::shared_lock lock(patients_.mu);
  for (const auto& [id, p] : patients_.rows) {
    if (p.active && p.phone == phone) return p;
  }
  throw Error(ErrorCode::NotFound, "no patient with phone " + std::string(phone));
}

std::optional<PatientRecord> Registry::patient(std::string_view patient_id) const {
  return get<PatientRecord>(patient_id);
}

std::vector<PatientRecord> Registry::patients() const { return all<PatientRecord>(); }

void Registry::put_patient(const PatientRecord& patient) {
  Batch batch;
  batch.put(patient);
  commit(batch);
}

// -- facilities ---------------------------------------------------------------

SeedReport Registry::seed_facilities(std::string_view csv) {
  SeedReport report;
  const auto rows = detail::read_delimited(csv, ',');
  require_header(rows, {"facility_id", "kind", "name", "lat", "lon", "contact_phone"}, report);
  if (!report.errors.empty()) return report;
  each_data_row(rows, 6, report, [this](const std::vector<std::string>& c) {
    put_facility(Facility{c[0], geo::facility_kind_from(c[1]), c[2], geo::validate_point(c[3], c[4]),
                          c[5]});
  });
  return report;
}

void Registry::put_facility(const Facility& facility) {
  Batch batch;
  batch.put(facility);
  commit(batch);
}

std::optional<Facility> Registry::facility(std::string_view facility_id) const {
  return get<Facility>(facility_id);
}

std::vector<Facility> Registry::facilities() const { return all<Facility>(); }

std::vector<geo::Candidate> Registry::facility_candidates() const {
  std::shared_lock lock(facilities_.mu);
  std::vector<geo::Candidate> out;
  out.reserve(facilities_.rows.size());
  for (const auto& [id, f] : facilities_.rows) out.push_back({id, f.kind, f.location});
  return out;
}

// -- accounts -----------------------------------------------------------------

SeedReport Registry::seed_doctors(std::string_view csv) {
  SeedReport report;
  const auto rows = detail::read_delimited(csv, ',');
  require_header(rows, {"username", "password", "hospital_id", "phone"}, report);
  if (!report.errors.empty()) return report;
  each_data_row(rows, 4, report, [this](const std::vector<std::string>& c) {
    put_doctor(c[0], c[1], c[2], c[3]);
  });
  return report;
}

DoctorAccount Registry::put_doctor(std::string_view username, std::string_view password,
                                   std::string_view hospital_id, std::string_view phone) {
  if (password.empty()) invalid("password is empty");
  auto existing = doctor_by_username(username);
  DoctorAccount account{
      existing ? existing->doctor_id : next_id(TableId::Doctors), std::string(username),
      existing && verify_password(existing->password_hash, password)
          ? existing->password_hash
          : hash_password(password, options_.password_cost),
      std::string(hospital_id), std::string(phone)};
  Batch batch;
  batch.put(account);
  commit(batch);
  return account;
}

std::optional<DoctorAccount> Registry::doctor(std::string_view doctor_id) const {
  return get<DoctorAccount>(doctor_id);
}

std::optional<DoctorAccount> Registry::doctor_by_username(std::string_view username) const {
  std::shared_lock lock(doctors_.mu);
  for (const auto& [id, d] : doctors_.rows) {
    if (d.username == username) return d;
  }
  return std::nullopt;
}

std::vector<DoctorAccount> Registry::doctors_of(std::string_view hospital_id) const {
  std::vector<DoctorAccount> out;
  std::shared_lock lock(doctors_.mu);
  for (const auto& [id, d] : doctors_.rows) {
    if (d.hospital_id == hospital_id) out.push_back(d);
  }
  return out;
}

std::vector<DoctorAccount> Registry::doctors() const { return all<DoctorAccount>(); }

SeedReport Registry::seed_accounts(std::string_view csv) {
  SeedReport report;
  const auto rows = detail::read_delimited(csv, ',');
  require_header(rows, {"username", "password", "role"}, report);
  if (!report.errors.empty()) return report;
  each_data_row(rows, 3, report, [this](const std::vector<std::string>& c) {
    auto role = role_from(c[2]);
    if (!role) invalid("role must be emc_operator or admin");
    put_account(c[0], c[1], *role);
  });
  return report;
}

AdminAccount Registry::put_account(std::string_view username, std::string_view password,
                                   Role role) {
  if (password.empty()) invalid("password is empty");
  auto existing = account_by_username(username);
  AdminAccount account{existing ? existing->account_id : next_id(TableId::AdminAccounts),
                       std::string(username),
                       existing && verify_password(existing->password_hash, password)
                           ? existing->password_hash
                           : hash_password(password, options_.password_cost),
                       role};
  Batch batch;
  batch.put(account);
  commit(batch);
  return account;
}

std::optional<AdminAccount> Registry::account_by_username(std::string_view username) const {
  std::shared_lock lock(accounts_.mu);
  for (const auto& [id, a] : accounts_.rows) {
    if (a.username == username) return a;
  }
  return std::nullopt;
}

// -- units --------------------------------------------------------------------

SeedReport Registry::seed_units(std::string_view csv) {
  SeedReport report;
  const auto rows = detail::read_delimited(csv, ',');
  require_header(rows, {"unit_id", "kind", "lat", "lon"}, report);
  if (!report.errors.empty()) return report;
  each_data_row(rows, 4, report, [this](const std::vector<std::string>& c) {
    auto kind = unit_kind_from(c[1]);
    if (!kind) invalid("unit kind must be car, boat_life or helicopter");
    auto existing = unit(c[0]);
    put_unit(SuccoringUnit{c[0], *kind, geo::validate_point(c[2], c[3]),
                           existing ? existing->status : UnitStatus::Available});
  });
  return report;
}

void Registry::put_unit(const SuccoringUnit& unit) {
  Batch batch;
  batch.put(unit);
  commit(batch);
}

std::optional<SuccoringUnit> Registry::unit(std::string_view unit_id) const {
  return get<SuccoringUnit>(unit_id);
}

std::vector<SuccoringUnit> Registry::units() const { return all<SuccoringUnit>(); }

// -- requests, appointments, advice -----------------------------------------

void Registry::put_request(const HelpRequest& request) {
  Batch batch;
  batch.put(request);
  commit(batch);
}

std::optional<HelpRequest> Registry::request(std::string_view request_id) const {
  return get<HelpRequest>(request_id);
}

std::vector<HelpRequest> Registry::requests() const { return all<HelpRequest>(); }

void Registry::put_appointment(const Appointment& appointment) {
  Batch batch;
  batch.put(appointment);
  commit(batch);
}

std::vector<Appointment> Registry::appointments() const { return all<Appointment>(); }

std::vector<Appointment> Registry::appointments_of(std::string_view patient_id) const {
  std::vector<Appointment> out;
  std::shared_lock lock(appointments_.mu);
  for (const auto& [id, a] : appointments_.rows) {
    if (a.patient_id == patient_id) out.push_back(a);
  }
  return out;
}

void Registry::put_advice(const AdviceEntry& entry) {
  Batch batch;
  batch.put(entry);
  commit(batch);
}

std::vector<AdviceEntry> Registry::advice() const { return all<AdviceEntry>(); }

// -- notifications --------------------------------------------------------------

NotificationRecord Registry::make_notification(const NotificationDraft& draft) {
  return NotificationRecord{next_id(TableId::Notifications),
                            draft.recipient_phone,
                            "soip",
                            draft.template_id,
                            draft.language,
                            draft.payload,
                            draft.ref,
                            DeliveryStatus::Queued,
                            0,
                            clock_->now(),
                            std::nullopt};
}

NotificationRecord Registry::append_notification(const NotificationDraft& draft) {
  NotificationRecord record = make_notification(draft);
  Batch batch;
  batch.put(record);
  commit(batch);
  return record;
}

NotificationRecord Registry::finish_notification(std::string_view id, DeliveryStatus status,
                                                 int attempts) {
  auto current = notification(id);
  if (!current) throw Error(ErrorCode::NotFound, "no notification " + std::string(id));
  NotificationRecord next = *current;
  next.status = status;
  next.attempts = attempts;
  if (status == DeliveryStatus::Sent) next.sent_at = clock_->now();
  Batch batch;
  batch.put(next).require([this, id = next.notification_id] {
    auto row = notification(id);
    if (!row || row->status != DeliveryStatus::Queued) {
      throw Error(ErrorCode::IllegalTransition, "notification " + id + " is already terminal");
    }
  });
  commit(batch);
  return next;
}

NotificationRecord Registry::mark_sent(std::string_view notification_id, int attempts) {
  return finish_notification(notification_id, DeliveryStatus::Sent, attempts);
}

NotificationRecord Registry::mark_failed(std::string_view notification_id, int attempts) {
  return finish_notification(notification_id, DeliveryStatus::Failed, attempts);
}

std::optional<NotificationRecord> Registry::notification(std::string_view notification_id) const {
  return get<NotificationRecord>(notification_id);
}

std::vector<NotificationRecord> Registry::notifications() const {
  return all<NotificationRecord>();
}

std::vector<NotificationRecord> Registry::queued_notifications() const {
  std::vector<NotificationRecord> out;
  std::shared_lock lock(notifications_.mu);
  for (const auto& [id, n] : notifications_.rows) {
    if (n.status == DeliveryStatus::Queued) out.push_back(n);
  }
  return out;
}

// -- patient files ----------------------------------------------------------------

PatientFile Registry::add_patient_file(std::string_view patient_id, std::string_view doctor_id,
                                       std::string_view request_id, std::string_view notes) {
  if (notes.empty() || !protocol::is_valid_utf8(notes)) invalid("notes are empty");
  PatientFile file{next_id(TableId::PatientFiles), std::string(patient_id),
                   std::string(doctor_id),         std::string(request_id),
                   std::string(notes),             clock_->now()};
  Batch batch;
  batch.put(file);
  commit(batch);
  return file;
}

std::vector<PatientFile> Registry::patient_files() const { return all<PatientFile>(); }

// -- dump / restore -----------------------------------------------------------------

void Registry::dump(std::ostream& out) const {
  for_each_row_type([&]<class Row>(std::type_identity<Row>) {
    const auto name = table_name(TableTraits<Row>::id);
    for (const Row& row : all<Row>()) {
      out << "{\"table\":\"" << name << "\",\"data\":" << encode_row(row) << "}\n";
    }
  });
}

std::size_t Registry::restore(std::istream& in) {
  std::vector<std::pair<TableId, std::pair<std::string, std::string>>> rows;
  std::vector<std::function<void()>> appliers;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(line);
    } catch (const nlohmann::ordered_json::exception&) {
      invalid("dump line " + std::to_string(line_no) + " is not JSON");
    }
    if (!j.is_object() || !j.contains("table") || !j.contains("data") ||
        !j["table"].is_string()) {
      invalid("dump line " + std::to_string(line_no) + " lacks table/data");
    }
    const std::string name = j["table"].get<std::string>();
    const std::string body = j["data"].dump();
    bool known = false;
    for_each_row_type([&]<class Row>(std::type_identity<Row>) {
      if (table_name(TableTraits<Row>::id) != name) return;
      known = true;
      Row row = [&] {
        try {
          return decode_row<Row>(body);
        } catch (const Error& e) {
          invalid("dump line " + std::to_string(line_no) + ": " + e.what());
        }
      }();
      rows.push_back({TableTraits<Row>::id, {TableTraits<Row>::key(row), encode_row(row)}});
      appliers.push_back([this, row = std::move(row)] { apply(row); });
    });
    if (!known) invalid("dump line " + std::to_string(line_no) + ": unknown table " + name);
  }
  write_rows(rows);
  for (auto& f : appliers) f();
  load_tables();
  return rows.size();
}

}  // namespace pwcare::registry
