#pragma once

#include <array>
#include <atomic>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "pwcare/error.hpp"
#include "pwcare/records.hpp"

struct sqlite3;

namespace pwcare::registry {

// Argon2id work factors. `minimal` exists for tests and fleet runs where
// thousands of hashes are computed.
struct PasswordCost {
  unsigned long long opslimit;
  std::size_t memlimit;

  static PasswordCost interactive() noexcept;
  static PasswordCost minimal() noexcept;
};

std::string hash_password(std::string_view password, PasswordCost cost);
bool verify_password(std::string_view hash, std::string_view password) noexcept;

struct RegistrationData {
  std::string name;
  std::string phone;
  std::string husband_phone;
  geo::GeoPoint home{0, 0};
  Date lmp;
  Language language = Language::En;
  std::string care_center_id;
};

struct RowError {
  int line = 0;  // 1-based line in the source file
  ErrorCode code = ErrorCode::InvalidField;
  std::string message;
};

struct SeedReport {
  std::size_t ingested = 0;
  std::vector<RowError> errors;
};

struct NotificationDraft {
  std::string recipient_phone;
  std::string template_id;
  Language language = Language::En;
  std::string payload;
  std::string ref;
};

// Table order is the dump order and the lock order.
enum class TableId : std::size_t {
  Patients,
  Facilities,
  Doctors,
  Units,
  HelpRequests,
  Appointments,
  AdviceCatalog,
  Notifications,
  PatientFiles,
  AdminAccounts,
};

inline constexpr std::size_t kTableCount = 10;

std::string_view table_name(TableId id) noexcept;

template <class Row>
struct TableTraits;

class Registry;

// Atomic multi-table write. Rows are validated (referential integrity)
// and `require` checks run after the writer gates of every touched table
// are held, so check-then-write sequences are race free.
class Batch {
 public:
  template <class Row>
  Batch& put(Row row);

  Batch& require(std::function<void()> check) {
    checks_.push_back(std::move(check));
    return *this;
  }

  bool empty() const noexcept { return writes_.empty(); }

 private:
  friend class Registry;

  struct Write {
    TableId table;
    std::string id;
    std::function<std::string()> encode;
    std::function<void(const Registry&)> validate;
    std::function<void(Registry&)> apply;
  };

  std::vector<Write> writes_;
  std::vector<std::function<void()>> checks_;
};

class Registry {
 public:
  struct Options {
    std::string path = ":memory:";
    const Clock* clock = nullptr;  // defaults to the system clock
    PasswordCost password_cost = PasswordCost::interactive();
  };

  explicit Registry(Options options);
  ~Registry();
  Registry(const Registry&) = delete;
  Registry& operator=(const Registry&) = delete;

  const Clock& clock() const noexcept { return *clock_; }
  PasswordCost password_cost() const noexcept { return options_.password_cost; }

  // Server-generated identifiers: prefix + zero-padded counter, monotonic per kind.
  std::string next_id(TableId table);

  void commit(Batch& batch);

  // -- patients --------------------------------------------------------
  // Throws DuplicatePhone, InvalidField (validation or unknown care center).
  PatientRecord create_patient(const RegistrationData& reg);
  PatientRecord find_patient_by_id(std::string_view patient_id) const;     // NotFound
  PatientRecord find_patient_by_phone(std::string_view phone) const;       // NotFound
  std::optional<PatientRecord> patient(std::string_view patient_id) const;
  std::vector<PatientRecord> patients() const;
  void put_patient(const PatientRecord& patient);

  // -- facilities ------------------------------------------------------
  // CSV header: facility_id,kind,name,lat,lon,contact_phone. Idempotent upsert.
  SeedReport seed_facilities(std::string_view csv);
  void put_facility(const Facility& facility);
  std::optional<Facility> facility(std::string_view facility_id) const;
  std::vector<Facility> facilities() const;
  std::vector<geo::Candidate> facility_candidates() const;

  // -- staff accounts --------------------------------------------------
  // CSV header: username,password,hospital_id,phone. Upsert keyed by username.
  SeedReport seed_doctors(std::string_view csv);
  DoctorAccount put_doctor(std::string_view username, std::string_view password,
                           std::string_view hospital_id, std::string_view phone);
  std::optional<DoctorAccount> doctor(std::string_view doctor_id) const;
  std::optional<DoctorAccount> doctor_by_username(std::string_view username) const;
  std::vector<DoctorAccount> doctors_of(std::string_view hospital_id) const;
  std::vector<DoctorAccount> doctors() const;

  // CSV header: username,password,role  (role: emc_operator | admin).
  SeedReport seed_accounts(std::string_view csv);
  AdminAccount put_account(std::string_view username, std::string_view password, Role role);
  std::optional<AdminAccount> account_by_username(std::string_view username) const;

  // -- succoring units -------------------------------------------------
  // CSV header: unit_id,kind,lat,lon. Existing units keep their status.
  SeedReport seed_units(std::string_view csv);
  void put_unit(const SuccoringUnit& unit);
  std::optional<SuccoringUnit> unit(std::string_view unit_id) const;
  std::vector<SuccoringUnit> units() const;

  // -- help requests ---------------------------------------------------
  void put_request(const HelpRequest& request);
  std::optional<HelpRequest> request(std::string_view request_id) const;
  std::vector<HelpRequest> requests() const;

  // -- appointments ----------------------------------------------------
  void put_appointment(const Appointment& appointment);
  std::vector<Appointment> appointments() const;
  std::vector<Appointment> appointments_of(std::string_view patient_id) const;

  // -- advice catalog --------------------------------------------------
  void put_advice(const AdviceEntry& entry);
  std::vector<AdviceEntry> advice() const;

  // -- notification log (append-only) ----------------------------------
  NotificationRecord append_notification(const NotificationDraft& draft);
  NotificationRecord make_notification(const NotificationDraft& draft);  // id assigned, not stored
  NotificationRecord mark_sent(std::string_view notification_id, int attempts);
  NotificationRecord mark_failed(std::string_view notification_id, int attempts);
  std::optional<NotificationRecord> notification(std::string_view notification_id) const;
  std::vector<NotificationRecord> notifications() const;
  std::vector<NotificationRecord> queued_notifications() const;

  // -- patient files ---------------------------------------------------
  // The doctor must belong to the hospital assigned on the request.
  PatientFile add_patient_file(std::string_view patient_id, std::string_view doctor_id,
                               std::string_view request_id, std::string_view notes);
  std::vector<PatientFile> patient_files() const;

  // -- dump / restore --------------------------------------------------
  // One JSON object per line: {"table":...,"data":{...}}; tables in
  // TableId order, rows in id order.
  void dump(std::ostream& out) const;
  // Loads a dump verbatim (no referential checks); returns rows loaded.
  std::size_t restore(std::istream& in);

  template <class Row>
  std::optional<Row> get(std::string_view id) const;
  template <class Row>
  std::vector<Row> all() const;

 private:
  struct TableBase {
    std::mutex gate;
    mutable std::shared_mutex mu;
    std::atomic<std::uint64_t> counter{0};
  };
  template <class Row>
  struct Table : TableBase {
    std::map<std::string, Row, std::less<>> rows;
  };

  template <class Row>
  Table<Row>& table() const;

  template <class Row>
  void apply(const Row& row);

  void validate(const PatientRecord& row) const;
  void validate(const Facility& row) const;
  void validate(const DoctorAccount& row) const;
  void validate(const SuccoringUnit& row) const;
  void validate(const HelpRequest& row) const;
  void validate(const Appointment& row) const;
  void validate(const AdviceEntry& row) const;
  void validate(const NotificationRecord& row) const;
  void validate(const PatientFile& row) const;
  void validate(const AdminAccount& row) const;

  void open_database();
  void load_tables();
  void write_rows(const std::vector<std::pair<TableId, std::pair<std::string, std::string>>>& rows);
  NotificationRecord finish_notification(std::string_view id, DeliveryStatus status, int attempts);

  friend class Batch;

  Options options_;
  std::unique_ptr<Clock> owned_clock_;
  const Clock* clock_;
  sqlite3* db_ = nullptr;
  std::mutex db_mu_;

  mutable Table<PatientRecord> patients_;
  mutable Table<Facility> facilities_;
  mutable Table<DoctorAccount> doctors_;
  mutable Table<SuccoringUnit> units_;
  mutable Table<HelpRequest> requests_;
  mutable Table<Appointment> appointments_;
  mutable Table<AdviceEntry> advice_;
  mutable Table<NotificationRecord> notifications_;
  mutable Table<PatientFile> files_;
  mutable Table<AdminAccount> accounts_;
};

// -- template plumbing ---------------------------------------------------

#define PWCARE_TABLE_TRAITS(Row, Id, field)                          \
  template <>                                                               \
  struct TableTraits<Row> {                                                 \
    static constexpr TableId id = TableId::Id;                              \
    static const std::string& key(const Row& r) { return r.field; }         \
  };

PWCARE_TABLE_TRAITS(PatientRecord, Patients, patient_id)
PWCARE_TABLE_TRAITS(Facility, Facilities, facility_id)
PWCARE_TABLE_TRAITS(DoctorAccount, Doctors, doctor_id)
PWCARE_TABLE_TRAITS(SuccoringUnit, Units, unit_id)
PWCARE_TABLE_TRAITS(HelpRequest, HelpRequests, request_id)
PWCARE_TABLE_TRAITS(Appointment, Appointments, appointment_id)
PWCARE_TABLE_TRAITS(AdviceEntry, AdviceCatalog, advice_id)
PWCARE_TABLE_TRAITS(NotificationRecord, Notifications, notification_id)
PWCARE_TABLE_TRAITS(PatientFile, PatientFiles, file_id)
PWCARE_TABLE_TRAITS(AdminAccount, AdminAccounts, account_id)

#undef PWCARE_TABLE_TRAITS

// Row JSON codecs (stable field order), defined in records_json.cpp.
std::string encode_row(const PatientRecord& r);
std::string encode_row(const Facility& r);
std::string encode_row(const DoctorAccount& r);
std::string encode_row(const SuccoringUnit& r);
std::string encode_row(const HelpRequest& r);
std::string encode_row(const Appointment& r);
std::string encode_row(const AdviceEntry& r);
std::string encode_row(const NotificationRecord& r);
std::string encode_row(const PatientFile& r);
std::string encode_row(const AdminAccount& r);

template <class Row>
Row decode_row(std::string_view json);

template <class Row>
Batch& Batch::put(Row row) {
  const std::string id = TableTraits<Row>::key(row);
  auto shared = std::make_shared<Row>(std::move(row));
  writes_.push_back(Write{
      TableTraits<Row>::id, id, [shared] { return encode_row(*shared); },
      [shared](const Registry& reg) { reg.validate(*shared); },
      [shared](Registry& reg) { reg.apply(*shared); }});
  return *this;
}

template <class Row>
Registry::Table<Row>& Registry::table() const {
  if constexpr (std::is_same_v<Row, PatientRecord>) return patients_;
  else if constexpr (std::is_same_v<Row, Facility>) return facilities_;
  else if constexpr (std::is_same_v<Row, DoctorAccount>) return doctors_;
  else if constexpr (std::is_same_v<Row, SuccoringUnit>) return units_;
  else if constexpr (std::is_same_v<Row, HelpRequest>) return requests_;
  else if constexpr (std::is_same_v<Row, Appointment>) return appointments_;
  else if constexpr (std::is_same_v<Row, AdviceEntry>) return advice_;
  else if constexpr (std::is_same_v<Row, NotificationRecord>) return notifications_;
  else if constexpr (std::is_same_v<Row, PatientFile>) return files_;
  else return accounts_;
}

template <class Row>
std::optional<Row> Registry::get(std::string_view id) const {
  auto& t = table<Row>();
  std::shared_lock lock(t.mu);
  auto it = t.rows.find(id);
  if (it == t.rows.end()) return std::nullopt;
  return it->second;
}

template <class Row>
std::vector<Row> Registry::all() const {
  auto& t = table<Row>();
  std::shared_lock lock(t.mu);
  std::vector<Row> out;
  out.reserve(t.rows.size());
  for (const auto& [id, row] : t.rows) out.push_back(row);
  return out;
}

template <class Row>
void Registry::apply(const Row& row) {
  auto& t = table<Row>();
  std::unique_lock lock(t.mu);
  t.rows.insert_or_assign(TableTraits<Row>::key(row), row);
}

}  // namespace pwcare::registry
