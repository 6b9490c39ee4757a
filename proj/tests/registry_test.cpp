#include <gtest/gtest.h>

#include <latch>
#include <random>
#include <sstream>
#include <thread>

#include "pwcare/registry.hpp"
#include "support/fixtures.hpp"

namespace {

using namespace pwcare;
using namespace pwcare::registry;
using namespace pwcare::testing;

class RegistryTest : public ::testing::Test {
 protected:
  ManualClock clock{ts("2014-01-20T08:00:00Z")};

  Registry::Options options(std::string path = ":memory:") {
    return {std::move(path), &clock, PasswordCost::minimal()};
  }

  RegistrationData rawshan() {
    return {"Rawshan", "+9647501234567", "+9647509999999", geo::GeoPoint(kPanelLat, kPanelLon),
            date("2013-10-01"), Language::Ku, "C1"};
  }
};

TEST_F(RegistryTest, CreatePatientStoresFieldsAndFreshId) {
  Registry reg(options());
  ASSERT_EQ(reg.seed_facilities(kFacilitiesCsv).ingested, 4u);
  const PatientRecord p = reg.create_patient(rawshan());
  EXPECT_EQ(p.patient_id, "P000001");
  EXPECT_EQ(p.name, "Rawshan");
  EXPECT_EQ(p.home, geo::GeoPoint(kPanelLat, kPanelLon));
  EXPECT_EQ(format_date(p.lmp), "2013-10-01");
  EXPECT_EQ(p.registered_at, clock.now());
  EXPECT_TRUE(p.active);

  auto second = rawshan();
  second.phone = "+9647500000002";
  EXPECT_EQ(reg.create_patient(second).patient_id, "P000002");
}

TEST_F(RegistryTest, CreatePatientErrors) {
  Registry reg(options());
  reg.seed_facilities(kFacilitiesCsv);
  reg.create_patient(rawshan());
  EXPECT_EQ(code_of([&] { reg.create_patient(rawshan()); }), ErrorCode::DuplicatePhone);

  auto old = rawshan();
  old.phone = "+9647500000003";
  old.lmp = date_of(clock.now() - std::chrono::weeks{60});
  EXPECT_EQ(code_of([&] { reg.create_patient(old); }), ErrorCode::OutOfPregnancyRange);

  auto future = old;
  future.lmp = date("2014-01-21");
  EXPECT_EQ(code_of([&] { reg.create_patient(future); }), ErrorCode::FutureLmp);

  auto orphan = old;
  orphan.lmp = date("2013-12-01");
  orphan.care_center_id = "H1";  // a hospital, not a care center
  EXPECT_EQ(code_of([&] { reg.create_patient(orphan); }), ErrorCode::InvalidField);
  EXPECT_EQ(reg.patients().size(), 1u);
}

TEST_F(RegistryTest, FindPatientByIdAndPhone) {
  Registry reg(options());
  reg.seed_facilities(kFacilitiesCsv);
  const auto p = reg.create_patient(rawshan());
  EXPECT_EQ(reg.find_patient_by_id(p.patient_id), p);
  EXPECT_EQ(reg.find_patient_by_phone("+9647501234567"), reg.find_patient_by_id(p.patient_id));
  EXPECT_EQ(code_of([&] { reg.find_patient_by_id("P999999"); }), ErrorCode::NotFound);
  EXPECT_EQ(code_of([&] { reg.find_patient_by_phone("+1000000"); }), ErrorCode::NotFound);
}

TEST_F(RegistryTest, SeedFacilitiesIsIdempotentAndReportsBadRows) {
  Registry reg(options());
  const std::string three =
      "facility_id,kind,name,lat,lon,contact_phone\n"
      "F1,hospital,A,36.1,44.0,+9646600000001\n"
      "F2,care_center,\"B, north\",36.2,44.1,+9646600000002\n"
      "F3,care_center,C,36.3,44.2,+9646600000003\n";
  EXPECT_EQ(reg.seed_facilities(three).ingested, 3u);
  EXPECT_EQ(reg.seed_facilities(three).ingested, 3u);
  EXPECT_EQ(reg.facilities().size(), 3u);
  EXPECT_EQ(reg.facility("F2")->name, "B, north");

  Registry fresh(options());
  const auto report = fresh.seed_facilities(
      "facility_id,kind,name,lat,lon,contact_phone\n"
      "F1,hospital,A,36.1,44.0,+9646600000001\n"
      "F2,hospital,B,95,44.0,+9646600000002\n"
      "F3,care_center,C,36.3,44.2,+9646600000003\n");
  EXPECT_EQ(report.ingested, 2u);
  ASSERT_EQ(report.errors.size(), 1u);
  EXPECT_EQ(report.errors[0].line, 3);
  EXPECT_EQ(report.errors[0].code, ErrorCode::OutOfRange);
  EXPECT_EQ(fresh.facilities().size(), 2u);

  EXPECT_EQ(fresh.seed_facilities("id,kind\nF9,hospital\n").errors.size(), 1u);
}

TEST_F(RegistryTest, NotificationLifecycle) {
  Registry reg(options());
  const auto queued = reg.append_notification({"+9647501234567", "help_ack", Language::En, "hi", "R1"});
  EXPECT_EQ(queued.status, DeliveryStatus::Queued);
  EXPECT_FALSE(queued.sent_at);
  EXPECT_EQ(queued.channel, "soip");

  clock.advance(std::chrono::seconds{5});
  const auto sent = reg.mark_sent(queued.notification_id, 1);
  EXPECT_EQ(sent.status, DeliveryStatus::Sent);
  ASSERT_TRUE(sent.sent_at);
  EXPECT_EQ(*sent.sent_at, clock.now());
  EXPECT_EQ(sent.payload, "hi");

  const auto other = reg.append_notification({"+9647501234567", "help_ack", Language::En, "x", "R1"});
  const auto failed = reg.mark_failed(other.notification_id, 3);
  EXPECT_EQ(failed.status, DeliveryStatus::Failed);
  EXPECT_FALSE(failed.sent_at);
  EXPECT_EQ(failed.attempts, 3);

  EXPECT_EQ(code_of([&] { reg.mark_sent(other.notification_id, 4); }), ErrorCode::IllegalTransition);
  EXPECT_TRUE(reg.queued_notifications().empty());
}

TEST_F(RegistryTest, NotificationLogIsAppendOnly) {
  Registry reg(options());
  auto n = reg.append_notification({"+9647501234567", "help_ack", Language::En, "hi", "R1"});
  n.payload = "tampered";
  Batch batch;
  batch.put(n);
  EXPECT_EQ(code_of([&] { reg.commit(batch); }), ErrorCode::InvalidField);
  EXPECT_EQ(reg.notification(n.notification_id)->payload, "hi");
}

TEST_F(RegistryTest, ReferentialIntegrityOnWrite) {
  Registry reg(options());
  reg.seed_facilities(kFacilitiesCsv);
  EXPECT_EQ(code_of([&] { reg.put_doctor("dr.a", "pw", "C1", "+9647700000001"); }),
            ErrorCode::InvalidField);
  EXPECT_EQ(code_of([&] { reg.put_doctor("dr.a", "pw", "H9", "+9647700000001"); }),
            ErrorCode::InvalidField);
  const auto p = reg.create_patient(rawshan());
  HelpRequest r{"R000001", p.patient_id, p.home, clock.now(), clock.now(), clock.now(),
                RequestState::Located, "H404", "", {{RequestState::Located, clock.now(), "server", ""}}};
  EXPECT_EQ(code_of([&] { reg.put_request(r); }), ErrorCode::InvalidField);
  r.hospital_id = "H1";
  EXPECT_NO_THROW(reg.put_request(r));
  r.state = RequestState::Dispatched;
  r.history.push_back({RequestState::Dispatched, clock.now(), "op", ""});
  EXPECT_EQ(code_of([&] { reg.put_request(r); }), ErrorCode::InvalidField);  // no unit
}

TEST_F(RegistryTest, PatientFileRequiresDoctorOfAssignedHospital) {
  Registry reg(options());
  reg.seed_facilities(kFacilitiesCsv);
  const auto p = reg.create_patient(rawshan());
  const auto near = reg.put_doctor("dr.near", "pw1", "H1", "+9647700000001");
  const auto far = reg.put_doctor("dr.far", "pw2", "H2", "+9647700000002");
  reg.put_request({"R000001", p.patient_id, p.home, clock.now(), clock.now(), clock.now(),
                   RequestState::Located, "H1", "", {{RequestState::Located, clock.now(), "server", ""}}});
  EXPECT_EQ(reg.add_patient_file(p.patient_id, near.doctor_id, "R000001", "stable").doctor_id,
            near.doctor_id);
  EXPECT_EQ(code_of([&] { reg.add_patient_file(p.patient_id, far.doctor_id, "R000001", "x"); }),
            ErrorCode::Forbidden);
}

TEST_F(RegistryTest, PasswordHashVerifiesOnlyOriginal) {
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> ch(33, 126), len(1, 16);
  for (int trial = 0; trial < 20; ++trial) {
    std::string pw;
    for (int k = len(rng); k > 0; --k) pw += static_cast<char>(ch(rng));
    const std::string hash = hash_password(pw, PasswordCost::minimal());
    EXPECT_NE(hash, pw);
    EXPECT_EQ(hash.rfind("$argon2id$", 0), 0u);
    EXPECT_TRUE(verify_password(hash, pw));
    for (std::size_t i = 0; i < pw.size(); ++i) {
      std::string bad = pw;
      bad[i] = static_cast<char>(bad[i] == '~' ? '!' : bad[i] + 1);
      EXPECT_FALSE(verify_password(hash, bad)) << pw << " vs " << bad;
    }
  }
}

TEST_F(RegistryTest, AccountsUpsertByUsernameAndKeepHash) {
  Registry reg(options());
  reg.seed_facilities(kFacilitiesCsv);
  const auto a = reg.put_doctor("dr.a", "secret", "H1", "+9647700000001");
  const auto b = reg.put_doctor("dr.a", "secret", "H1", "+9647700000001");
  EXPECT_EQ(a, b);
  EXPECT_EQ(reg.doctors().size(), 1u);
  const auto report = reg.seed_accounts("username,password,role\nop1,pw,emc_operator\ndr.a,pw,admin\n");
  EXPECT_EQ(report.ingested, 1u);
  EXPECT_EQ(report.errors.size(), 1u);  // username collides with the doctor
}

PatientRecord random_patient(std::mt19937_64& rng, int i) {
  std::uniform_real_distribution<double> lat(-89, 89), lon(-179, 180);
  const std::vector<std::string> names{"Rawshan", "ڕەوشەن", "شيماء", "Nazê", "Hêvî \"Q\""};
  return PatientRecord{"",
                       names[i % names.size()] + std::to_string(i),
                       "+96475" + std::to_string(10000000 + i),
                       i % 2 ? "" : "+96477" + std::to_string(10000000 + i),
                       geo::GeoPoint(lat(rng), lon(rng)),
                       date("2013-10-01"),
                       static_cast<Language>(i % 3),
                       "C1",
                       ts("2014-01-20T08:00:00Z"),
                       true};
}

TEST_F(RegistryTest, RecordsSurviveRestartUnchanged) {
  TempDir dir;
  const std::string db = dir.file("registry.db");
  std::vector<PatientRecord> created;
  std::vector<NotificationRecord> notes;
  {
    Registry reg(options(db));
    reg.seed_facilities(kFacilitiesCsv);
    reg.seed_units("unit_id,kind,lat,lon\nU1,car,36.2,44.0\nU2,helicopter,36.1,44.1\n");
    reg.put_doctor("dr.a", "pw", "H1", "+9647700000001");
    std::mt19937_64 rng(11);
    for (int i = 0; i < 200; ++i) {
      auto p = random_patient(rng, i);
      created.push_back(reg.create_patient({p.name, p.phone, p.husband_phone, p.home, p.lmp,
                                            p.language, p.care_center_id}));
      notes.push_back(reg.append_notification(
          {p.phone, "weekly_advice", p.language, "payload " + p.name, created.back().patient_id}));
    }
    reg.mark_sent(notes[0].notification_id, 1);
    notes[0] = *reg.notification(notes[0].notification_id);
  }
  Registry reopened(options(db));
  for (const auto& p : created) EXPECT_EQ(reopened.find_patient_by_id(p.patient_id), p);
  for (const auto& n : notes) EXPECT_EQ(*reopened.notification(n.notification_id), n);
  EXPECT_EQ(reopened.units().size(), 2u);
  EXPECT_EQ(reopened.doctors().size(), 1u);
  // Counters resume after the highest persisted id.
  EXPECT_EQ(reopened.next_id(TableId::Patients), "P000201");
}

TEST_F(RegistryTest, DumpRestoreDumpIsByteIdentical) {
  Registry reg(options());
  reg.seed_facilities(kFacilitiesCsv);
  reg.seed_units("unit_id,kind,lat,lon\nU1,boat_life,36.2,44.0\n");
  reg.put_doctor("dr.a", "pw", "H1", "+9647700000001");
  reg.put_account("op1", "pw", Role::EmcOperator);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20; ++i) {
    auto p = random_patient(rng, i);
    reg.create_patient({p.name, p.phone, p.husband_phone, p.home, p.lmp, p.language, "C2"});
  }
  reg.put_request({"R000001", "P000001", geo::GeoPoint(kPanelLat, kPanelLon),
                   ts("2014-01-20T07:59:00Z"), clock.now(), ts("2014-01-20T07:59:00Z"),
                   RequestState::Located, "H1", "",
                   {{RequestState::Received, clock.now(), "server", "client_ts=2014-01-20T07:59:00Z"},
                    {RequestState::Located, clock.now(), "server", ""}}});
  reg.put_appointment({"A000001", "P000001", "C2", date("2014-01-22"), "09:00",
                       AppointmentState::Scheduled, clock.now()});
  reg.put_advice({"V000001", 1, 0, 12, Language::Ar, "نص"});
  reg.append_notification({"+9647501234567", "help_ack", Language::En, "hi", "R000001"});
  reg.add_patient_file("P000001", "D000001", "R000001", "notes with \"quotes\"\tand tab");

  std::ostringstream first;
  reg.dump(first);
  Registry copy(options());
  std::istringstream in(first.str());
  EXPECT_GT(copy.restore(in), 30u);
  std::ostringstream second;
  copy.dump(second);
  EXPECT_EQ(first.str(), second.str());
  EXPECT_EQ(copy.next_id(TableId::Patients), "P000021");
}

TEST_F(RegistryTest, RestoreRejectsGarbage) {
  Registry reg(options());
  std::istringstream bad("{\"table\":\"nope\",\"data\":{}}\n");
  EXPECT_EQ(code_of([&] { reg.restore(bad); }), ErrorCode::InvalidField);
  std::istringstream worse("not json\n");
  EXPECT_EQ(code_of([&] { reg.restore(worse); }), ErrorCode::InvalidField);
}

TEST_F(RegistryTest, ConcurrentDuplicateRegistrationsYieldOneRecord) {
  Registry reg(options());
  reg.seed_facilities(kFacilitiesCsv);
  constexpr int kThreads = 16;
  std::latch start(kThreads);
  std::atomic<int> ok{0}, dup{0};
  std::vector<std::thread> threads;
  for (int i = 0; i < kThreads; ++i) {
    threads.emplace_back([&] {
      start.arrive_and_wait();
      try {
        reg.create_patient(rawshan());
        ++ok;
      } catch (const Error& e) {
        if (e.code() == ErrorCode::DuplicatePhone) ++dup;
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(ok.load(), 1);
  EXPECT_EQ(dup.load(), kThreads - 1);
  EXPECT_EQ(reg.patients().size(), 1u);
}

}  // namespace
