#include <gtest/gtest.h>

#include <latch>
#include <random>
#include <thread>

#include "pwcare/dispatch.hpp"
#include "support/fixtures.hpp"
#include "support/geo_oracle.hpp"

namespace {

using namespace pwcare;
using namespace pwcare::testing;
using pwcare::dispatch::Dispatcher;
using pwcare::registry::Registry;

class DispatchTest : public ::testing::Test {
 protected:
  ManualClock clock{ts("2014-01-25T05:20:00Z")};
  Registry reg{{":memory:", &clock, registry::PasswordCost::minimal()}};
  protocol::TemplateCatalog templates = protocol::TemplateCatalog::defaults();
  EventLog events{nullptr, &clock};
  Dispatcher dispatcher{reg, templates, nullptr, &events};
  PatientRecord patient;

  void SetUp() override {
    reg.seed_facilities(kFacilitiesCsv);
    reg.put_doctor("dr.shilan", "pw1", "H1", "+9647700000001");
    reg.put_doctor("dr.karwan", "pw2", "H1", "+9647700000002");
    reg.seed_units("unit_id,kind,lat,lon\nU1,car,36.19,44.01\nU2,helicopter,36.19,44.01\n"
                   "U3,boat_life,36.19,44.01\n");
    patient = reg.create_patient({"Rawshan", "+9647501234567", "+9647509999999",
                                  geo::GeoPoint(kPanelLat, kPanelLon), date("2013-10-01"),
                                  Language::Ku, "C1"});
  }

  protocol::InboundMessage help(const std::string& patient_id, const char* client_ts,
                                double lat = kPanelLat, double lon = kPanelLon) {
    return protocol::parse_inbound(
        "HELP|" + patient_id + "|" + protocol::format_degrees(lat) + "|" +
            protocol::format_degrees(lon) + "|" + client_ts,
        "+9647501234567", clock.now());
  }

  std::vector<NotificationRecord> notifications_for(const std::string& ref) {
    std::vector<NotificationRecord> out;
    for (auto& n : reg.notifications()) {
      if (n.ref == ref) out.push_back(n);
    }
    return out;
  }

  std::size_t units_dispatched() {
    std::size_t n = 0;
    for (auto& u : reg.units()) n += u.status == UnitStatus::Dispatched;
    return n;
  }
  std::size_t requests_dispatched() {
    std::size_t n = 0;
    for (auto& r : reg.requests()) n += r.state == RequestState::Dispatched;
    return n;
  }
};

TEST_F(DispatchTest, HelpIsLocatedAtNearestHospitalWithFullFanOut) {
  const auto r = dispatcher.ingest_help(help(patient.patient_id, "2014-01-25T05:19:55Z"));
  EXPECT_EQ(r.state, RequestState::Located);
  EXPECT_EQ(r.hospital_id, "H1");
  EXPECT_EQ(reg.facility(r.hospital_id)->name, "Maternity Hospital");
  ASSERT_EQ(r.history.size(), 2u);
  EXPECT_EQ(r.history[0].state, RequestState::Received);
  EXPECT_EQ(r.history[1].state, RequestState::Located);

  const auto rows = notifications_for(r.request_id);
  ASSERT_EQ(rows.size(), 5u);
  std::multiset<std::string> targets;
  for (const auto& n : rows) {
    targets.insert(n.template_id + ":" + n.recipient_phone);
    EXPECT_EQ(n.status, DeliveryStatus::Queued);
  }
  EXPECT_EQ(targets, (std::multiset<std::string>{
                         "notify_hospital:+9646600000001", "notify_doctor:+9647700000001",
                         "notify_doctor:+9647700000002", "notify_husband:+9647509999999",
                         "help_ack:+9647501234567"}));
  for (const auto& n : rows) {
    if (n.template_id == "help_ack" || n.template_id == "notify_husband") {
      EXPECT_EQ(n.language, Language::Ku);
    }
  }
}

TEST_F(DispatchTest, UnknownPatientGetsRegistrationPrompt) {
  EXPECT_EQ(code_of([&] { dispatcher.ingest_help(help("P999999", "2014-01-25T05:19:55Z")); }),
            ErrorCode::UnknownPatient);
  const auto rows = notifications_for("P999999");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].template_id, "registration_prompt");
  EXPECT_TRUE(reg.requests().empty());
  EXPECT_EQ(events.count("help.unknown_patient"), 1u);
}

TEST_F(DispatchTest, DuplicateWithinWindowReturnsExistingRequest) {
  const auto first = dispatcher.ingest_help(help(patient.patient_id, "2014-01-25T05:19:55Z"));
  clock.advance(std::chrono::seconds{30});
  const auto again = dispatcher.ingest_help(help(patient.patient_id, "2014-01-25T05:19:55Z"));
  EXPECT_EQ(again.request_id, first.request_id);
  EXPECT_EQ(reg.requests().size(), 1u);
  EXPECT_EQ(notifications_for(first.request_id).size(), 5u);

  clock.advance(std::chrono::seconds{121});
  const auto late = dispatcher.ingest_help(help(patient.patient_id, "2014-01-25T05:19:55Z"));
  EXPECT_NE(late.request_id, first.request_id);

  const auto other = dispatcher.ingest_help(help(patient.patient_id, "2014-01-25T05:19:56Z"));
  EXPECT_NE(other.request_id, late.request_id);
}

TEST_F(DispatchTest, FutureClientTimestampIsClampedToServerClock) {
  const auto r = dispatcher.ingest_help(help(patient.patient_id, "2014-01-25T06:00:00Z"));
  EXPECT_EQ(r.request_time, r.received_time);
  EXPECT_EQ(r.received_time, clock.now());
  EXPECT_EQ(format_timestamp(r.client_ts), "2014-01-25T06:00:00Z");
  EXPECT_NE(r.history[0].note.find("2014-01-25T06:00:00Z"), std::string::npos);

  const auto past = dispatcher.ingest_help(help(patient.patient_id, "2014-01-20T05:19:55Z"));
  EXPECT_EQ(format_timestamp(past.request_time), "2014-01-20T05:19:55Z");
  EXPECT_GE(past.received_time, past.request_time);
}

TEST(DispatchParking, NoHospitalParksRequestUntilRecovery) {
  ManualClock clock{ts("2014-01-25T05:20:00Z")};
  Registry reg{{":memory:", &clock, registry::PasswordCost::minimal()}};
  auto templates = protocol::TemplateCatalog::defaults();
  EventLog events{nullptr, &clock};
  Dispatcher dispatcher{reg, templates, nullptr, &events};
  reg.seed_facilities("facility_id,kind,name,lat,lon,contact_phone\n"
                      "C1,care_center,Center,36.2,44.0,+9646600000011\n");
  const auto p = reg.create_patient({"Rawshan", "+9647501234567", "", geo::GeoPoint(36.2, 44.0),
                                     date("2013-10-01"), Language::En, "C1"});
  const auto msg = protocol::parse_inbound("HELP|" + p.patient_id + "|36.2|44|2014-01-25T05:19:55Z",
                                           "+9647501234567", clock.now());
  EXPECT_EQ(code_of([&] { dispatcher.ingest_help(msg); }), ErrorCode::EmptyCandidateSet);
  ASSERT_EQ(reg.requests().size(), 1u);
  EXPECT_EQ(reg.requests()[0].state, RequestState::Received);
  EXPECT_EQ(events.count("alert.no_hospital"), 1u);
  EXPECT_EQ(dispatcher.recover(), 0u);

  reg.seed_facilities("facility_id,kind,name,lat,lon,contact_phone\n"
                      "H1,hospital,Maternity Hospital,36.21,44.03,+9646600000001\n");
  EXPECT_EQ(dispatcher.recover(), 1u);
  const auto r = reg.requests()[0];
  EXPECT_EQ(r.state, RequestState::Located);
  // Hospital + patient ack; no doctors, no husband.
  EXPECT_EQ(reg.notifications().size(), 2u);
}

TEST_F(DispatchTest, AssignCompleteWalksStateMachine) {
  const auto r = dispatcher.ingest_help(help(patient.patient_id, "2014-01-25T05:19:55Z"));
  clock.advance(std::chrono::minutes{2});
  const auto d = dispatcher.assign_unit(r.request_id, "U1", "op1");
  EXPECT_EQ(d.state, RequestState::Dispatched);
  EXPECT_EQ(d.unit_id, "U1");
  EXPECT_EQ(d.history.back().actor, "op1");
  EXPECT_EQ(reg.unit("U1")->status, UnitStatus::Dispatched);
  EXPECT_EQ(units_dispatched(), requests_dispatched());

  clock.advance(std::chrono::minutes{30});
  const auto c = dispatcher.complete_request(r.request_id, "op1");
  EXPECT_EQ(c.state, RequestState::Complete);
  EXPECT_EQ(reg.unit("U1")->status, UnitStatus::Available);
  EXPECT_EQ(units_dispatched(), requests_dispatched());

  EXPECT_EQ(code_of([&] { dispatcher.complete_request(r.request_id, "op1"); }),
            ErrorCode::IllegalTransition);
  EXPECT_EQ(code_of([&] { dispatcher.assign_unit(r.request_id, "U2", "op1"); }),
            ErrorCode::IllegalTransition);
  EXPECT_EQ(code_of([&] { dispatcher.cancel_request(r.request_id, "op1"); }),
            ErrorCode::IllegalTransition);
  EXPECT_EQ(code_of([&] { dispatcher.assign_unit("R999999", "U2", "op1"); }), ErrorCode::NotFound);
}

TEST_F(DispatchTest, AssignErrors) {
  const auto a = dispatcher.ingest_help(help(patient.patient_id, "2014-01-25T05:19:55Z"));
  const auto b = dispatcher.ingest_help(help(patient.patient_id, "2014-01-25T05:19:58Z"));
  dispatcher.assign_unit(a.request_id, "U1", "op1");
  EXPECT_EQ(code_of([&] { dispatcher.assign_unit(b.request_id, "U1", "op2"); }),
            ErrorCode::UnitUnavailable);
  EXPECT_EQ(reg.request(b.request_id)->state, RequestState::Located);
  EXPECT_EQ(code_of([&] { dispatcher.assign_unit(b.request_id, "U404", "op2"); }),
            ErrorCode::NotFound);
  auto broken = *reg.unit("U3");
  broken.status = UnitStatus::OutOfService;
  reg.put_unit(broken);
  EXPECT_EQ(code_of([&] { dispatcher.assign_unit(b.request_id, "U3", "op2"); }),
            ErrorCode::UnitUnavailable);

  // Received requests cannot be dispatched or completed.
  auto parked = *reg.request(b.request_id);
  parked.request_id = "R000900";
  parked.state = RequestState::Received;
  parked.hospital_id.clear();
  parked.history.resize(1);
  reg.put_request(parked);
  EXPECT_EQ(code_of([&] { dispatcher.complete_request("R000900", "op"); }),
            ErrorCode::IllegalTransition);
}

TEST_F(DispatchTest, CancelFreesDispatchedUnit) {
  const auto r = dispatcher.ingest_help(help(patient.patient_id, "2014-01-25T05:19:55Z"));
  dispatcher.assign_unit(r.request_id, "U2", "op1");
  const auto c = dispatcher.cancel_request(r.request_id, "op1");
  EXPECT_EQ(c.state, RequestState::Cancelled);
  EXPECT_EQ(reg.unit("U2")->status, UnitStatus::Available);
}

TEST_F(DispatchTest, ListRequestsOrderingFilterAndView) {
  const auto first = dispatcher.ingest_help(help(patient.patient_id, "2014-01-25T05:19:55Z"));
  clock.advance(std::chrono::seconds{10});
  const auto second = dispatcher.ingest_help(help(patient.patient_id, "2014-01-25T05:20:05Z"));
  const auto all = dispatcher.list_requests();
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(all[0].request_id, second.request_id);
  EXPECT_EQ(all[1].request_id, first.request_id);

  dispatcher.assign_unit(first.request_id, "U1", "op");
  dispatcher.complete_request(first.request_id, "op");
  dispatcher.cancel_request(second.request_id, "op");
  EXPECT_TRUE(dispatcher.list_requests({RequestState::Received}).empty());
  EXPECT_EQ(dispatcher.list_requests({}, clock.now()).size(), 1u);

  const auto v = dispatcher.view(first.request_id);
  EXPECT_EQ(v.patient_name, "Rawshan");
  EXPECT_EQ(format_timestamp(v.request_time), "2014-01-25T05:19:55Z");
  EXPECT_EQ(format_timestamp(v.received_time), "2014-01-25T05:20:00Z");
  EXPECT_EQ(v.lat, kPanelLat);
  EXPECT_EQ(v.lon, kPanelLon);
  EXPECT_EQ(v.hospital_name, "Maternity Hospital");
  EXPECT_EQ(v.state, RequestState::Complete);
}

TEST_F(DispatchTest, FanOutCountIsThreePlusDoctors) {
  const auto r = dispatcher.ingest_help(help(patient.patient_id, "2014-01-25T05:19:55Z"));
  // Enumerate targets independently: hospital contact, doctors of H1, husband, patient.
  const std::size_t expected = 1 + reg.doctors_of("H1").size() + 1 + 1;
  EXPECT_EQ(expected, 5u);
  EXPECT_EQ(dispatcher.fan_out(r).size(), expected);

  // Same formula at zero doctors: H2 has none.
  auto far = *reg.request(r.request_id);
  far.hospital_id = "H2";
  EXPECT_EQ(dispatcher.fan_out(far).size(), 3u);

  far.state = RequestState::Received;
  EXPECT_EQ(code_of([&] { dispatcher.fan_out(far); }), ErrorCode::IllegalTransition);
}

TEST_F(DispatchTest, HospitalChoiceMatchesBruteForce) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> lat(35.0, 37.0), lon(43.0, 45.0);
  std::string csv = "facility_id,kind,name,lat,lon,contact_phone\n";
  for (int i = 0; i < 30; ++i) {
    csv += "X" + std::to_string(i) + ",hospital,H" + std::to_string(i) + "," +
           protocol::format_degrees(lat(rng)) + "," + protocol::format_degrees(lon(rng)) +
           ",+96466000010" + std::to_string(10 + i) + "\n";
  }
  ASSERT_TRUE(reg.seed_facilities(csv).errors.empty());
  std::vector<OraclePoint> oracle;
  for (const auto& f : reg.facilities()) {
    oracle.push_back({f.facility_id, f.kind == geo::FacilityKind::Hospital, f.location.lat(),
                      f.location.lon()});
  }
  for (int i = 0; i < 200; ++i) {
    const double la = lat(rng), lo = lon(rng);
    clock.advance(std::chrono::seconds{1});
    const auto r = dispatcher.ingest_help(
        help(patient.patient_id, format_timestamp(clock.now()).c_str(), la, lo));
    EXPECT_EQ(r.hospital_id, *brute_force_nearest(r.location.lat(), r.location.lon(), oracle,
                                                  geo::kEarth.radius_km));
  }
}

TEST_F(DispatchTest, RandomInterleavingsKeepInvariants) {
  std::mt19937_64 rng(2024);
  std::vector<std::string> ids;
  const std::vector<std::string> units{"U1", "U2", "U3"};
  for (int step = 0; step < 600; ++step) {
    clock.advance(std::chrono::seconds{std::uniform_int_distribution<int>(0, 3)(rng)});
    const int op = std::uniform_int_distribution<int>(0, 4)(rng);
    try {
      if (op == 0 || ids.empty()) {
        ids.push_back(dispatcher
                          .ingest_help(help(patient.patient_id,
                                            format_timestamp(clock.now() + std::chrono::seconds{step}).c_str()))
                          .request_id);
      } else {
        const auto& id = ids[std::uniform_int_distribution<std::size_t>(0, ids.size() - 1)(rng)];
        if (op == 1) dispatcher.assign_unit(id, units[step % 3], "op");
        if (op == 2) dispatcher.complete_request(id, "op");
        if (op == 3) dispatcher.cancel_request(id, "op");
        if (op == 4) dispatcher.assign_unit(id, units[(step + 1) % 3], "op2");
      }
    } catch (const Error& e) {
      EXPECT_TRUE(e.code() == ErrorCode::IllegalTransition || e.code() == ErrorCode::UnitUnavailable)
          << e.what();
    }
    ASSERT_EQ(units_dispatched(), requests_dispatched()) << "step " << step;
  }
  for (const auto& r : reg.requests()) {
    ASSERT_FALSE(r.history.empty());
    EXPECT_EQ(r.history.front().state, RequestState::Received);
    for (std::size_t i = 1; i < r.history.size(); ++i) {
      EXPECT_TRUE(dispatch::is_legal_transition(r.history[i - 1].state, r.history[i].state));
      EXPECT_LE(r.history[i - 1].at, r.history[i].at);
    }
    EXPECT_EQ(r.history.back().state, r.state);
  }
}

TEST_F(DispatchTest, ConcurrentAssignOnOneRequestHasSingleWinner) {
  for (int round = 0; round < 20; ++round) {
    clock.advance(std::chrono::seconds{1});
    const auto r = dispatcher.ingest_help(help(patient.patient_id, format_timestamp(clock.now()).c_str()));
    std::latch start(2);
    std::atomic<int> wins{0}, losses{0};
    auto attempt = [&](const char* unit) {
      start.arrive_and_wait();
      try {
        dispatcher.assign_unit(r.request_id, unit, "op");
        ++wins;
      } catch (const Error& e) {
        if (e.code() == ErrorCode::IllegalTransition || e.code() == ErrorCode::UnitUnavailable) ++losses;
      }
    };
    std::thread a(attempt, "U1"), b(attempt, "U2");
    a.join();
    b.join();
    EXPECT_EQ(wins.load(), 1);
    EXPECT_EQ(losses.load(), 1);
    EXPECT_EQ(units_dispatched(), requests_dispatched());
    dispatcher.complete_request(r.request_id, "op");
  }
}

}  // namespace
