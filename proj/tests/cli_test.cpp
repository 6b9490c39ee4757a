#include <gtest/gtest.h>

#include <fstream>

#include "pwcare/client.hpp"
#include "support/process.hpp"
#include "support/service_fixture.hpp"

namespace {

using namespace pwcare;
using namespace pwcare::testing;

const std::string kCli = PWCARE_CLI_PATH;

Date today() { return date_of(SystemClock().now()); }

std::string cli(const std::string& args, const std::string& env = "") {
  return env + " PWCARE_PASSWORD_COST=minimal " + quote(kCli) + " " + args + " 2>/dev/null";
}

class CliSeedTest : public ::testing::Test {
 protected:
  TempDir dir;

  void write(const std::string& name, const std::string& text) {
    std::ofstream(dir.file(name)) << text;
  }
  std::string seed_args(const std::string& facilities = "f.csv") {
    return "seed --data-dir " + quote(dir.file("data")) + " " + quote(dir.file(facilities)) + " " +
           quote(dir.file("d.csv")) + " " + quote(dir.file("a.tsv"));
  }
  void SetUp() override {
    write("f.csv",
          "facility_id,kind,name,lat,lon,contact_phone\n"
          "H1,hospital,Maternity Hospital,36.21,44.035,+9646600000001\n"
          "H2,hospital,General Hospital,35.85,44.0307111,+9646600000002\n"
          "C1,care_center,Ankawa,36.215,44.0307111,+9646600000011\n"
          "C2,care_center,Shaqlawa,36.406,44.322,+9646600000012\n"
          "C3,care_center,Koya,36.083,44.628,+9646600000013\n");
    write("d.csv",
          "username,password,hospital_id,phone\n"
          "dr.a,pw,H1,+9647700000001\ndr.b,pw,H1,+9647700000002\ndr.c,pw,H2,+9647700000003\n");
    write("a.tsv",
          "1\t0\t12\ten\tone\n1\t0\t12\tku\tone-ku\n2\t13\t27\ten\ttwo\n"
          "2\t13\t27\tku\ttwo-ku\n3\t28\t44\ten\tthree\n3\t28\t44\tku\tthree-ku\n");
  }
};

TEST_F(CliSeedTest, CountsAndIdempotence) {
  auto first = run(cli(seed_args()));
  EXPECT_EQ(first.exit_code, 0) << first.out;
  EXPECT_NE(first.out.find("5/3/6 ingested"), std::string::npos) << first.out;

  auto second = run(cli(seed_args()));
  EXPECT_EQ(second.exit_code, 0);
  EXPECT_NE(second.out.find("5/3/6 ingested"), std::string::npos) << second.out;

  registry::Registry reg({dir.file("data") + "/pwcare.db", nullptr, registry::PasswordCost::minimal()});
  EXPECT_EQ(reg.facilities().size(), 5u);
  EXPECT_EQ(reg.doctors().size(), 3u);
  EXPECT_EQ(reg.advice().size(), 6u);
}

TEST_F(CliSeedTest, BadRowFailsButOthersLoad) {
  write("f_bad.csv",
        "facility_id,kind,name,lat,lon,contact_phone\n"
        "H1,hospital,Maternity Hospital,36.21,44.035,+9646600000001\n"
        "H2,hospital,General Hospital,95.0,44.0307111,+9646600000002\n"
        "C1,care_center,Ankawa,36.215,44.0307111,+9646600000011\n");
  write("d.csv", "username,password,hospital_id,phone\ndr.a,pw,H1,+9647700000001\n");
  auto r = run(cli(seed_args("f_bad.csv")));
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.out.find("2/1/6 ingested"), std::string::npos) << r.out;
  auto with_stderr = run("PWCARE_PASSWORD_COST=minimal " + quote(kCli) + " " + seed_args("f_bad.csv") + " 2>&1");
  EXPECT_NE(with_stderr.out.find("f_bad.csv:3: OUT_OF_RANGE"), std::string::npos) << with_stderr.out;
}

class CliSendTest : public ::testing::Test {
 protected:
  TempDir dir;
  RunningService svc{test_config(dir)};
  std::string server = "--server 127.0.0.1:" + std::to_string(svc.port());
};

TEST_F(CliSendTest, HelpPrintsRequestAndLocated) {
  svc->registry().create_patient({"Rawshan", "+9647501234567", "+9647509999999",
                                  geo::GeoPoint(kPanelLat, kPanelLon),
                                  today(), Language::En, "C1"});
  auto r = run(cli(server + " send help P000001 36.2062125 44.0307111"));
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(r.out, "R000001 located\n");
  EXPECT_EQ(svc->registry().request("R000001")->hospital_id, "H1");
}

TEST_F(CliSendTest, RegThenDuplicatePhone) {
  const std::string reg = server + " send reg Rawshan +9647501234567 36.2062125 44.0307111 " +
                          format_date(today()) + " ku";
  auto first = run(cli(reg));
  EXPECT_EQ(first.exit_code, 0);
  EXPECT_EQ(first.out.rfind("P000001 C1 first_review=", 0), 0u) << first.out;
  auto second = run(cli(reg));
  EXPECT_EQ(second.exit_code, 1);
  EXPECT_EQ(second.out.rfind("DUPLICATE_PHONE", 0), 0u) << second.out;
}

TEST_F(CliSendTest, ChgAndJsonOutput) {
  svc->registry().create_patient({"Rawshan", "+9647501234567", "", geo::GeoPoint(kPanelLat, kPanelLon),
                                  today(), Language::En, "C1"});
  auto r = run(cli(server + " --json send chg P000001 2099-01-05"));
  EXPECT_EQ(r.exit_code, 1);  // she has no appointment yet
  auto body = nlohmann::json::parse(r.out);
  EXPECT_EQ(body["error"]["code"], "NO_OPEN_APPOINTMENT");
}

TEST(CliOffline, OutOfRangeWithoutContactingServer) {
  // nothing listens on port 9; a contacted server would give exit 2
  auto r = run(cli("--server 127.0.0.1:9 send help P000017 95 44.0307111"));
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_EQ(r.out.rfind("OUT_OF_RANGE", 0), 0u) << r.out;
  auto malformed = run(cli("--server 127.0.0.1:9 send help P000017 abc 44.0"));
  EXPECT_EQ(malformed.out.rfind("MALFORMED_COORDINATE", 0), 0u) << malformed.out;
}

TEST(CliOffline, UnreachableServerIsTransportError) {
  auto r = run(cli("--server 127.0.0.1:9 send help P000017 36.2062125 44.0307111"));
  EXPECT_EQ(r.exit_code, 2);
  auto fleet = run(cli("--server 127.0.0.1:9 fleet --rate 1 --duration 1"));
  EXPECT_EQ(fleet.exit_code, 2);
}

TEST_F(CliSendTest, ReportNeedsDeskCredentials) {
  auto ok = run(cli(server + " report --user emc1 --password pw-emc"));
  EXPECT_EQ(ok.exit_code, 0);
  EXPECT_NE(ok.out.find("notifications"), std::string::npos);
  auto bad = run(cli(server + " report --user emc1 --password wrong"));
  EXPECT_EQ(bad.exit_code, 1);
  EXPECT_EQ(bad.out.rfind("BAD_CREDENTIALS", 0), 0u) << bad.out;
}

}  // namespace
