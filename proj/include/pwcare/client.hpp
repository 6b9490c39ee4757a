#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pwcare/error.hpp"
#include "pwcare/protocol.hpp"

namespace httplib {
class Client;
}

namespace pwcare::client {

// Server unreachable or answered with something that is not our JSON.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ServerAddress {
  std::string host = "127.0.0.1";
  int port = 8080;
};

// Accepts "host:port" or "http://host:port". Throws InvalidField.
ServerAddress parse_server(std::string_view text);

struct Response {
  int status = 0;
  nlohmann::json body;
  bool ok() const;
  std::string error_code() const;  // empty when ok
};

// One keep-alive connection; not thread-safe, use one per thread.
class Connection {
 public:
  explicit Connection(const ServerAddress& server, std::string ingress_key = "");
  ~Connection();
  Connection(Connection&&) noexcept;
  Connection& operator=(Connection&&) noexcept;

  Response send_sms(std::string_view payload, std::string_view sender);
  Response get(const std::string& path, const std::string& token = "");
  Response post(const std::string& path, const nlohmann::json& body, const std::string& token = "");

  // POST /auth/login; returns the bearer token. Throws Error(BadCredentials).
  std::string login(const std::string& username, const std::string& password);

 private:
  std::unique_ptr<httplib::Client> http_;
  std::string ingress_key_;
};

struct GeoBounds {
  double lat_min = 35.8, lat_max = 36.6;
  double lon_min = 43.6, lon_max = 44.4;
};

struct FleetScenario {
  std::uint64_t seed = 1;
  int patient_count = 20;
  double help_rate = 1.0;  // messages per second
  double duration_s = 60;
  GeoBounds bounds;
  Timestamp epoch;  // anchors lmp dates and client timestamps
  int senders = 0;  // 0 → sized from help_rate

  // Throws InvalidField when counts or bounds are unusable.
  void validate() const;
  int help_count() const;
};

struct PlannedPatient {
  std::string phone;
  std::string reg_payload;
};

struct PlannedHelp {
  int patient_index = 0;
  double lat = 0, lon = 0;
  Timestamp client_ts;
  std::chrono::microseconds offset{0};  // send time after fleet start

  std::string payload(const std::string& patient_id) const;
};

// Fully determined by the scenario: same seed, same bytes.
struct FleetPlan {
  std::vector<PlannedPatient> patients;
  std::vector<PlannedHelp> helps;
};

FleetPlan plan_fleet(const FleetScenario& scenario);

struct FleetReport {
  int registered = 0;
  int sent = 0;
  int accepted = 0;
  int errors = 0;
  std::map<std::string, int> error_codes;
  double p50_ms = 0, p95_ms = 0, p99_ms = 0, max_ms = 0;
  double achieved_rate = 0;
  double elapsed_s = 0;

  nlohmann::ordered_json to_json() const;
  std::string to_text() const;
};

// Nearest-rank percentile of an unsorted sample; 0 for an empty one.
double percentile(std::vector<double> sample, double p);

// Registers the planned patients, then sends the HELP schedule from a
// sender pool. Throws TransportError when the server is unreachable
// before the run starts.
FleetReport run_fleet(const FleetScenario& scenario, const ServerAddress& server,
                      const std::string& ingress_key = "");

}  // namespace pwcare::client
