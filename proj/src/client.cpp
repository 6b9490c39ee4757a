#include "pwcare/client.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include <httplib.h>

namespace pwcare::client {

using nlohmann::json;

ServerAddress parse_server(std::string_view text) {
  if (text.starts_with("http://")) text.remove_prefix(7);
  while (text.ends_with('/')) text.remove_suffix(1);
  const auto colon = text.rfind(':');
  ServerAddress out;
  if (colon == std::string_view::npos) {
    out.host = std::string(text);
  } else {
    out.host = std::string(text.substr(0, colon));
    const auto port = text.substr(colon + 1);
    int value = 0;
    auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
    if (ec != std::errc{} || ptr != port.data() + port.size() || value <= 0 || value > 65535) {
      throw Error(ErrorCode::InvalidField, "bad server port in '" + std::string(text) + "'");
    }
    out.port = value;
  }
  if (out.host.empty()) throw Error(ErrorCode::InvalidField, "server host is empty");
  return out;
}

bool Response::ok() const { return body.is_object() && body.value("ok", true) && status < 400; }

std::string Response::error_code() const {
  if (ok()) return {};
  if (body.is_object() && body.contains("error") && body["error"].is_object()) {
    return body["error"].value("code", "UNKNOWN");
  }
  return "HTTP_" + std::to_string(status);
}

// -- connection -------------------------------------------------------------

Connection::Connection(const ServerAddress& server, std::string ingress_key)
    : http_(std::make_unique<httplib::Client>(server.host, server.port)),
      ingress_key_(std::move(ingress_key)) {
  http_->set_keep_alive(true);
  http_->set_connection_timeout(std::chrono::seconds(5));
  http_->set_read_timeout(std::chrono::seconds(30));
}

Connection::~Connection() = default;
Connection::Connection(Connection&&) noexcept = default;
Connection& Connection::operator=(Connection&&) noexcept = default;

namespace {

Response convert(const httplib::Result& result) {
  if (!result) {
    throw TransportError("server unreachable: " + httplib::to_string(result.error()));
  }
  Response out;
  out.status = result->status;
  out.body = json::parse(result->body, nullptr, false);
  if (out.body.is_discarded()) {
    throw TransportError("server sent a non-JSON reply (HTTP " + std::to_string(result->status) + ")");
  }
  return out;
}

httplib::Headers auth_headers(const std::string& token) {
  httplib::Headers h;
  if (!token.empty()) h.emplace("Authorization", "Bearer " + token);
  return h;
}

}  // namespace

Response Connection::send_sms(std::string_view payload, std::string_view sender) {
  httplib::Headers headers;
  if (!ingress_key_.empty()) headers.emplace("X-Ingress-Key", ingress_key_);
  json body{{"payload", payload}, {"sender", sender}};
  return convert(http_->Post("/ingress/sms", headers, body.dump(), "application/json"));
}

Response Connection::get(const std::string& path, const std::string& token) {
  return convert(http_->Get(path, auth_headers(token)));
}

Response Connection::post(const std::string& path, const json& body, const std::string& token) {
  return convert(http_->Post(path, auth_headers(token), body.dump(), "application/json"));
}

std::string Connection::login(const std::string& username, const std::string& password) {
  auto r = post("/auth/login", {{"username", username}, {"password", password}});
  if (!r.ok()) {
    throw Error(error_code_from(r.error_code()).value_or(ErrorCode::BadCredentials),
                r.body.is_object() && r.body.contains("error")
                    ? r.body["error"].value("message", "login failed")
                    : "login failed");
  }
  return r.body.at("token").get<std::string>();
}

// -- fleet plan -------------------------------------------------------------

void FleetScenario::validate() const {
  if (patient_count <= 0) throw Error(ErrorCode::InvalidField, "patient count must be positive");
  if (!(help_rate > 0) || !std::isfinite(help_rate)) {
    throw Error(ErrorCode::InvalidField, "help rate must be positive");
  }
  if (!(duration_s >= 0) || !std::isfinite(duration_s)) {
    throw Error(ErrorCode::InvalidField, "duration must be non-negative");
  }
  geo::GeoPoint(bounds.lat_min, bounds.lon_min);
  geo::GeoPoint(bounds.lat_max, bounds.lon_max);
  if (bounds.lat_min > bounds.lat_max || bounds.lon_min > bounds.lon_max) {
    throw Error(ErrorCode::InvalidField, "geo bounds are inverted");
  }
  if (senders < 0) throw Error(ErrorCode::InvalidField, "sender count must be >= 0");
}

int FleetScenario::help_count() const {
  return static_cast<int>(std::floor(help_rate * duration_s + 1e-9));
}

namespace {

// Own mapping rather than std distributions, whose output is
// implementation-defined; the plan must be identical everywhere.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double in_range(std::mt19937_64& rng, double lo, double hi) {
  const double v = lo + unit(rng) * (hi - lo);
  return std::clamp(std::round(v * 1e7) / 1e7, lo, hi);
}

constexpr const char* kLanguages[] = {"en", "ku", "ar"};

}  // namespace

std::string PlannedHelp::payload(const std::string& patient_id) const {
  return protocol::serialize_inbound(
      protocol::HelpPayload{patient_id, geo::GeoPoint(lat, lon), client_ts});
}

FleetPlan plan_fleet(const FleetScenario& scenario) {
  scenario.validate();
  std::mt19937_64 rng(scenario.seed);
  FleetPlan plan;
  const auto prefix = std::to_string(100 + rng() % 900);
  const Date today = date_of(scenario.epoch);
  std::vector<geo::GeoPoint> homes;

  for (int i = 0; i < scenario.patient_count; ++i) {
    char digits[6];
    std::snprintf(digits, sizeof digits, "%05d", i % 100000);
    PlannedPatient p;
    p.phone = "+96475" + prefix + digits;
    const geo::GeoPoint home(in_range(rng, scenario.bounds.lat_min, scenario.bounds.lat_max),
                             in_range(rng, scenario.bounds.lon_min, scenario.bounds.lon_max));
    const Date lmp{days_of(today) - std::chrono::days{static_cast<int>(rng() % 280)}};
    const auto lang = protocol::language_from(kLanguages[rng() % 3]);
    p.reg_payload = protocol::serialize_inbound(
        protocol::RegPayload{"Fleet " + std::to_string(i + 1), p.phone, home, lmp, *lang});
    homes.push_back(home);
    plan.patients.push_back(std::move(p));
  }

  const int n = scenario.help_count();
  for (int i = 0; i < n; ++i) {
    PlannedHelp h;
    h.patient_index = static_cast<int>(rng() % static_cast<std::uint64_t>(scenario.patient_count));
    const auto& home = homes[h.patient_index];
    // within ~1 km of home, kept inside the valid coordinate range
    h.lat = std::clamp(std::round((home.lat() + (unit(rng) - 0.5) * 0.02) * 1e7) / 1e7, -90.0, 90.0);
    h.lon = std::clamp(std::round((home.lon() + (unit(rng) - 0.5) * 0.02) * 1e7) / 1e7, -179.9, 180.0);
    h.client_ts = scenario.epoch + std::chrono::seconds(i);  // unique per message, never deduped
    h.offset = std::chrono::microseconds(
        static_cast<std::int64_t>(std::llround(i * 1e6 / scenario.help_rate)));
    plan.helps.push_back(h);
  }
  return plan;
}

// -- fleet run --------------------------------------------------------------

double percentile(std::vector<double> sample, double p) {
  if (sample.empty()) return 0;
  std::sort(sample.begin(), sample.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * sample.size()));
  return sample[std::clamp<std::size_t>(rank, 1, sample.size()) - 1];
}

nlohmann::ordered_json FleetReport::to_json() const {
  nlohmann::ordered_json codes = nlohmann::ordered_json::object();
  for (const auto& [code, n] : error_codes) codes[code] = n;
  return {{"registered", registered}, {"sent", sent},        {"accepted", accepted},
          {"errors", errors},         {"error_codes", codes}, {"p50_ms", p50_ms},
          {"p95_ms", p95_ms},         {"p99_ms", p99_ms},     {"max_ms", max_ms},
          {"achieved_rate", achieved_rate}, {"elapsed_s", elapsed_s}};
}

std::string FleetReport::to_text() const {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(2);
  out << "registered     " << registered << '\n'
      << "sent           " << sent << '\n'
      << "accepted       " << accepted << '\n'
      << "errors         " << errors << '\n';
  for (const auto& [code, n] : error_codes) out << "  " << code << "  " << n << '\n';
  out << "latency p50    " << p50_ms << " ms\n"
      << "latency p95    " << p95_ms << " ms\n"
      << "latency p99    " << p99_ms << " ms\n"
      << "latency max    " << max_ms << " ms\n"
      << "achieved rate  " << achieved_rate << " /s\n"
      << "elapsed        " << elapsed_s << " s\n";
  return out.str();
}

FleetReport run_fleet(const FleetScenario& scenario, const ServerAddress& server,
                      const std::string& ingress_key) {
  const FleetPlan plan = plan_fleet(scenario);
  FleetReport report;
  if (plan.helps.empty()) return report;

  std::vector<std::string> ids(plan.patients.size());
  {
    Connection setup(server, ingress_key);
    setup.get("/health");  // TransportError here aborts before any load
    for (std::size_t i = 0; i < plan.patients.size(); ++i) {
      auto r = setup.send_sms(plan.patients[i].reg_payload, plan.patients[i].phone);
      if (r.ok()) {
        ids[i] = r.body.value("patient_id", "");
        ++report.registered;
      }
    }
  }

  const int senders = scenario.senders > 0
                          ? scenario.senders
                          : std::clamp(static_cast<int>(std::ceil(scenario.help_rate / 5)), 4, 64);
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::vector<double> latencies;
  using clock = std::chrono::steady_clock;
  const auto start = clock::now() + std::chrono::milliseconds(50);
  clock::time_point last_done = start;

  auto worker = [&] {
    Connection conn(server, ingress_key);
    std::vector<double> local;
    std::map<std::string, int> codes;
    int accepted = 0, sent = 0;
    clock::time_point done = start;
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= plan.helps.size()) break;
      const auto& h = plan.helps[i];
      const auto& pid = ids[h.patient_index];
      if (pid.empty()) {
        ++codes["REGISTRATION_FAILED"];
        continue;
      }
      std::this_thread::sleep_until(start + h.offset);
      const auto payload = h.payload(pid);
      const auto t0 = clock::now();
      ++sent;
      try {
        auto r = conn.send_sms(payload, plan.patients[h.patient_index].phone);
        const auto t1 = clock::now();
        done = std::max(done, t1);
        if (r.ok() && r.body.contains("request_id") && r.body["request_id"].is_string()) {
          ++accepted;
          local.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        } else {
          ++codes[r.error_code()];
        }
      } catch (const TransportError&) {
        done = std::max(done, clock::now());
        ++codes["TRANSPORT"];
        conn = Connection(server, ingress_key);
      }
    }
    std::lock_guard lock(mu);
    latencies.insert(latencies.end(), local.begin(), local.end());
    for (const auto& [c, n] : codes) {
      report.error_codes[c] += n;
      report.errors += n;
    }
    report.accepted += accepted;
    report.sent += sent;
    last_done = std::max(last_done, done);
  };

  std::vector<std::thread> pool;
  for (int i = 0; i < senders; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  report.p50_ms = percentile(latencies, 50);
  report.p95_ms = percentile(latencies, 95);
  report.p99_ms = percentile(latencies, 99);
  report.max_ms = latencies.empty() ? 0 : *std::max_element(latencies.begin(), latencies.end());
  report.elapsed_s = std::chrono::duration<double>(last_done - start).count();
  const double window = std::max(report.elapsed_s, scenario.duration_s);
  report.achieved_rate = window > 0 ? report.accepted / window : 0;
  return report;
}

}  // namespace pwcare::client
