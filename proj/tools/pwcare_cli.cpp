// pwcare: seed data, send client messages, run load fleets, print reports.
//
// Exit codes: 0 success, 1 domain error, 2 transport error.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "pwcare/care.hpp"
#include "pwcare/client.hpp"
#include "pwcare/config.hpp"

namespace {

using namespace pwcare;

constexpr int kOk = 0;
constexpr int kDomainError = 1;
constexpr int kTransportError = 2;

// Sender used for HELP/CHG when --sender is not given.
constexpr const char* kDeskPhone = "+9647000000000";

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidField, "cannot read " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v != nullptr && *v != '\0' ? std::string(v) : fallback;
}

struct SeedFiles {
  std::string facilities, doctors, advice, units, operators;
};

int run_seed(const service::ServiceConfig& config, const SeedFiles& files) {
  std::filesystem::create_directories(config.data_dir);
  registry::Registry reg({config.database_path(), nullptr, config.password_cost});
  bool failed = false;
  std::vector<std::size_t> totals;

  auto load = [&](const char* label, const std::string& path, auto&& seeder) {
    if (path.empty()) {
      totals.push_back(0);
      return;
    }
    registry::SeedReport report;
    try {
      report = seeder(read_file(path));
    } catch (const Error& e) {
      std::cerr << path << ": " << to_string(e.code()) << " " << e.what() << '\n';
      failed = true;
      totals.push_back(0);
      return;
    }
    for (const auto& e : report.errors) {
      std::cerr << path << ":" << e.line << ": " << to_string(e.code) << " " << e.message << '\n';
    }
    failed |= !report.errors.empty();
    std::cout << label << ": " << report.ingested << " ingested";
    if (!report.errors.empty()) std::cout << ", " << report.errors.size() << " rejected";
    std::cout << '\n';
    totals.push_back(report.ingested);
  };

  load("facilities", files.facilities, [&](const std::string& t) { return reg.seed_facilities(t); });
  load("doctors", files.doctors, [&](const std::string& t) { return reg.seed_doctors(t); });
  load("advice", files.advice, [&](const std::string& t) { return care::load_advice_tsv(reg, t); });
  load("units", files.units, [&](const std::string& t) { return reg.seed_units(t); });
  load("operators", files.operators, [&](const std::string& t) { return reg.seed_accounts(t); });

  std::cout << totals[0] << "/" << totals[1] << "/" << totals[2] << " ingested\n";
  return failed ? kDomainError : kOk;
}

protocol::Payload build_payload(const std::string& kind, const std::vector<std::string>& args,
                                const std::string& ts) {
  auto need = [&](std::size_t lo, std::size_t hi, const char* usage) {
    if (args.size() < lo || args.size() > hi) {
      throw Error(ErrorCode::FieldCountMismatch, std::string("usage: send ") + usage);
    }
  };
  if (kind == "help") {
    need(3, 3, "help <patient_id> <lat> <lon>");
    const auto point = geo::validate_point(args[1], args[2]);
    Timestamp at = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
    if (!ts.empty()) {
      auto parsed = parse_timestamp(ts);
      if (!parsed) throw Error(ErrorCode::InvalidField, "--ts must be an ISO-8601 timestamp");
      at = *parsed;
    }
    return protocol::HelpPayload{args[0], point, at};
  }
  if (kind == "reg") {
    need(5, 6, "reg <name> <phone> <lat> <lon> <lmp YYYY-MM-DD> [en|ku|ar]");
    const auto point = geo::validate_point(args[2], args[3]);
    const auto lmp = parse_date(args[4]);
    if (!lmp) throw Error(ErrorCode::InvalidField, "lmp must be YYYY-MM-DD");
    auto lang = protocol::language_from(args.size() == 6 ? args[5] : "en");
    if (!lang) throw Error(ErrorCode::InvalidField, "language must be en, ku or ar");
    return protocol::RegPayload{args[0], args[1], point, *lmp, *lang};
  }
  if (kind == "chg") {
    need(2, 2, "chg <patient_id> <date YYYY-MM-DD>");
    const auto day = parse_date(args[1]);
    if (!day) throw Error(ErrorCode::InvalidField, "date must be YYYY-MM-DD");
    return protocol::ChgPayload{args[0], *day};
  }
  throw Error(ErrorCode::UnknownKind, "kind must be help, reg or chg");
}

int run_send(const client::ServerAddress& server, const std::string& ingress_key,
             const std::string& kind, const std::vector<std::string>& args, std::string sender,
             const std::string& ts, bool as_json) {
  std::string payload;
  try {
    const auto body = build_payload(kind, args, ts);
    payload = protocol::serialize_inbound(body);
    if (sender.empty()) {
      const auto* reg = std::get_if<protocol::RegPayload>(&body);
      sender = reg != nullptr ? reg->phone : kDeskPhone;
    }
  } catch (const Error& e) {
    std::cout << to_string(e.code()) << " " << e.what() << '\n';
    return kDomainError;
  }

  client::Connection conn(server, ingress_key);
  const auto reply = conn.send_sms(payload, sender);
  if (as_json) {
    std::cout << reply.body.dump() << '\n';
  } else if (!reply.ok()) {
    std::cout << reply.error_code() << " " << reply.body["error"].value("message", "") << '\n';
  } else if (kind == "help") {
    std::cout << reply.body.value("request_id", "") << " " << reply.body.value("state", "") << '\n';
  } else if (kind == "reg") {
    std::cout << reply.body.value("patient_id", "") << " " << reply.body.value("care_center_id", "")
              << " first_review=" << reply.body.value("first_review", "") << '\n';
  } else {
    std::cout << reply.body.value("appointment_id", "") << " " << reply.body.value("state", "")
              << " " << reply.body.value("date", "") << '\n';
  }
  return reply.ok() ? kOk : kDomainError;
}

int run_report(const client::ServerAddress& server, const std::string& user,
               const std::string& password, bool as_json) {
  client::Connection conn(server);
  const auto token = conn.login(user, password);
  const auto stats = conn.get("/stats", token);
  if (!stats.ok()) {
    std::cout << stats.error_code() << '\n';
    return kDomainError;
  }
  if (as_json) {
    std::cout << stats.body.dump(2) << '\n';
    return kOk;
  }
  const auto& b = stats.body;
  std::cout << "patients       " << b["patients"]["active"] << " active / " << b["patients"]["total"]
            << " total\n";
  for (const char* section : {"requests", "units", "notifications", "delivery"}) {
    std::cout << section << '\n';
    for (const auto& [k, v] : b[section].items()) std::cout << "  " << k << "  " << v << '\n';
  }
  std::cout << "inbound total  " << b["inbound_total"] << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pwcare administration and test-fleet tool"};
  app.require_subcommand(1);
  std::string server_text = env_or("PWCARE_SERVER", "http://127.0.0.1:8080");
  std::string config_path;
  std::uint64_t seed = 1;
  bool as_json = false;
  app.add_option("--server", server_text, "server address (host:port)");
  app.add_option("--config", config_path, "JSON config file (data dir, ingress key)");
  app.add_option("--seed", seed, "fleet RNG seed");
  app.add_flag("--json", as_json, "print machine-readable output");

  auto* seed_cmd = app.add_subcommand("seed", "load seed files into the data directory (offline)");
  SeedFiles files;
  std::string data_dir;
  seed_cmd->add_option("facilities", files.facilities, "facilities CSV");
  seed_cmd->add_option("doctors", files.doctors, "doctors CSV");
  seed_cmd->add_option("advice", files.advice, "advice TSV");
  seed_cmd->add_option("--units", files.units, "succoring units CSV");
  seed_cmd->add_option("--operators", files.operators, "operator/admin accounts CSV");
  seed_cmd->add_option("--data-dir", data_dir, "data directory (overrides config)");

  auto* send_cmd = app.add_subcommand("send", "send one client message to the ingress endpoint");
  std::string kind;
  std::vector<std::string> fields;
  std::string sender, ts;
  send_cmd->add_option("kind", kind, "help, reg or chg")->required();
  send_cmd->add_option("fields", fields, "message fields");
  send_cmd->add_option("--sender", sender, "sender phone (default: the REG phone or a desk number)");
  send_cmd->add_option("--ts", ts, "HELP client timestamp (default: now)");

  auto* fleet_cmd = app.add_subcommand("fleet", "register synthetic patients and replay HELP load");
  client::FleetScenario scenario;
  std::string epoch, bounds;
  fleet_cmd->add_option("--patients", scenario.patient_count, "synthetic patients")->capture_default_str();
  fleet_cmd->add_option("--rate", scenario.help_rate, "HELP messages per second")->capture_default_str();
  fleet_cmd->add_option("--duration", scenario.duration_s, "seconds of load")->capture_default_str();
  fleet_cmd->add_option("--senders", scenario.senders, "sender threads (0 = auto)");
  fleet_cmd->add_option("--epoch", epoch, "ISO timestamp anchoring generated dates (default: today 00:00Z)");
  fleet_cmd->add_option("--bounds", bounds, "lat_min,lat_max,lon_min,lon_max");

  auto* report_cmd = app.add_subcommand("report", "print server statistics");
  std::string user = env_or("PWCARE_USER", "");
  std::string password = env_or("PWCARE_PASSWORD", "");
  report_cmd->add_option("--user", user, "operator or admin username");
  report_cmd->add_option("--password", password, "password (or PWCARE_PASSWORD)");

  CLI11_PARSE(app, argc, argv);

  try {
    auto env = service::process_env();
    if (!data_dir.empty()) env["PWCARE_DATA_DIR"] = data_dir;
    const auto config = service::load_config(config_path, env);

    if (seed_cmd->parsed()) return run_seed(config, files);

    const auto server = client::parse_server(server_text);
    std::transform(kind.begin(), kind.end(), kind.begin(), [](unsigned char c) { return std::tolower(c); });
    if (send_cmd->parsed()) {
      return run_send(server, config.ingress_key, kind, fields, sender, ts, as_json);
    }
    if (fleet_cmd->parsed()) {
      scenario.seed = seed;
      if (epoch.empty()) {
        scenario.epoch = std::chrono::floor<std::chrono::days>(std::chrono::system_clock::now());
      } else if (auto parsed = parse_timestamp(epoch)) {
        scenario.epoch = *parsed;
      } else {
        throw Error(ErrorCode::InvalidField, "--epoch must be an ISO-8601 timestamp");
      }
      if (!bounds.empty()) {
        auto& b = scenario.bounds;
        if (std::sscanf(bounds.c_str(), "%lf,%lf,%lf,%lf", &b.lat_min, &b.lat_max, &b.lon_min,
                        &b.lon_max) != 4) {
          throw Error(ErrorCode::InvalidField, "--bounds expects lat_min,lat_max,lon_min,lon_max");
        }
      }
      const auto report = client::run_fleet(scenario, server, config.ingress_key);
      std::cout << (as_json ? report.to_json().dump(2) + "\n" : report.to_text());
      return report.errors == 0 ? kOk : kDomainError;
    }
    if (report_cmd->parsed()) return run_report(server, user, password, as_json);
  } catch (const client::TransportError& e) {
    std::cerr << "pwcare: " << e.what() << '\n';
    return kTransportError;
  } catch (const Error& e) {
    std::cout << to_string(e.code()) << " " << e.what() << '\n';
    return kDomainError;
  } catch (const std::exception& e) {
    std::cerr << "pwcare: " << e.what() << '\n';
    return kDomainError;
  }
  return kOk;
}
