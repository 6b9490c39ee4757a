#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <string>

#include "pwcare/care.hpp"
#include "pwcare/delivery.hpp"

namespace pwcare::service {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::string data_dir = "./data";
  std::string gateway_sink;  // empty → <data_dir>/gateway.log
  double failure_rate = 0.0;
  std::chrono::milliseconds gateway_delay{0};
  std::uint64_t gateway_seed = 0;
  delivery::RetryPolicy retry;
  std::size_t workers = 4;
  std::size_t http_threads = 64;  // each open keep-alive connection holds one
  std::chrono::seconds dedup_window{120};
  care::WeeklySchedule weekly;
  std::chrono::seconds weekly_poll{30};
  std::chrono::seconds token_ttl{8 * 3600};
  std::string ingress_key;  // empty → ingress open
  std::string templates_file;
  std::string advice_file;
  registry::PasswordCost password_cost = registry::PasswordCost::interactive();

  std::string database_path() const;
  std::string sink_path() const;
};

// Reads the JSON config file (empty path → defaults only), then applies
// PWCARE_* overrides from `env`. Throws InvalidField on bad values.
ServiceConfig load_config(const std::string& path,
                          const std::map<std::string, std::string>& env);

// Snapshot of the process environment restricted to PWCARE_* keys.
std::map<std::string, std::string> process_env();

}  // namespace pwcare::service
