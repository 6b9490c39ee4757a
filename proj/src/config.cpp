#include "pwcare/config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>

#include <json.hpp>

extern char** environ;

namespace pwcare::service {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw Error(ErrorCode::InvalidField, "config " + key + ": " + why);
}

template <class T>
T number(const std::string& key, std::string_view text) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) bad(key, "not a number");
  return value;
}

void set_listen(ServiceConfig& c, const std::string& key, const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) bad(key, "expected host:port");
  c.host = text.substr(0, colon);
  c.port = number<int>(key, std::string_view(text).substr(colon + 1));
  if (c.host.empty() || c.port < 0 || c.port > 65535) bad(key, "expected host:port");
}

void apply(ServiceConfig& c, const std::string& key, const std::string& v) {
  if (key == "listen") {
    set_listen(c, key, v);
  } else if (key == "data_dir") {
    c.data_dir = v;
  } else if (key == "gateway.sink") {
    c.gateway_sink = v;
  } else if (key == "gateway.failure_rate") {
    c.failure_rate = number<double>(key, v);
    if (!(c.failure_rate >= 0.0 && c.failure_rate <= 1.0)) bad(key, "must be in [0, 1]");
  } else if (key == "gateway.delay_ms") {
    c.gateway_delay = std::chrono::milliseconds(number<long>(key, v));
  } else if (key == "gateway.seed") {
    c.gateway_seed = number<std::uint64_t>(key, v);
  } else if (key == "retry.retries") {
    c.retry.retries = number<int>(key, v);
    if (c.retry.retries < 0) bad(key, "must be >= 0");
  } else if (key == "retry.base_ms") {
    c.retry.base_backoff = std::chrono::milliseconds(number<long>(key, v));
  } else if (key == "retry.max_ms") {
    c.retry.max_backoff = std::chrono::milliseconds(number<long>(key, v));
  } else if (key == "workers") {
    c.workers = number<std::size_t>(key, v);
    if (c.workers == 0) bad(key, "must be >= 1");
  } else if (key == "http_threads") {
    c.http_threads = number<std::size_t>(key, v);
    if (c.http_threads == 0) bad(key, "must be >= 1");
  } else if (key == "dedup_window_s") {
    c.dedup_window = std::chrono::seconds(number<long>(key, v));
  } else if (key == "weekly.weekday") {
    c.weekly.weekday = number<unsigned>(key, v);
    if (c.weekly.weekday > 6) bad(key, "0 (Sunday) to 6");
  } else if (key == "weekly.hour") {
    c.weekly.hour = number<unsigned>(key, v);
    if (c.weekly.hour > 23) bad(key, "0 to 23");
  } else if (key == "weekly.poll_s") {
    c.weekly_poll = std::chrono::seconds(number<long>(key, v));
  } else if (key == "token_ttl_s") {
    c.token_ttl = std::chrono::seconds(number<long>(key, v));
    if (c.token_ttl.count() <= 0) bad(key, "must be positive");
  } else if (key == "ingress_key") {
    c.ingress_key = v;
  } else if (key == "templates") {
    c.templates_file = v;
  } else if (key == "advice") {
    c.advice_file = v;
  } else if (key == "password_cost") {
    if (v == "interactive") {
      c.password_cost = registry::PasswordCost::interactive();
    } else if (v == "minimal") {
      c.password_cost = registry::PasswordCost::minimal();
    } else {
      bad(key, "interactive or minimal");
    }
  } else {
    bad(key, "unknown setting");
  }
}

void flatten(const json& node, const std::string& prefix,
             std::vector<std::pair<std::string, std::string>>& out) {
  for (const auto& [k, v] : node.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) {
      flatten(v, key, out);
    } else if (v.is_string()) {
      out.emplace_back(key, v.get<std::string>());
    } else if (v.is_number() || v.is_boolean()) {
      out.emplace_back(key, v.dump());
    } else {
      bad(key, "unsupported value");
    }
  }
}

}  // namespace

std::string ServiceConfig::database_path() const {
  return (std::filesystem::path(data_dir) / "pwcare.db").string();
}

std::string ServiceConfig::sink_path() const {
  if (!gateway_sink.empty()) return gateway_sink;
  return (std::filesystem::path(data_dir) / "gateway.log").string();
}

ServiceConfig load_config(const std::string& path,
                          const std::map<std::string, std::string>& env) {
  ServiceConfig config;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::InvalidField, "cannot read config file " + path);
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidField, "config file is not JSON: " + std::string(e.what()));
    }
    if (!doc.is_object()) throw Error(ErrorCode::InvalidField, "config file must be an object");
    std::vector<std::pair<std::string, std::string>> entries;
    flatten(doc, "", entries);
    for (const auto& [k, v] : entries) apply(config, k, v);
  }

  // PWCARE_GATEWAY_FAILURE_RATE → gateway.failure_rate, etc.
  static const std::pair<const char*, const char*> kEnv[] = {
      {"PWCARE_LISTEN", "listen"},
      {"PWCARE_DATA_DIR", "data_dir"},
      {"PWCARE_GATEWAY_SINK", "gateway.sink"},
      {"PWCARE_GATEWAY_FAILURE_RATE", "gateway.failure_rate"},
      {"PWCARE_GATEWAY_DELAY_MS", "gateway.delay_ms"},
      {"PWCARE_GATEWAY_SEED", "gateway.seed"},
      {"PWCARE_RETRIES", "retry.retries"},
      {"PWCARE_RETRY_BASE_MS", "retry.base_ms"},
      {"PWCARE_RETRY_MAX_MS", "retry.max_ms"},
      {"PWCARE_WORKERS", "workers"},
      {"PWCARE_HTTP_THREADS", "http_threads"},
      {"PWCARE_DEDUP_WINDOW_S", "dedup_window_s"},
      {"PWCARE_WEEKLY_WEEKDAY", "weekly.weekday"},
      {"PWCARE_WEEKLY_HOUR", "weekly.hour"},
      {"PWCARE_WEEKLY_POLL_S", "weekly.poll_s"},
      {"PWCARE_TOKEN_TTL_S", "token_ttl_s"},
      {"PWCARE_INGRESS_KEY", "ingress_key"},
      {"PWCARE_TEMPLATES", "templates"},
      {"PWCARE_ADVICE", "advice"},
      {"PWCARE_PASSWORD_COST", "password_cost"},
  };
  for (const auto& [var, key] : kEnv) {
    if (auto it = env.find(var); it != env.end()) apply(config, key, it->second);
  }
  return config;
}

std::map<std::string, std::string> process_env() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
    std::string_view entry(*e);
    if (!entry.starts_with("PWCARE_")) continue;
    const auto eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    out.emplace(std::string(entry.substr(0, eq)), std::string(entry.substr(eq + 1)));
  }
  return out;
}

}  // namespace pwcare::service
