#pragma once

#include <atomic>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>

#include <json.hpp>

#include "pwcare/care.hpp"
#include "pwcare/config.hpp"
#include "pwcare/delivery.hpp"
#include "pwcare/dispatch.hpp"

namespace httplib {
class Server;
}

namespace pwcare::service {

enum class PrincipalRole { EmcOperator, Doctor, Admin };
std::string_view to_string(PrincipalRole role) noexcept;

struct Session {
  std::string token;
  PrincipalRole role = PrincipalRole::EmcOperator;
  std::string subject_id;  // doctor_id or account_id
  std::string username;
  Timestamp expires_at;
};

// Opaque bearer tokens: 32 random bytes, hex encoded.
class SessionStore {
 public:
  SessionStore(const Clock& clock, std::chrono::seconds ttl);

  Session issue(PrincipalRole role, std::string subject_id, std::string username);
  // Throws Unauthorized for unknown or expired tokens.
  Session authenticate(std::string_view token);

 private:
  const Clock& clock_;
  std::chrono::seconds ttl_;
  std::mutex mu_;
  std::map<std::string, Session, std::less<>> sessions_;
};

struct Reply {
  int status = 200;
  nlohmann::ordered_json body;
};

Reply error_reply(const Error& e);

class Service {
 public:
  // Opens (or creates) the data directory. `clock` and `event_out` are
  // for tests; defaults are the system clock and no event output.
  explicit Service(ServiceConfig config, const Clock* clock = nullptr,
                   std::ostream* event_out = nullptr);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Crash recovery (re-drive queued notifications, locate parked
  // requests) and the weekly advice thread.
  void start();

  // Binds the listen address; returns the bound port.
  int bind();
  // Serves until stop(). Call bind() first.
  void serve();
  void stop();

  // Routes one ingress payload. Never throws: every payload gets an ack
  // or a typed error.
  Reply handle_inbound(std::string_view payload, std::string_view sender) noexcept;
  Reply login(std::string_view username, std::string_view password);

  // Runs the weekly advice batch when the schedule says it is due and
  // records the run in the data directory. A fresh data directory only
  // records the current time, so the first batch waits for the next slot.
  std::optional<care::WeeklyBatch> run_weekly_if_due();

  nlohmann::ordered_json stats() const;

  const ServiceConfig& config() const noexcept { return config_; }
  registry::Registry& registry() noexcept { return *registry_; }
  dispatch::Dispatcher& dispatcher() noexcept { return *dispatcher_; }
  care::CareDesk& care_desk() noexcept { return *care_; }
  delivery::DeliveryPool& delivery() noexcept { return *pool_; }
  EventLog& events() noexcept { return events_; }
  SessionStore& sessions() noexcept { return sessions_; }

 private:
  void routes();
  void weekly_loop();
  std::optional<Timestamp> last_weekly_run() const;

  ServiceConfig config_;
  SystemClock system_clock_;
  const Clock* clock_;
  EventLog events_;
  std::unique_ptr<registry::Registry> registry_;
  protocol::TemplateCatalog templates_;
  std::unique_ptr<delivery::FileGateway> gateway_;
  std::unique_ptr<delivery::DeliveryPool> pool_;
  std::unique_ptr<dispatch::Dispatcher> dispatcher_;
  std::unique_ptr<care::CareDesk> care_;
  SessionStore sessions_;
  std::string dummy_hash_;
  std::unique_ptr<httplib::Server> http_;

  std::mutex weekly_mu_;
  std::condition_variable weekly_cv_;
  bool stopping_ = false;
  std::thread weekly_thread_;
  std::atomic<std::size_t> inbound_total_{0};
};

// JSON shapes shared by the HTTP API and its tests.
nlohmann::ordered_json to_json(const dispatch::RequestView& view);
nlohmann::ordered_json to_json(const SuccoringUnit& unit);
nlohmann::ordered_json to_json(const PatientRecord& patient);
nlohmann::ordered_json to_json(const PatientFile& file);
nlohmann::ordered_json to_json(const StateChange& change);

}  // namespace pwcare::service
