#include "pwcare/service.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <sodium.h>

namespace pwcare::service {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(PrincipalRole role) noexcept {
  switch (role) {
    case PrincipalRole::EmcOperator: return "emc_operator";
    case PrincipalRole::Doctor: return "doctor";
    case PrincipalRole::Admin: return "admin";
  }
  return "?";
}

// -- sessions ---------------------------------------------------------------

SessionStore::SessionStore(const Clock& clock, std::chrono::seconds ttl)
    : clock_(clock), ttl_(ttl) {}

Session SessionStore::issue(PrincipalRole role, std::string subject_id, std::string username) {
  unsigned char raw[32];
  randombytes_buf(raw, sizeof raw);
  char hex[sizeof raw * 2 + 1];
  sodium_bin2hex(hex, sizeof hex, raw, sizeof raw);

  Session s{hex, role, std::move(subject_id), std::move(username), clock_.now() + ttl_};
  std::lock_guard lock(mu_);
  sessions_[s.token] = s;
  return s;
}

Session SessionStore::authenticate(std::string_view token) {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(token);
  if (it == sessions_.end()) throw Error(ErrorCode::Unauthorized, "unknown session token");
  if (clock_.now() >= it->second.expires_at) {
    sessions_.erase(it);
    throw Error(ErrorCode::Unauthorized, "session token expired");
  }
  return it->second;
}

// -- json shapes ------------------------------------------------------------

namespace {

ordered_json nullable(const std::string& s) { return s.empty() ? ordered_json() : ordered_json(s); }

}  // namespace

ordered_json to_json(const dispatch::RequestView& v) {
  return {{"request_id", v.request_id},
          {"patient_id", v.patient_id},
          {"patient_name", v.patient_name},
          {"request_time", format_timestamp(v.request_time)},
          {"received_time", format_timestamp(v.received_time)},
          {"lat", v.lat},
          {"lon", v.lon},
          {"hospital_id", nullable(v.hospital_id)},
          {"hospital_name", nullable(v.hospital_name)},
          {"state", to_string(v.state)},
          {"unit_id", nullable(v.unit_id)}};
}

ordered_json to_json(const SuccoringUnit& u) {
  return {{"unit_id", u.unit_id},
          {"kind", to_string(u.kind)},
          {"lat", u.base.lat()},
          {"lon", u.base.lon()},
          {"status", to_string(u.status)}};
}

ordered_json to_json(const PatientRecord& p) {
  return {{"patient_id", p.patient_id},
          {"name", p.name},
          {"phone", p.phone},
          {"husband_phone", nullable(p.husband_phone)},
          {"lat", p.home.lat()},
          {"lon", p.home.lon()},
          {"lmp", format_date(p.lmp)},
          {"language", protocol::to_string(p.language)},
          {"care_center_id", p.care_center_id},
          {"registered_at", format_timestamp(p.registered_at)},
          {"active", p.active}};
}

ordered_json to_json(const PatientFile& f) {
  return {{"file_id", f.file_id},
          {"patient_id", f.patient_id},
          {"doctor_id", f.doctor_id},
          {"request_id", f.request_id},
          {"notes", f.notes},
          {"created_at", format_timestamp(f.created_at)}};
}

ordered_json to_json(const StateChange& c) {
  return {{"state", to_string(c.state)},
          {"at", format_timestamp(c.at)},
          {"actor", c.actor},
          {"note", c.note}};
}

Reply error_reply(const Error& e) {
  return {http_status(e.code()),
          {{"ok", false}, {"error", {{"code", to_string(e.code())}, {"message", e.what()}}}}};
}

// -- service ----------------------------------------------------------------

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidField, "cannot read " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::string dump(const ordered_json& j) {
  return j.dump(-1, ' ', false, ordered_json::error_handler_t::replace);
}

ordered_json parse_object(const std::string& body) {
  ordered_json j = ordered_json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorCode::BadRequest, "request body must be a JSON object");
  }
  return j;
}

std::string string_field(const ordered_json& j, const char* key, bool required = true) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    if (required) throw Error(ErrorCode::BadRequest, std::string("missing field ") + key);
    return {};
  }
  if (!it->is_string()) throw Error(ErrorCode::BadRequest, std::string(key) + " must be a string");
  return it->get<std::string>();
}

}  // namespace

Service::Service(ServiceConfig config, const Clock* clock, std::ostream* event_out)
    : config_(std::move(config)),
      clock_(clock ? clock : &system_clock_),
      events_(event_out, clock_),
      sessions_(*clock_, config_.token_ttl) {
  if (sodium_init() < 0) throw Error(ErrorCode::Internal, "libsodium failed to initialise");
  std::filesystem::create_directories(config_.data_dir);
  registry_ = std::make_unique<registry::Registry>(
      registry::Registry::Options{config_.database_path(), clock_, config_.password_cost});

  templates_ = config_.templates_file.empty()
                   ? protocol::TemplateCatalog::defaults()
                   : protocol::TemplateCatalog::from_file(config_.templates_file);
  if (!config_.advice_file.empty()) {
    auto report = care::load_advice_tsv(*registry_, read_file(config_.advice_file));
    for (const auto& e : report.errors) {
      events_.emit("advice.row_error",
                   {{"line", e.line}, {"code", to_string(e.code)}, {"message", e.message}});
    }
  } else if (registry_->advice().empty()) {
    care::load_default_advice(*registry_);
  }

  gateway_ = std::make_unique<delivery::FileGateway>(
      delivery::FileGatewayOptions{config_.sink_path(), config_.failure_rate,
                                   config_.gateway_delay, config_.gateway_seed},
      clock_);
  pool_ = std::make_unique<delivery::DeliveryPool>(*registry_, *gateway_, config_.retry,
                                                   config_.workers, &events_);
  dispatcher_ = std::make_unique<dispatch::Dispatcher>(
      *registry_, templates_, pool_.get(), &events_, dispatch::Options{config_.dedup_window});
  care_ = std::make_unique<care::CareDesk>(*registry_, templates_, pool_.get(), &events_);
  dummy_hash_ = registry::hash_password("placeholder-password", config_.password_cost);

  http_ = std::make_unique<httplib::Server>();
  http_->new_task_queue = [n = config_.http_threads] { return new httplib::ThreadPool(n); };
  routes();
}

Service::~Service() {
  stop();
  pool_->stop();
}

void Service::start() {
  const std::size_t redriven = pool_->redrive();
  const std::size_t located = dispatcher_->recover();
  events_.emit("service.recovered", {{"redriven", redriven}, {"relocated", located}});
  if (config_.weekly_poll.count() > 0 && !weekly_thread_.joinable()) {
    weekly_thread_ = std::thread([this] { weekly_loop(); });
  }
}

int Service::bind() {
  int port = config_.port;
  if (port == 0) {
    port = http_->bind_to_any_port(config_.host);
  } else if (!http_->bind_to_port(config_.host, port)) {
    port = -1;
  }
  if (port < 0) {
    throw Error(ErrorCode::Internal,
                "cannot bind " + config_.host + ":" + std::to_string(config_.port));
  }
  events_.emit("service.listening", {{"host", config_.host}, {"port", port}});
  return port;
}

void Service::serve() { http_->listen_after_bind(); }

void Service::stop() {
  if (http_) http_->stop();
  {
    std::lock_guard lock(weekly_mu_);
    stopping_ = true;
  }
  weekly_cv_.notify_all();
  if (weekly_thread_.joinable()) weekly_thread_.join();
}

Reply Service::handle_inbound(std::string_view payload, std::string_view sender) noexcept {
  ++inbound_total_;
  try {
    try {
      const auto msg = protocol::parse_inbound(payload, sender, clock_->now());
      switch (msg.kind()) {
        case protocol::MessageKind::Reg: {
          const auto r = care_->register_patient(msg);
          return {200,
                  {{"ok", true},
                   {"kind", "REG"},
                   {"patient_id", r.patient.patient_id},
                   {"care_center_id", r.patient.care_center_id},
                   {"appointment_id", r.appointment.appointment_id},
                   {"first_review", format_date(r.appointment.date)},
                   {"slot", r.appointment.slot}}};
        }
        case protocol::MessageKind::Help: {
          const auto h = dispatcher_->ingest_help(msg);
          return {200,
                  {{"ok", true},
                   {"kind", "HELP"},
                   {"request_id", h.request_id},
                   {"state", to_string(h.state)},
                   {"hospital_id", nullable(h.hospital_id)}}};
        }
        case protocol::MessageKind::Chg: {
          const auto a = care_->reschedule(msg);
          return {200,
                  {{"ok", true},
                   {"kind", "CHG"},
                   {"patient_id", a.patient_id},
                   {"appointment_id", a.appointment_id},
                   {"date", format_date(a.date)},
                   {"state", to_string(a.state)}}};
        }
      }
      throw Error(ErrorCode::UnknownKind, "unsupported message kind");
    } catch (const Error& e) {
      events_.emit("ingress.rejected", {{"code", to_string(e.code())}});
      return error_reply(e);
    } catch (const std::exception& e) {
      events_.emit("ingress.internal_error", {{"message", e.what()}});
      return error_reply(Error(ErrorCode::Internal, "internal error"));
    }
  } catch (...) {
    return {500, ordered_json::object()};
  }
}

Reply Service::login(std::string_view username, std::string_view password) {
  std::optional<Session> session;
  if (auto account = registry_->account_by_username(username)) {
    if (registry::verify_password(account->password_hash, password)) {
      session = sessions_.issue(account->role == Role::Admin ? PrincipalRole::Admin
                                                             : PrincipalRole::EmcOperator,
                                account->account_id, account->username);
    }
  } else if (auto doctor = registry_->doctor_by_username(username)) {
    if (registry::verify_password(doctor->password_hash, password)) {
      session = sessions_.issue(PrincipalRole::Doctor, doctor->doctor_id, doctor->username);
    }
  } else {
    // same work as a real check so unknown users are not distinguishable by timing
    (void)registry::verify_password(dummy_hash_, password);
  }
  if (!session) {
    events_.emit("auth.failed", {{"username", username}});
    throw Error(ErrorCode::BadCredentials, "invalid username or password");
  }
  events_.emit("auth.login", {{"username", session->username}, {"role", to_string(session->role)}});
  return {200,
          {{"token", session->token},
           {"role", to_string(session->role)},
           {"subject_id", session->subject_id},
           {"username", session->username},
           {"expires_at", format_timestamp(session->expires_at)}}};
}

std::optional<Timestamp> Service::last_weekly_run() const {
  std::ifstream in(std::filesystem::path(config_.data_dir) / "weekly_last_run");
  std::string text;
  if (!(in >> text)) return std::nullopt;
  return parse_timestamp(text);
}

std::optional<care::WeeklyBatch> Service::run_weekly_if_due() {
  static std::mutex run_mu;
  std::lock_guard lock(run_mu);
  const Timestamp now = clock_->now();
  const auto path = std::filesystem::path(config_.data_dir) / "weekly_last_run";
  auto record = [&] {
    const auto tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << format_timestamp(now) << '\n';
    }
    std::filesystem::rename(tmp, path);
  };
  const auto last = last_weekly_run();
  if (!last) {
    // fresh data directory: start counting from now, first batch at the next slot
    record();
    return std::nullopt;
  }
  if (!config_.weekly.due(now, last)) return std::nullopt;
  auto batch = care_->weekly_advice_batch(date_of(now));
  record();
  return batch;
}

void Service::weekly_loop() {
  std::unique_lock lock(weekly_mu_);
  while (!stopping_) {
    lock.unlock();
    try {
      run_weekly_if_due();
    } catch (const std::exception& e) {
      events_.emit("care.weekly_error", {{"message", e.what()}});
    }
    lock.lock();
    weekly_cv_.wait_for(lock, config_.weekly_poll, [&] { return stopping_; });
  }
}

ordered_json Service::stats() const {
  ordered_json requests = ordered_json::object();
  for (auto s : {RequestState::Received, RequestState::Located, RequestState::Dispatched,
                 RequestState::Complete, RequestState::Cancelled}) {
    requests[std::string(to_string(s))] = 0;
  }
  for (const auto& r : registry_->requests()) {
    requests[std::string(to_string(r.state))] = requests[std::string(to_string(r.state))].get<int>() + 1;
  }
  ordered_json units = {{"available", 0}, {"dispatched", 0}, {"out_of_service", 0}};
  for (const auto& u : registry_->units()) {
    units[std::string(to_string(u.status))] = units[std::string(to_string(u.status))].get<int>() + 1;
  }
  ordered_json notifications = {{"queued", 0}, {"sent", 0}, {"failed", 0}};
  for (const auto& n : registry_->notifications()) {
    notifications[std::string(to_string(n.status))] =
        notifications[std::string(to_string(n.status))].get<int>() + 1;
  }
  std::size_t active = 0;
  const auto patients = registry_->patients();
  for (const auto& p : patients) active += p.active;
  const auto pool = pool_->stats();
  ordered_json events = ordered_json::object();
  for (const auto& [name, n] : events_.counts()) events[name] = n;
  return {{"patients", {{"total", patients.size()}, {"active", active}}},
          {"requests", requests},
          {"units", units},
          {"notifications", notifications},
          {"delivery",
           {{"sent", pool.sent}, {"failed", pool.failed}, {"attempts", pool.attempts},
            {"pending", pool.pending}}},
          {"inbound_total", inbound_total_.load()},
          {"events", events}};
}

// -- http -------------------------------------------------------------------

namespace {

void write(httplib::Response& res, const Reply& reply) {
  res.status = reply.status;
  res.set_content(dump(reply.body), "application/json");
}

std::set<RequestState> parse_states(const std::string& text) {
  std::set<RequestState> out;
  std::size_t pos = 0;
  while (pos <= text.size() && !text.empty()) {
    const auto comma = text.find(',', pos);
    const auto item = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    auto state = request_state_from(item);
    if (!state) throw Error(ErrorCode::InvalidField, "unknown state '" + item + "'");
    out.insert(*state);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

void Service::routes() {
  using httplib::Request;
  using httplib::Response;
  using Roles = std::vector<PrincipalRole>;

  auto authorize = [this](const Request& req, const Roles& roles) {
    const auto header = req.get_header_value("Authorization");
    constexpr std::string_view kBearer = "Bearer ";
    if (!std::string_view(header).starts_with(kBearer)) {
      throw Error(ErrorCode::Unauthorized, "missing bearer token");
    }
    Session s = sessions_.authenticate(std::string_view(header).substr(kBearer.size()));
    if (std::find(roles.begin(), roles.end(), s.role) == roles.end()) {
      throw Error(ErrorCode::Forbidden, std::string(to_string(s.role)) + " may not use this endpoint");
    }
    return s;
  };
  auto handler = [](auto fn) {
    return [fn](const Request& req, Response& res) {
      Reply reply;
      try {
        reply = fn(req);
      } catch (const Error& e) {
        reply = error_reply(e);
      } catch (const std::exception& e) {
        reply = error_reply(Error(ErrorCode::Internal, e.what()));
      }
      write(res, reply);
    };
  };
  const Roles desk{PrincipalRole::EmcOperator, PrincipalRole::Admin};

  http_->Get("/health", handler([](const Request&) { return Reply{200, {{"ok", true}}}; }));

  http_->Post("/ingress/sms", handler([this](const Request& req) {
    if (!config_.ingress_key.empty()) {
      const auto key = req.get_header_value("X-Ingress-Key");
      if (key.size() != config_.ingress_key.size() ||
          sodium_memcmp(key.data(), config_.ingress_key.data(), key.size()) != 0) {
        throw Error(ErrorCode::Unauthorized, "bad ingress key");
      }
    }
    if (req.get_header_value("Content-Type").starts_with("application/json")) {
      const auto body = parse_object(req.body);
      return handle_inbound(string_field(body, "payload"), string_field(body, "sender"));
    }
    return handle_inbound(req.body, req.get_header_value("X-Sender-Phone"));
  }));

  http_->Post("/auth/login", handler([this](const Request& req) {
    const auto body = parse_object(req.body);
    return login(string_field(body, "username"), string_field(body, "password"));
  }));

  http_->Get("/requests", handler([this, authorize, desk](const Request& req) {
    authorize(req, desk);
    std::set<RequestState> states;
    std::optional<Timestamp> since;
    if (req.has_param("state")) states = parse_states(req.get_param_value("state"));
    if (req.has_param("since")) {
      since = parse_timestamp(req.get_param_value("since"));
      if (!since) throw Error(ErrorCode::InvalidField, "since must be an ISO-8601 timestamp");
    }
    ordered_json list = ordered_json::array();
    for (const auto& v : dispatcher_->list_requests(states, since)) list.push_back(to_json(v));
    return Reply{200, {{"requests", list}}};
  }));

  http_->Get(R"(/requests/([A-Za-z0-9_-]+))", handler([this, authorize, desk](const Request& req) {
    authorize(req, desk);
    const std::string id = req.matches[1];
    auto body = to_json(dispatcher_->view(id));
    ordered_json history = ordered_json::array();
    if (auto r = registry_->request(id)) {
      for (const auto& c : r->history) history.push_back(to_json(c));
    }
    body["history"] = history;
    return Reply{200, body};
  }));

  http_->Post(R"(/requests/([A-Za-z0-9_-]+)/assign)",
              handler([this, authorize, desk](const Request& req) {
                const auto who = authorize(req, desk);
                const auto body = parse_object(req.body);
                const std::string id = req.matches[1];
                dispatcher_->assign_unit(id, string_field(body, "unit_id"), who.username);
                return Reply{200, to_json(dispatcher_->view(id))};
              }));

  http_->Post(R"(/requests/([A-Za-z0-9_-]+)/complete)",
              handler([this, authorize, desk](const Request& req) {
                const auto who = authorize(req, desk);
                const std::string id = req.matches[1];
                dispatcher_->complete_request(id, who.username);
                return Reply{200, to_json(dispatcher_->view(id))};
              }));

  http_->Post(R"(/requests/([A-Za-z0-9_-]+)/cancel)",
              handler([this, authorize, desk](const Request& req) {
                const auto who = authorize(req, desk);
                const std::string id = req.matches[1];
                dispatcher_->cancel_request(id, who.username);
                return Reply{200, to_json(dispatcher_->view(id))};
              }));

  http_->Get("/units", handler([this, authorize, desk](const Request& req) {
    authorize(req, desk);
    ordered_json list = ordered_json::array();
    for (const auto& u : registry_->units()) list.push_back(to_json(u));
    return Reply{200, {{"units", list}}};
  }));

  http_->Get(R"(/patients/([A-Za-z0-9_-]+))", handler([this, authorize](const Request& req) {
    authorize(req, Roles{PrincipalRole::EmcOperator, PrincipalRole::Doctor, PrincipalRole::Admin});
    const auto patient = registry_->find_patient_by_id(req.matches[1].str());
    auto body = to_json(patient);
    ordered_json appointments = ordered_json::array();
    for (const auto& a : registry_->appointments_of(patient.patient_id)) {
      appointments.push_back({{"appointment_id", a.appointment_id},
                              {"facility_id", a.facility_id},
                              {"date", format_date(a.date)},
                              {"slot", a.slot},
                              {"state", to_string(a.state)}});
    }
    ordered_json files = ordered_json::array();
    for (const auto& f : registry_->patient_files()) {
      if (f.patient_id == patient.patient_id) files.push_back(to_json(f));
    }
    body["appointments"] = appointments;
    body["files"] = files;
    return Reply{200, body};
  }));

  http_->Post(R"(/patients/([A-Za-z0-9_-]+)/file)", handler([this, authorize](const Request& req) {
    const auto who = authorize(req, Roles{PrincipalRole::Doctor});
    const auto body = parse_object(req.body);
    const auto file = registry_->add_patient_file(req.matches[1].str(), who.subject_id,
                                                  string_field(body, "request_id"),
                                                  string_field(body, "notes"));
    events_.emit("patient.file_added",
                 {{"file_id", file.file_id}, {"patient_id", file.patient_id}, {"doctor_id", who.subject_id}});
    return Reply{201, to_json(file)};
  }));

  http_->Get("/stats", handler([this, authorize, desk](const Request& req) {
    authorize(req, desk);
    return Reply{200, stats()};
  }));

  http_->set_error_handler([](const Request&, Response& res) {
    if (res.body.empty()) {
      write(res, {res.status,
                  {{"ok", false}, {"error", {{"code", "NOT_FOUND"}, {"message", "no such endpoint"}}}}});
    }
  });
}

}  // namespace pwcare::service
