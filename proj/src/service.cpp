#include "cat/service.hpp"

#include <httplib.h>
#include <openssl/rand.h>

#include <chrono>
#include <fstream>
#include <iostream>
#include <regex>
#include <sstream>

namespace cat {

namespace {

ApiResponse error(int status, const std::string& code, const std::string& message, Json extra = Json::object()) {
  Json e{{"code", code}, {"message", message}};
  for (auto& [k, v] : extra.items()) e[k] = v;
  return {status, Json{{"error", e}}};
}

std::string random_hex(std::size_t bytes) {
  std::vector<unsigned char> buf(bytes);
  if (RAND_bytes(buf.data(), static_cast<int>(bytes)) != 1) throw std::runtime_error("RAND_bytes failed");
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (unsigned char b : buf) {
    out += digits[b >> 4];
    out += digits[b & 15];
  }
  return out;
}

std::uint64_t random_u64() {
  std::uint64_t v = 0;
  if (RAND_bytes(reinterpret_cast<unsigned char*>(&v), sizeof v) != 1) throw std::runtime_error("RAND_bytes failed");
  return v;
}

bool valid_id(const std::string& id) {
  static const std::regex re("[A-Za-z0-9_-]{1,64}");
  return std::regex_match(id, re);
}

std::string_view to_string(FieldType t) {
  switch (t) {
    case FieldType::Integer: return "integer";
    case FieldType::Number: return "number";
    case FieldType::Text: return "text";
    case FieldType::Choice: return "choice";
  }
  return "text";
}

Json render_item(const ItemParameters& item) {
  const int m = item.categories();
  Json j{{"item_id", item.id}, {"model", to_string(item.model)}, {"categories", m}};
  j["text"] = item.text ? Json(*item.text) : Json(nullptr);
  if (item.group) j["group"] = *item.group;
  j["response_schema"] = {{"type", "integer"}, {"minimum", 0}, {"maximum", m - 1}};
  return j;
}

Json render_form(const StudyConfig& config) {
  Json fields = Json::array();
  for (const auto& f : config.demographics) {
    Json fj{{"name", f.name}, {"type", to_string(f.type)}, {"required", f.required}};
    if (f.min) fj["min"] = *f.min;
    if (f.max) fj["max"] = *f.max;
    if (!f.choices.empty()) fj["choices"] = f.choices;
    fields.push_back(std::move(fj));
  }
  return Json{{"type", "demographics"}, {"fields", fields}};
}

// Demographic payloads arrive as JSON scalars; the engine validates strings.
std::optional<std::map<std::string, std::string>> demographic_values(const Json& j) {
  std::map<std::string, std::string> out;
  if (j.is_null()) return out;
  if (!j.is_object()) return std::nullopt;
  for (const auto& [k, v] : j.items()) {
    if (v.is_string())
      out[k] = v.get<std::string>();
    else if (v.is_number() || v.is_boolean())
      out[k] = v.dump();
    else
      return std::nullopt;
  }
  return out;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, const std::string& data) {
  std::filesystem::create_directories(p.parent_path());
  const auto tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << data;
    if (!out) throw std::runtime_error("cannot write " + tmp);
  }
  std::filesystem::rename(tmp, p);
}

}  // namespace

Service::Service(ServiceOptions options) : options_(std::move(options)) {
  if (!options_.clock)
    options_.clock = [] {
      return std::chrono::duration_cast<std::chrono::milliseconds>(
                 std::chrono::system_clock::now().time_since_epoch())
          .count();
    };
  if (!options_.sender) options_.sender = http_sender();
  if (options_.token_key.empty()) {
    if (options_.data_dir) {
      const auto key_path = *options_.data_dir / "token.key";
      if (std::filesystem::exists(key_path)) {
        options_.token_key = read_file(key_path);
      } else {
        options_.token_key = random_hex(32);
        write_file(key_path, options_.token_key);
        std::filesystem::permissions(key_path, std::filesystem::perms::owner_read | std::filesystem::perms::owner_write);
      }
    } else {
      options_.token_key = random_hex(32);
    }
  }
  webhooks_ = std::make_unique<WebhookDispatcher>(options_.sender, options_.retry, options_.sleep);
  if (options_.data_dir) recover();
}

Service::~Service() = default;

std::int64_t Service::now() const { return options_.clock(); }

bool Service::authorized(const std::string& bearer) const {
  return options_.operator_token.empty() || bearer == options_.operator_token;
}

std::shared_ptr<Service::Study> Service::find_study(const std::string& id) const {
  std::shared_lock lock(mu_);
  const auto it = studies_.find(id);
  return it == studies_.end() ? nullptr : it->second;
}

std::shared_ptr<Service::Live> Service::find_session(const std::string& id) const {
  std::shared_lock lock(mu_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::size_t Service::session_count() const {
  std::shared_lock lock(mu_);
  return sessions_.size();
}

std::string Service::add_bank(ItemBank bank, std::string id) {
  if (id.empty()) id = "bank-" + random_hex(6);
  if (!valid_id(id)) throw std::invalid_argument("bad bank id '" + id + "'");
  {
    std::unique_lock lock(mu_);
    if (banks_.contains(id)) throw std::invalid_argument("bank '" + id + "' already exists");
    banks_[id] = std::make_shared<const ItemBank>(bank);
  }
  persist_bank(id, bank);
  return id;
}

ApiResponse Service::create_bank(const Json& body, const std::string& bearer) {
  if (!authorized(bearer)) return error(401, "unauthorized", "operator token required");
  if (!body.is_object()) return error(400, "bad_request", "body must be an object");
  const auto id = body.value("id", std::string());
  if (!id.empty() && !valid_id(id)) return error(400, "bad_request", "bank id must match [A-Za-z0-9_-]{1,64}");
  ItemBank bank;
  try {
    if (body.contains("generate")) {
      bank = generate_bank(bank_spec_from_json(body.at("generate")));
    } else if (body.contains("content")) {
      const auto fmt = body.value("format", std::string("csv"));
      if (fmt != "csv" && fmt != "json") return error(400, "bad_request", "format must be csv or json");
      std::istringstream in(body.at("content").get<std::string>());
      bank = load_bank(in, fmt == "csv" ? BankFormat::Csv : BankFormat::Json, body.value("name", id.empty() ? "bank" : id));
    } else {
      return error(400, "bad_request", "expected 'content' or 'generate'");
    }
  } catch (const BankParseError& e) {
    return error(422, "bank_parse_error", e.what(), {{"line", e.line()}, {"column", e.column()}});
  } catch (const BankValidationError& e) {
    return error(422, "invalid_bank", e.what(), {{"violations", to_json(e.violations())}});
  } catch (const std::exception& e) {
    return error(422, "invalid_bank", e.what());
  }
  const auto warnings = validate_bank(bank);
  std::string bank_id;
  try {
    bank_id = add_bank(std::move(bank), id);
  } catch (const std::invalid_argument& e) {
    return error(409, "bank_exists", e.what());
  }
  return {201, Json{{"bank_id", bank_id}, {"warnings", to_json(warnings)}}};
}

ApiResponse Service::get_bank(const std::string& bank_id, const std::string& bearer) const {
  if (!authorized(bearer)) return error(401, "unauthorized", "operator token required");
  std::shared_lock lock(mu_);
  const auto it = banks_.find(bank_id);
  if (it == banks_.end()) return error(404, "unknown_bank", "no bank '" + bank_id + "'");
  const auto& bank = *it->second;
  return {200, Json{{"bank_id", bank_id}, {"name", bank.name}, {"model", to_string(bank.model)},
                    {"n_items", bank.items.size()}, {"digest", bank_digest(bank)}}};
}

ApiResponse Service::create_study(const Json& body, const std::string& bearer) {
  if (!authorized(bearer)) return error(401, "unauthorized", "operator token required");
  if (!body.is_object() || !body.contains("bank") || !body.at("bank").is_string())
    return error(400, "bad_request", "expected {\"bank\": id, \"config\": {...}}");
  const auto bank_id = body.at("bank").get<std::string>();
  const auto study_id = body.value("id", std::string());
  if (!study_id.empty() && !valid_id(study_id))
    return error(400, "bad_request", "study id must match [A-Za-z0-9_-]{1,64}");
  if (!study_id.empty() && find_study(study_id))
    return error(409, "study_exists", "study '" + study_id + "' already exists");
  std::shared_ptr<const ItemBank> bank;
  {
    std::shared_lock lock(mu_);
    const auto it = banks_.find(bank_id);
    if (it != banks_.end()) bank = it->second;
  }
  if (!bank) return error(422, "unknown_bank", "no bank '" + bank_id + "'");
  StudyConfig config;
  try {
    config = config_from_json(body.value("config", Json::object()));
  } catch (const ConfigError& e) {
    return error(422, "invalid_config", e.what(), {{"violations", Json::array()}});
  }
  const auto violations = validate_config(config, bank.get());
  if (has_errors(violations))
    return error(422, "invalid_config", "config failed validation", {{"violations", to_json(violations)}});

  auto study = std::make_shared<Study>();
  study->id = study_id.empty() ? "study-" + random_hex(6) : study_id;
  study->config = config;
  study->bank_id = bank_id;
  study->bank = bank;
  study->ledger = make_ledger(config);
  if (options_.data_dir && config.session_save)
    study->store = std::make_unique<SessionStore>(*options_.data_dir / "sessions" / study->id);
  {
    std::unique_lock lock(mu_);
    if (!studies_.try_emplace(study->id, study).second)
      return error(409, "study_exists", "study '" + study->id + "' already exists");
  }
  persist_study(*study);
  return {201, Json{{"study_id", study->id}, {"warnings", to_json(violations)}}};
}

ApiResponse Service::get_study(const std::string& study_id, const std::string& bearer) const {
  if (!authorized(bearer)) return error(401, "unauthorized", "operator token required");
  const auto study = find_study(study_id);
  if (!study) return error(404, "unknown_study", "no study '" + study_id + "'");
  std::lock_guard lock(study->ledger_mu);
  Json rates = Json::object();
  double max_rate = 0.0;
  for (const auto& [id, n] : study->ledger.administration_counts()) {
    const double r = study->ledger.exposure_rate(id);
    rates[id] = r;
    max_rate = std::max(max_rate, r);
  }
  return {200, Json{{"study_id", study->id},
                    {"bank", study->bank_id},
                    {"config", to_json(study->config)},
                    {"sessions", study->ledger.sessions_total()},
                    {"exposure", {{"max_rate", max_rate}, {"rates", rates}}}}};
}

ApiResponse Service::create_session(const std::string& study_id, const Json& body) {
  const auto study = find_study(study_id);
  if (!study) return error(404, "unknown_study", "no study '" + study_id + "'");
  const auto& config = study->config;
  const Json payload = body.is_object() ? body.value("demographics", Json()) : Json();
  const auto values = demographic_values(payload);
  if (!values) return error(400, "bad_request", "demographics must be an object of scalar values");
  const auto t = now();
  if (config.demographics.empty() && !values->empty())
    return error(422, "invalid_demographics", "this study collects no demographics");
  if (!config.demographics.empty() && !values->empty()) {
    // Validate before anything is created or logged.
    auto probe = start_session(config, *study->bank, "probe", 0, t);
    const auto errs = submit_demographics(probe, config, *values, t);
    if (!errs.empty())
      return error(422, "invalid_demographics", "demographic fields failed validation", {{"violations", to_json(errs)}});
  }

  auto live = std::make_shared<Live>();
  live->study = study;
  live->client = body.is_object() ? body.value("client", Json::object()) : Json::object();
  const auto id = random_hex(16);
  std::lock_guard session_lock(live->mu);
  {
    std::lock_guard lock(study->ledger_mu);
    const auto seed = config.seed ? step_rng(*config.seed, study->sessions_started, 7)() : random_u64();
    ++study->sessions_started;
    live->state = logged_start(study->store.get(), config, *study->bank, id, seed, t, &study->ledger);
  }
  if (live->state.phase == Phase::Demographics && !values->empty())
    logged_demographics(study->store.get(), live->state, config, *values, t);
  else if (live->state.phase == Phase::Created)
    logged_begin(study->store.get(), live->state, t);
  {
    std::unique_lock lock(mu_);
    sessions_[id] = live;
  }
  if (live->state.phase == Phase::Running) advance(*live);
  return {201, Json{{"session_id", id},
                    {"resume_token", make_resume_token(id, options_.token_key)},
                    {"step", render_step(*live)}}};
}

ApiResponse Service::post_demographics(const std::string& session_id, const Json& body) {
  const auto live = find_session(session_id);
  if (!live) return error(404, "unknown_session", "no session '" + session_id + "'");
  std::lock_guard lock(live->mu);
  if (expire_if_idle(*live)) return error(410, "session_expired", "session expired");
  if (live->state.phase != Phase::Demographics)
    return error(409, "sequence_error", "demographics are not expected now",
                 {{"phase", to_string(live->state.phase)}});
  const auto values = demographic_values(body);
  if (!values) return error(400, "bad_request", "demographics must be an object of scalar values");
  const auto& study = *live->study;
  const auto errs = logged_demographics(study.store.get(), live->state, study.config, *values, now());
  if (!errs.empty())
    return error(422, "invalid_demographics", "demographic fields failed validation", {{"violations", to_json(errs)}});
  advance(*live);
  return {200, Json{{"step", render_step(*live)}}};
}

ApiResponse Service::get_next(const std::string& session_id) {
  const auto live = find_session(session_id);
  if (!live) return error(404, "unknown_session", "no session '" + session_id + "'");
  std::lock_guard lock(live->mu);
  if (expire_if_idle(*live)) return error(410, "session_expired", "session expired");
  if (live->state.phase == Phase::Running) advance(*live);
  return {200, render_step(*live)};
}

ApiResponse Service::post_response(const std::string& session_id, const Json& body) {
  const auto live = find_session(session_id);
  if (!live) return error(404, "unknown_session", "no session '" + session_id + "'");
  if (!body.is_object() || !body.contains("item_id") || !body.at("item_id").is_string() || !body.contains("value") ||
      !body.at("value").is_number_integer())
    return error(400, "bad_request", "expected {\"item_id\": string, \"value\": integer}");
  Response r{body.at("item_id").get<std::string>(), body.at("value").get<int>(), {}};
  if (body.contains("latency_ms") && !body.at("latency_ms").is_null()) {
    if (!body.at("latency_ms").is_number_integer() || body.at("latency_ms").get<long long>() < 0)
      return error(400, "bad_request", "latency_ms must be a non-negative integer");
    r.latency_ms = body.at("latency_ms").get<long long>();
  }

  std::lock_guard lock(live->mu);
  if (expire_if_idle(*live)) return error(410, "session_expired", "session expired");
  auto& state = live->state;
  if (state.phase != Phase::Running)
    return error(409, "sequence_error", "session is not running", {{"phase", to_string(state.phase)}});
  const auto outstanding = state.outstanding_item();
  if (!outstanding || *outstanding != r.item_id) {
    Json current = outstanding ? render_item(*live->study->bank->find(*outstanding)) : Json(nullptr);
    return error(409, "stale_item", "response does not match the outstanding item", {{"outstanding", current}});
  }
  auto& study = *live->study;
  try {
    std::lock_guard ledger_lock(study.ledger_mu);
    logged_submit(study.store.get(), state, study.config, *study.bank, &study.ledger, r, now());
  } catch (const ResponseError& e) {
    return error(422, "invalid_response", e.what());
  }
  advance(*live);
  return {200, Json{{"accepted", true}, {"progress", progress(*live)}, {"step", render_step(*live)}}};
}

ApiResponse Service::get_result(const std::string& session_id) {
  const auto live = find_session(session_id);
  if (!live) return error(404, "unknown_session", "no session '" + session_id + "'");
  std::lock_guard lock(live->mu);
  expire_if_idle(*live);
  const auto phase = live->state.phase;
  if (phase != Phase::Finished && phase != Phase::Expired)
    return error(409, "sequence_error", "session has not finished", {{"phase", to_string(phase)}});
  return {200, to_json(finalize(live->state, live->study->config))};
}

ApiResponse Service::resume(const Json& body) {
  if (!body.is_object() || !body.contains("token") || !body.at("token").is_string())
    return error(400, "bad_request", "expected {\"token\": string}");
  std::string id;
  try {
    id = verify_resume_token(body.at("token").get<std::string>(), options_.token_key);
  } catch (const TokenError& e) {
    return error(403, "invalid_token", e.what());
  }
  const auto live = find_session(id);
  if (!live) return error(404, "unknown_session", "no session '" + id + "'");
  std::lock_guard lock(live->mu);
  if (expire_if_idle(*live)) return error(410, "session_expired", "session expired");
  if (live->state.phase == Phase::Running) advance(*live);
  return {200, Json{{"session_id", id}, {"step", render_step(*live)}}};
}

ApiResponse Service::health() const {
  std::shared_lock lock(mu_);
  return {200, Json{{"status", "ok"},
                    {"banks", banks_.size()},
                    {"studies", studies_.size()},
                    {"sessions", sessions_.size()},
                    {"persistence", options_.data_dir.has_value()}}};
}

Json Service::progress(const Live& live) const {
  const auto& s = live.state;
  const auto& config = live.study->config;
  Json p{{"items_completed", s.responses.size()},
         {"max_items", config.max_items},
         {"finished", s.phase == Phase::Finished}};
  if (config.expose_se && !s.trajectory.empty()) p["se"] = s.trajectory.back().se;
  if (config.expose_theta && !s.trajectory.empty()) p["theta"] = s.trajectory.back().theta;
  return p;
}

Json Service::render_step(const Live& live) const {
  const auto& s = live.state;
  switch (s.phase) {
    case Phase::Demographics: return render_form(live.study->config);
    case Phase::Finished:
      return Json{{"type", "finished"}, {"result", "/sessions/" + s.id + "/result"}, {"progress", progress(live)}};
    case Phase::Expired: return Json{{"type", "expired"}, {"result", "/sessions/" + s.id + "/result"}};
    case Phase::Created:
    case Phase::Running: break;
  }
  const auto id = s.outstanding_item();
  if (!id) return Json{{"type", "pending"}, {"progress", progress(live)}};
  return Json{{"type", "item"}, {"item", render_item(*live.study->bank->find(*id))}, {"progress", progress(live)}};
}

void Service::advance(Live& live) {
  if (live.state.phase != Phase::Running || live.state.item_outstanding()) return;
  auto& study = *live.study;
  NextStep step;
  {
    std::lock_guard lock(study.ledger_mu);
    step = logged_next(study.store.get(), live.state, study.config, *study.bank, &study.ledger, now());
  }
  if (std::holds_alternative<StopDecision>(step)) on_finished(live);
}

bool Service::expire_if_idle(Live& live) {
  if (live.state.phase == Phase::Expired) return true;
  return logged_expiry(live.study->store.get(), live.state, live.study->config, now());
}

void Service::on_finished(const Live& live) {
  const auto& config = live.study->config;
  if (!config.results_webhook) return;
  webhooks_->enqueue(*config.results_webhook, webhook_payload(finalize(live.state, config), live.study->id));
}

void Service::persist_bank(const std::string& id, const ItemBank& bank) const {
  if (!options_.data_dir) return;
  write_file(*options_.data_dir / "banks" / (id + ".json"), serialize_bank(bank, BankFormat::Json));
}

void Service::persist_study(const Study& study) const {
  if (!options_.data_dir) return;
  const Json j{{"study_id", study.id}, {"bank", study.bank_id}, {"config", to_json(study.config)}};
  write_file(*options_.data_dir / "studies" / (study.id + ".json"), j.dump(2));
}

void Service::recover() {
  namespace fs = std::filesystem;
  const auto& dir = *options_.data_dir;
  if (fs::is_directory(dir / "banks"))
    for (const auto& e : fs::directory_iterator(dir / "banks")) {
      if (e.path().extension() != ".json") continue;
      const auto id = e.path().stem().string();
      banks_[id] = std::make_shared<const ItemBank>(load_bank_file(e.path().string()));
    }
  if (!fs::is_directory(dir / "studies")) return;
  for (const auto& e : fs::directory_iterator(dir / "studies")) {
    if (e.path().extension() != ".json") continue;
    const auto j = Json::parse(read_file(e.path()));
    auto study = std::make_shared<Study>();
    study->id = j.at("study_id").get<std::string>();
    study->bank_id = j.at("bank").get<std::string>();
    study->config = config_from_json(j.at("config"));
    const auto bank = banks_.find(study->bank_id);
    if (bank == banks_.end()) {
      std::cerr << "recover: study " << study->id << " references missing bank " << study->bank_id << "\n";
      continue;
    }
    study->bank = bank->second;
    study->ledger = make_ledger(study->config);
    if (study->config.session_save) study->store = std::make_unique<SessionStore>(dir / "sessions" / study->id);
    if (study->store)
      for (const auto& sid : study->store->list()) {
        const auto events = study->store->events(sid);
        try {
          auto live = std::make_shared<Live>();
          live->study = study;
          live->state = replay(events, study->config, *study->bank);
          accumulate_exposure(events, study->ledger);
          ++study->sessions_started;
          sessions_[sid] = live;
        } catch (const std::exception& ex) {
          std::cerr << "recover: session " << sid << " not restored: " << ex.what() << "\n";
        }
      }
    studies_[study->id] = study;
  }
}

void Service::install(httplib::Server& server) {
  using httplib::Request;
  using httplib::Response;
  auto reply = [](Response& res, const ApiResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  auto bearer = [](const Request& req) {
    const auto h = req.get_header_value("Authorization");
    return h.rfind("Bearer ", 0) == 0 ? h.substr(7) : std::string();
  };
  // Parses the body (empty means {}), replying 400 on malformed JSON.
  auto with_body = [reply](const Request& req, Response& res, auto&& fn) {
    Json body = Json::object();
    if (!req.body.empty()) {
      body = Json::parse(req.body, nullptr, false);
      if (body.is_discarded()) return reply(res, error(400, "bad_request", "body is not valid JSON"));
    }
    reply(res, fn(body));
  };

  server.Post("/banks", [=, this](const Request& req, Response& res) {
    with_body(req, res, [&](const Json& b) { return create_bank(b, bearer(req)); });
  });
  server.Get(R"(/banks/([A-Za-z0-9_-]+))", [=, this](const Request& req, Response& res) {
    reply(res, get_bank(req.matches[1], bearer(req)));
  });
  server.Post("/studies", [=, this](const Request& req, Response& res) {
    with_body(req, res, [&](const Json& b) { return create_study(b, bearer(req)); });
  });
  server.Get(R"(/studies/([A-Za-z0-9_-]+))", [=, this](const Request& req, Response& res) {
    reply(res, get_study(req.matches[1], bearer(req)));
  });
  server.Post(R"(/studies/([A-Za-z0-9_-]+)/sessions)", [=, this](const Request& req, Response& res) {
    with_body(req, res, [&](const Json& b) { return create_session(req.matches[1], b); });
  });
  server.Post("/sessions/resume", [=, this](const Request& req, Response& res) {
    with_body(req, res, [&](const Json& b) { return resume(b); });
  });
  server.Post(R"(/sessions/([A-Za-z0-9_-]+)/demographics)", [=, this](const Request& req, Response& res) {
    with_body(req, res, [&](const Json& b) { return post_demographics(req.matches[1], b); });
  });
  server.Get(R"(/sessions/([A-Za-z0-9_-]+)/next)", [=, this](const Request& req, Response& res) {
    reply(res, get_next(req.matches[1]));
  });
  server.Post(R"(/sessions/([A-Za-z0-9_-]+)/responses)", [=, this](const Request& req, Response& res) {
    with_body(req, res, [&](const Json& b) { return post_response(req.matches[1], b); });
  });
  server.Get(R"(/sessions/([A-Za-z0-9_-]+)/result)", [=, this](const Request& req, Response& res) {
    reply(res, get_result(req.matches[1]));
  });
  server.Get("/healthz", [=, this](const Request&, Response& res) { reply(res, health()); });
  server.set_exception_handler([reply](const Request&, Response& res, std::exception_ptr ep) {
    std::string what = "unknown error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    reply(res, error(500, "internal", what));
  });
}

}  // namespace cat
