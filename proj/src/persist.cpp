#include "cat/persist.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/crypto.h>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace cat {

namespace {

std::string to_hex(const unsigned char* data, std::size_t n) {
  static const char* digits = "0123456789abcdef";
  std::string out(n * 2, '0');
  for (std::size_t i = 0; i < n; ++i) {
    out[2 * i] = digits[data[i] >> 4];
    out[2 * i + 1] = digits[data[i] & 0xF];
  }
  return out;
}

std::string hmac_hex(const std::string& key, const std::string& msg) {
  unsigned char mac[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()),
            reinterpret_cast<const unsigned char*>(msg.data()), msg.size(), mac, &len))
    throw std::runtime_error("HMAC computation failed");
  return to_hex(mac, len);
}

bool valid_session_id(const std::string& id) {
  return !id.empty() && id.size() <= 128 && std::all_of(id.begin(), id.end(), [](char ch) {
    return std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_';
  });
}

std::int64_t ms_of(const Json& ev) { return ev.at("ms").get<std::int64_t>(); }

}  // namespace

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr))
    throw std::runtime_error("SHA-256 computation failed");
  return to_hex(md, len);
}

std::string config_digest(const StudyConfig& config) { return sha256_hex(to_json(config).dump()); }

std::string bank_digest(const ItemBank& bank) { return sha256_hex(serialize_bank(bank, BankFormat::Json)); }

Json created_event(const SessionState& state, const StudyConfig& config, const ItemBank& bank) {
  return Json{{"type", "created"},
              {"ms", state.created_ms},
              {"session_id", state.id},
              {"seed", state.seed},
              {"config_digest", config_digest(config)},
              {"bank_digest", bank_digest(bank)}};
}

Json begin_event(std::int64_t ms) { return Json{{"type", "begin"}, {"ms", ms}}; }

Json demographics_event(const std::map<std::string, std::string>& values, std::int64_t ms) {
  return Json{{"type", "demographics"}, {"ms", ms}, {"values", values}};
}

Json item_event(const ItemDecision& d, std::int64_t ms) {
  return Json{{"type", "item"},
              {"ms", ms},
              {"item_id", d.item_id},
              {"sh_rejected", d.sh_rejected},
              {"sh_accepted", d.sh_accepted}};
}

Json response_event(const Response& r, const AbilityEstimate& est, std::int64_t ms) {
  Json j{{"type", "response"}, {"ms", ms}, {"item_id", r.item_id}, {"value", r.value}};
  j["latency_ms"] = r.latency_ms ? Json(*r.latency_ms) : Json(nullptr);
  j["estimate"] = to_json(est);
  return j;
}

Json stop_event(StopReason reason, std::int64_t ms) {
  return Json{{"type", "stop"}, {"ms", ms}, {"reason", to_string(reason)}};
}

Json expired_event(std::int64_t ms) { return Json{{"type", "expired"}, {"ms", ms}}; }

SessionState replay(const std::vector<Json>& events, const StudyConfig& config, const ItemBank& bank,
                    const ReplayOptions& options) {
  if (events.empty() || events.front().value("type", "") != "created")
    throw ReplayError("event log must begin with a created event");
  const Json& created = events.front();
  if (created.at("config_digest").get<std::string>() != config_digest(config))
    throw ReplayError("event log was recorded under a different study config");
  if (created.at("bank_digest").get<std::string>() != bank_digest(bank))
    throw ReplayError("event log was recorded against a different item bank");

  SessionState state;
  try {
    state = start_session(config, bank, created.at("session_id").get<std::string>(),
                          created.at("seed").get<std::uint64_t>(), ms_of(created));
    for (std::size_t i = 1; i < events.size(); ++i) {
      const Json& ev = events[i];
      const std::string type = ev.at("type").get<std::string>();
      const std::int64_t ms = ms_of(ev);
      if (type == "begin") {
        begin_test(state, ms);
      } else if (type == "demographics") {
        auto errs = submit_demographics(state, config, ev.at("values").get<std::map<std::string, std::string>>(), ms);
        if (!errs.empty()) throw ReplayError("recorded demographics no longer validate");
      } else if (type == "item") {
        const std::string logged = ev.at("item_id").get<std::string>();
        if (options.verify_selection && !selection_uses_ledger(config)) {
          const NextStep step = next_item(state, config, bank, nullptr, ms);
          const auto* d = std::get_if<ItemDecision>(&step);
          if (!d || d->item_id != logged)
            throw ReplayError("replayed selection diverged from logged item '" + logged + "'");
        } else {
          issue_item(state, bank, logged, ev.at("sh_rejected").get<std::vector<std::string>>(), ms);
        }
      } else if (type == "response") {
        Response r;
        r.item_id = ev.at("item_id").get<std::string>();
        r.value = ev.at("value").get<int>();
        if (!ev.at("latency_ms").is_null()) r.latency_ms = ev.at("latency_ms").get<long long>();
        const AbilityEstimate est = submit_response(state, config, bank, nullptr, r, ms);
        if (options.verify_estimates && to_json(est) != ev.at("estimate"))
          throw ReplayError("replayed estimate diverged at item '" + r.item_id + "'");
      } else if (type == "stop") {
        const StopReason logged = stop_reason_from_string(ev.at("reason").get<std::string>());
        const NextStep step = next_item(state, config, bank, nullptr, ms);
        const auto* d = std::get_if<StopDecision>(&step);
        if (!d || d->reason != logged) throw ReplayError("replayed stop decision diverged from the log");
      } else if (type == "expired") {
        expire(state, ms);
      } else {
        throw ReplayError("unknown event type '" + type + "'");
      }
    }
  } catch (const ReplayError&) {
    throw;
  } catch (const std::exception& e) {
    throw ReplayError(std::string("event log does not replay: ") + e.what());
  }
  return state;
}

void accumulate_exposure(const std::vector<Json>& events, ExposureLedger& ledger) {
  for (const auto& ev : events) {
    const std::string type = ev.at("type").get<std::string>();
    if (type == "created") {
      ledger.begin_session();
    } else if (type == "item") {
      for (const auto& id : ev.at("sh_rejected")) ledger.record_selection(id.get<std::string>());
      if (ev.value("sh_accepted", false)) ledger.record_selection(ev.at("item_id").get<std::string>());
    } else if (type == "response") {
      ledger.record_administration(ev.at("item_id").get<std::string>());
    }
  }
}

std::string make_resume_token(const std::string& session_id, const std::string& key) {
  return session_id + "." + hmac_hex(key, session_id);
}

std::string verify_resume_token(const std::string& token, const std::string& key) {
  const auto dot = token.rfind('.');
  if (dot == std::string::npos || dot == 0) throw TokenError("malformed resume token");
  const std::string id = token.substr(0, dot);
  const std::string tag = token.substr(dot + 1);
  const std::string expected = hmac_hex(key, id);
  if (tag.size() != expected.size() || CRYPTO_memcmp(tag.data(), expected.data(), tag.size()) != 0)
    throw TokenError("resume token failed its integrity check");
  return id;
}

SessionStore::SessionStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path SessionStore::log_path(const std::string& id) const {
  if (!valid_session_id(id)) throw std::invalid_argument("invalid session id");
  return dir_ / (id + ".jsonl");
}

std::filesystem::path SessionStore::snapshot_path(const std::string& id) const {
  if (!valid_session_id(id)) throw std::invalid_argument("invalid session id");
  return dir_ / (id + ".snapshot.json");
}

void SessionStore::append(const std::string& session_id, const Json& event) {
  std::lock_guard lock(mu_);
  std::ofstream out(log_path(session_id), std::ios::app | std::ios::binary);
  if (!out) throw std::runtime_error("cannot append to session log");
  out << event.dump() << '\n';
  out.flush();
}

std::vector<Json> SessionStore::events(const std::string& session_id) const {
  std::lock_guard lock(mu_);
  std::ifstream in(log_path(session_id), std::ios::binary);
  std::vector<Json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const Json::parse_error&) {
      // A torn final line from a crash mid-append; everything before it is intact.
      break;
    }
  }
  return out;
}

void SessionStore::write_snapshot(const std::string& session_id, const Json& snapshot) {
  std::lock_guard lock(mu_);
  const auto path = snapshot_path(session_id);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << snapshot.dump() << '\n';
  }
  std::filesystem::rename(tmp, path);
}

std::optional<Json> SessionStore::snapshot(const std::string& session_id) const {
  std::lock_guard lock(mu_);
  std::ifstream in(snapshot_path(session_id), std::ios::binary);
  if (!in) return std::nullopt;
  try {
    return Json::parse(in);
  } catch (const Json::parse_error&) {
    return std::nullopt;
  }
}

bool SessionStore::exists(const std::string& session_id) const {
  if (!valid_session_id(session_id)) return false;
  std::lock_guard lock(mu_);
  return std::filesystem::exists(log_path(session_id));
}

std::vector<std::string> SessionStore::list() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> ids;
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    const auto name = entry.path().filename().string();
    if (name.size() > 6 && name.ends_with(".jsonl")) ids.push_back(name.substr(0, name.size() - 6));
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

namespace {

void record(SessionStore* store, const SessionState& state, const Json& event) {
  if (!store) return;
  store->append(state.id, event);
  store->write_snapshot(state.id, to_json(state));
}

}  // namespace

SessionState logged_start(SessionStore* store, const StudyConfig& config, const ItemBank& bank,
                          std::string session_id, std::uint64_t seed, std::int64_t now_ms,
                          ExposureLedger* ledger) {
  if (store && store->exists(session_id)) throw std::invalid_argument("session id already in use");
  SessionState state = start_session(config, bank, std::move(session_id), seed, now_ms, ledger);
  record(store, state, created_event(state, config, bank));
  return state;
}

void logged_begin(SessionStore* store, SessionState& state, std::int64_t now_ms) {
  begin_test(state, now_ms);
  record(store, state, begin_event(now_ms));
}

std::vector<Violation> logged_demographics(SessionStore* store, SessionState& state, const StudyConfig& config,
                                           const std::map<std::string, std::string>& values,
                                           std::int64_t now_ms) {
  auto violations = submit_demographics(state, config, values, now_ms);
  if (violations.empty()) record(store, state, demographics_event(values, now_ms));
  return violations;
}

NextStep logged_next(SessionStore* store, SessionState& state, const StudyConfig& config, const ItemBank& bank,
                     ExposureLedger* ledger, std::int64_t now_ms) {
  NextStep step = next_item(state, config, bank, ledger, now_ms);
  if (const auto* d = std::get_if<ItemDecision>(&step))
    record(store, state, item_event(*d, now_ms));
  else
    record(store, state, stop_event(std::get<StopDecision>(step).reason, now_ms));
  return step;
}

AbilityEstimate logged_submit(SessionStore* store, SessionState& state, const StudyConfig& config,
                              const ItemBank& bank, ExposureLedger* ledger, const Response& response,
                              std::int64_t now_ms) {
  AbilityEstimate est = submit_response(state, config, bank, ledger, response, now_ms);
  record(store, state, response_event(response, est, now_ms));
  return est;
}

bool logged_expiry(SessionStore* store, SessionState& state, const StudyConfig& config, std::int64_t now_ms) {
  if (!check_expiry(state, config, now_ms)) return false;
  record(store, state, expired_event(now_ms));
  return true;
}

SessionState resume_session(const std::string& token, const std::string& key, const SessionStore& store,
                            const StudyConfig& config, const ItemBank& bank) {
  const std::string id = verify_resume_token(token, key);
  if (!store.exists(id)) throw TokenError("no persisted session for this token");
  SessionState state = replay(store.events(id), config, bank, {.verify_selection = false});
  if (state.phase == Phase::Expired) throw SequenceError("expired sessions cannot be resumed");
  return state;
}

}  // namespace cat
