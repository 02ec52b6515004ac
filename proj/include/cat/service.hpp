#pragma once

// HTTP session API. Handlers are plain methods returning a status and a JSON
// body so they can be driven in-process; install() binds them to a server.
//
//   POST /banks                       operator; {"id"?, "format", "content"} or {"id"?, "generate": spec}
//   GET  /banks/{id}                  operator
//   POST /studies                     operator; {"bank": id, "config": {...}}
//   GET  /studies/{id}                operator; config, counts, exposure summary
//   POST /studies/{id}/sessions       {"demographics"?: {...}, "client"?: {...}}
//   POST /sessions/{id}/demographics  {"field": value, ...}
//   GET  /sessions/{id}/next
//   POST /sessions/{id}/responses     {"item_id", "value", "latency_ms"?}
//   GET  /sessions/{id}/result
//   POST /sessions/resume             {"token"}
//   GET  /healthz
//
// Errors are {"error": {"code", "message", ...}}.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include "cat/bank.hpp"
#include "cat/engine.hpp"
#include "cat/json_io.hpp"
#include "cat/persist.hpp"
#include "cat/webhook.hpp"

namespace httplib {
class Server;
}

namespace cat {

struct ServiceOptions {
  std::optional<std::filesystem::path> data_dir;  // persistence off when empty
  std::string operator_token;                     // operator endpoints open when empty
  std::string token_key;                          // resume-token key; generated (and persisted) when empty
  RetryPolicy retry;
  Sender sender;                          // defaults to http_sender()
  Sleeper sleep;                          // webhook backoff sleep; defaults to a real sleep
  std::function<std::int64_t()> clock;    // wall clock in ms; defaults to system_clock
};

struct ApiResponse {
  int status = 200;
  Json body;
};

class Service {
 public:
  explicit Service(ServiceOptions options = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  ApiResponse create_bank(const Json& body, const std::string& bearer);
  ApiResponse get_bank(const std::string& bank_id, const std::string& bearer) const;
  ApiResponse create_study(const Json& body, const std::string& bearer);
  ApiResponse get_study(const std::string& study_id, const std::string& bearer) const;
  ApiResponse create_session(const std::string& study_id, const Json& body);
  ApiResponse post_demographics(const std::string& session_id, const Json& body);
  ApiResponse get_next(const std::string& session_id);
  ApiResponse post_response(const std::string& session_id, const Json& body);
  ApiResponse get_result(const std::string& session_id);
  ApiResponse resume(const Json& body);
  ApiResponse health() const;

  /// Registers a bank directly (used for banks preloaded from the command line).
  std::string add_bank(ItemBank bank, std::string id = {});

  /// Binds every endpoint on the server.
  void install(httplib::Server& server);

  WebhookDispatcher& webhooks() { return *webhooks_; }
  std::size_t session_count() const;

 private:
  struct Study {
    std::string id;
    StudyConfig config;
    std::string bank_id;
    std::shared_ptr<const ItemBank> bank;
    std::unique_ptr<SessionStore> store;  // null when not persisting
    mutable std::mutex ledger_mu;
    ExposureLedger ledger;
    std::uint64_t sessions_started = 0;
  };
  struct Live {
    std::mutex mu;
    std::shared_ptr<Study> study;
    SessionState state;
    Json client;
  };

  bool authorized(const std::string& bearer) const;
  std::shared_ptr<Study> find_study(const std::string& id) const;
  std::shared_ptr<Live> find_session(const std::string& id) const;
  std::int64_t now() const;

  Json render_step(const Live& live) const;
  Json progress(const Live& live) const;
  void advance(Live& live);  // issues the next item or finishes the session
  bool expire_if_idle(Live& live);
  void on_finished(const Live& live);

  void persist_bank(const std::string& id, const ItemBank& bank) const;
  void persist_study(const Study& study) const;
  void recover();

  ServiceOptions options_;
  std::unique_ptr<WebhookDispatcher> webhooks_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<const ItemBank>> banks_;
  std::map<std::string, std::shared_ptr<Study>> studies_;
  std::map<std::string, std::shared_ptr<Live>> sessions_;
};

}  // namespace cat
