#pragma once

// Session persistence: an append-only event log per session with periodic
// snapshots, replay of a log through the engine, and resume tokens.
//
// Event log lines are JSON objects with a "type" and an "ms" timestamp:
//   created       session_id, seed, config_digest, bank_digest
//   begin
//   demographics  values
//   item          item_id, sh_rejected
//   response      item_id, value, latency_ms, estimate
//   stop          reason
//   expired

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cat/engine.hpp"
#include "cat/json_io.hpp"

namespace cat {

/// Hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& data);
std::string config_digest(const StudyConfig& config);
std::string bank_digest(const ItemBank& bank);

Json created_event(const SessionState& state, const StudyConfig& config, const ItemBank& bank);
Json begin_event(std::int64_t ms);
Json demographics_event(const std::map<std::string, std::string>& values, std::int64_t ms);
Json item_event(const ItemDecision& decision, std::int64_t ms);
Json response_event(const Response& response, const AbilityEstimate& estimate, std::int64_t ms);
Json stop_event(StopReason reason, std::int64_t ms);
Json expired_event(std::int64_t ms);

class ReplayError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ReplayOptions {
  // Re-run item selection and require it to match the log. Skipped when
  // selection_uses_ledger(config); those logged items are applied as recorded.
  bool verify_selection = true;
  // Require recomputed estimates to equal the logged ones bit-for-bit.
  bool verify_estimates = true;
};

/// Rebuilds a session from its log. Throws ReplayError on digest mismatch or
/// divergence from the recorded events.
SessionState replay(const std::vector<Json>& events, const StudyConfig& config, const ItemBank& bank,
                    const ReplayOptions& options = {});

/// Feeds a replayed log into an exposure ledger (sessions, selections and
/// administrations), used to rebuild ledgers after a restart.
void accumulate_exposure(const std::vector<Json>& events, ExposureLedger& ledger);

class TokenError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// "<session_id>.<hex hmac-sha256(key, session_id)>"
std::string make_resume_token(const std::string& session_id, const std::string& key);
/// Returns the session id or throws TokenError.
std::string verify_resume_token(const std::string& token, const std::string& key);

/// Directory-backed event logs and snapshots, one file pair per session.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path dir);

  void append(const std::string& session_id, const Json& event);
  std::vector<Json> events(const std::string& session_id) const;
  void write_snapshot(const std::string& session_id, const Json& snapshot);
  std::optional<Json> snapshot(const std::string& session_id) const;
  bool exists(const std::string& session_id) const;
  std::vector<std::string> list() const;

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path log_path(const std::string& id) const;
  std::filesystem::path snapshot_path(const std::string& id) const;

  std::filesystem::path dir_;
  mutable std::mutex mu_;
};

// Engine transitions paired with their event-log appends and a fresh
// snapshot. The store may be null, in which case these are the bare engine
// calls.
SessionState logged_start(SessionStore* store, const StudyConfig& config, const ItemBank& bank,
                          std::string session_id, std::uint64_t seed, std::int64_t now_ms,
                          ExposureLedger* ledger = nullptr);
void logged_begin(SessionStore* store, SessionState& state, std::int64_t now_ms);
std::vector<Violation> logged_demographics(SessionStore* store, SessionState& state, const StudyConfig& config,
                                           const std::map<std::string, std::string>& values,
                                           std::int64_t now_ms);
NextStep logged_next(SessionStore* store, SessionState& state, const StudyConfig& config, const ItemBank& bank,
                     ExposureLedger* ledger, std::int64_t now_ms);
AbilityEstimate logged_submit(SessionStore* store, SessionState& state, const StudyConfig& config,
                              const ItemBank& bank, ExposureLedger* ledger, const Response& response,
                              std::int64_t now_ms);
bool logged_expiry(SessionStore* store, SessionState& state, const StudyConfig& config, std::int64_t now_ms);

/// Verifies the token and rebuilds the session from its log. Expired and
/// unknown sessions are not resumable.
SessionState resume_session(const std::string& token, const std::string& key, const SessionStore& store,
                            const StudyConfig& config, const ItemBank& bank);

}  // namespace cat
