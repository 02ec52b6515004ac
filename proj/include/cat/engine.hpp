#pragma once

// The adaptive session state machine.
//
//   Created --begin--> Running --stop--> Finished
//   Created --(demographics configured)--> Demographics --submit--> Running
//   any live phase --idle timeout--> Expired
//
// Engine functions mutate a SessionState value in place. Time is always
// passed in (milliseconds since the epoch) so that replaying a recorded
// session reproduces it exactly.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "cat/bank.hpp"
#include "cat/estimate.hpp"
#include "cat/irt.hpp"
#include "cat/select.hpp"

namespace cat {

enum class Criterion { MFI, MFIPrecision, Constrained };

std::string_view to_string(Criterion c);
Criterion criterion_from_string(std::string_view s);

/// Classification band [lo, hi). The last band also contains +inf.
struct Band {
  std::string label;
  double lo = 0.0;
  double hi = 0.0;
};

/// Problems with a band list, empty when the bands partition the real line.
std::vector<std::string> band_violations(const std::vector<Band>& bands);

/// Label of the band containing theta. Bands must partition the line.
std::string classify(const std::vector<Band>& bands, double theta);

enum class FieldType { Integer, Number, Text, Choice };

struct DemographicField {
  std::string name;
  FieldType type = FieldType::Text;
  bool required = true;
  std::optional<double> min;
  std::optional<double> max;
  std::vector<std::string> choices;
};

struct ExposureSettings {
  bool enabled = false;
  double uniform_target = 0.25;
  std::map<std::string, double> targets;
  ExposureRateBasis basis = ExposureRateBasis::Corrected;
};

struct StudyConfig {
  std::string name = "study";
  Model model = Model::TwoPL;
  EstimatorConfig estimation;
  Criterion criterion = Criterion::MFI;
  int max_items = 20;
  int min_items = 5;
  double min_sem = 0.3;
  int adaptive_start = 0;
  int randomesque = 1;  // 1 = deterministic tie-break
  ExposureSettings exposure;
  SelectionWeights weights;
  std::map<std::string, double> group_targets;
  std::vector<Band> cutoffs;
  std::vector<DemographicField> demographics;
  bool session_save = true;
  std::optional<std::string> results_webhook;
  std::optional<std::uint64_t> seed;
  std::string language = "en";
  int session_timeout_minutes = 30;
  bool expose_theta = false;
  bool expose_se = true;
};

/// Config invariants plus, when a bank is given, cross-checks against it.
std::vector<Violation> validate_config(const StudyConfig& config, const ItemBank* bank = nullptr);

enum class Phase { Created, Demographics, Running, Finished, Expired };
enum class StopReason { SemReached, MaxItems, PoolExhausted };

std::string_view to_string(Phase p);
Phase phase_from_string(std::string_view s);
std::string_view to_string(StopReason r);
StopReason stop_reason_from_string(std::string_view s);

struct SessionState {
  std::string id;
  Phase phase = Phase::Created;
  std::uint64_t seed = 0;
  std::vector<std::string> administered;
  std::vector<Response> responses;
  std::vector<AbilityEstimate> trajectory;
  std::set<std::string> sh_rejected;
  std::map<std::string, std::string> demographics;
  std::optional<StopReason> stop_reason;
  std::vector<std::string> warnings;
  std::int64_t created_ms = 0;
  std::int64_t last_activity_ms = 0;
  std::int64_t item_issued_ms = 0;

  bool item_outstanding() const { return administered.size() > responses.size(); }
  std::optional<std::string> outstanding_item() const;
  /// Latest trajectory entry, or the prior when nothing has been answered.
  AbilityEstimate current_estimate(const StudyConfig& config) const;
};

class SequenceError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ResponseError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct StopDecision {
  StopReason reason;
};

struct ItemDecision {
  std::string item_id;
  std::vector<std::string> sh_rejected;  // candidates turned down this round
  bool sh_accepted = false;              // item passed a Sympson-Hetter draw
};

using NextStep = std::variant<ItemDecision, StopDecision>;

/// True when item choice reads cross-session ledger state (exposure control,
/// or the constrained criterion's exposure term), so a single session log
/// cannot re-derive its selections.
bool selection_uses_ledger(const StudyConfig& config);

/// Empty ledger carrying the config's exposure targets.
ExposureLedger make_ledger(const StudyConfig& config);

/// Fresh session. The ledger, when given, counts the session.
SessionState start_session(const StudyConfig& config, const ItemBank& bank, std::string session_id,
                           std::uint64_t seed, std::int64_t now_ms, ExposureLedger* ledger = nullptr);

/// Created -> Running.
void begin_test(SessionState& state, std::int64_t now_ms);

/// Validates demographic values against the configured fields. Returns
/// field-level violations; on success moves Demographics -> Running.
std::vector<Violation> submit_demographics(SessionState& state, const StudyConfig& config,
                                           const std::map<std::string, std::string>& values,
                                           std::int64_t now_ms);

std::optional<StopReason> stop_check(const SessionState& state, const StudyConfig& config);

/// Chooses and issues the next item, or finishes the session.
NextStep next_item(SessionState& state, const StudyConfig& config, const ItemBank& bank,
                   ExposureLedger* ledger, std::int64_t now_ms);

/// Issues a specific item (used when replaying a recorded selection).
void issue_item(SessionState& state, const ItemBank& bank, const std::string& item_id,
                std::vector<std::string> sh_rejected, std::int64_t now_ms);

/// Estimator used after `answered` responses: EAP during warm start, the
/// configured fallback chain afterwards.
AbilityEstimate estimate_for_step(const StudyConfig& config, const ItemBank& bank,
                                  const std::vector<Response>& responses);

AbilityEstimate submit_response(SessionState& state, const StudyConfig& config, const ItemBank& bank,
                                ExposureLedger* ledger, const Response& response, std::int64_t now_ms);

/// Moves an idle live session to Expired. Returns true on transition.
bool check_expiry(SessionState& state, const StudyConfig& config, std::int64_t now_ms);
void expire(SessionState& state, std::int64_t now_ms);

struct ItemRecord {
  std::string item_id;
  int response = 0;
  double theta = 0.0;
  double se = 0.0;
  Method method = Method::EAP;
  bool fallback = false;
  std::optional<long long> latency_ms;
};

struct SessionResult {
  std::string session_id;
  Phase disposition = Phase::Finished;
  std::optional<StopReason> stop_reason;
  AbilityEstimate final_estimate;
  int items_administered = 0;
  std::vector<ItemRecord> records;
  std::optional<std::string> classification;
  std::int64_t duration_ms = 0;
  std::vector<std::string> warnings;
};

SessionResult finalize(const SessionState& state, const StudyConfig& config);

/// Per-step rng derived from the session seed, so selection never depends on
/// how many draws earlier steps consumed.
std::mt19937_64 step_rng(std::uint64_t seed, std::uint64_t step, std::uint64_t stream = 0);

}  // namespace cat
