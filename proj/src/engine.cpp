#include "cat/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cat/numfmt.hpp"

namespace cat {

namespace {

constexpr int kWarmStartTop = 5;

void require_phase(const SessionState& state, Phase expected, const char* op) {
  if (state.phase != expected)
    throw SequenceError(std::string(op) + " requires phase " + std::string(to_string(expected)) +
                        ", session is " + std::string(to_string(state.phase)));
}

ContentState content_state(const SessionState& state, const StudyConfig& config, const ItemBank& bank) {
  ContentState cs;
  cs.targets = config.group_targets;
  if (cs.targets.empty()) return cs;
  for (const auto& id : state.administered) {
    const auto* it = bank.find(id);
    if (it && it->group) ++cs.counts[*it->group];
    ++cs.total;
  }
  return cs;
}

std::optional<std::string> parse_field(const DemographicField& field, const std::string& raw) {
  switch (field.type) {
    case FieldType::Integer: {
      auto v = parse_double(raw);
      if (!v || std::floor(*v) != *v) return "expected an integer";
      if (field.min && *v < *field.min) return "below minimum " + format_double(*field.min);
      if (field.max && *v > *field.max) return "above maximum " + format_double(*field.max);
      return std::nullopt;
    }
    case FieldType::Number: {
      auto v = parse_double(raw);
      if (!v || !std::isfinite(*v)) return "expected a number";
      if (field.min && *v < *field.min) return "below minimum " + format_double(*field.min);
      if (field.max && *v > *field.max) return "above maximum " + format_double(*field.max);
      return std::nullopt;
    }
    case FieldType::Choice:
      if (std::find(field.choices.begin(), field.choices.end(), raw) == field.choices.end())
        return "not one of the allowed choices";
      return std::nullopt;
    case FieldType::Text:
      if (raw.size() > 500) return "text longer than 500 characters";
      return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace

std::string_view to_string(Criterion c) {
  switch (c) {
    case Criterion::MFI: return "MFI";
    case Criterion::MFIPrecision: return "MFI_PRECISION";
    case Criterion::Constrained: return "CONSTRAINED";
  }
  return "MFI";
}

Criterion criterion_from_string(std::string_view s) {
  if (s == "MFI") return Criterion::MFI;
  if (s == "MFI_PRECISION") return Criterion::MFIPrecision;
  if (s == "CONSTRAINED") return Criterion::Constrained;
  throw std::invalid_argument("unknown selection criterion '" + std::string(s) + "'");
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Created: return "Created";
    case Phase::Demographics: return "Demographics";
    case Phase::Running: return "Running";
    case Phase::Finished: return "Finished";
    case Phase::Expired: return "Expired";
  }
  return "Created";
}

Phase phase_from_string(std::string_view s) {
  for (Phase p : {Phase::Created, Phase::Demographics, Phase::Running, Phase::Finished, Phase::Expired})
    if (to_string(p) == s) return p;
  throw std::invalid_argument("unknown phase '" + std::string(s) + "'");
}

std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::SemReached: return "SEM_REACHED";
    case StopReason::MaxItems: return "MAX_ITEMS";
    case StopReason::PoolExhausted: return "POOL_EXHAUSTED";
  }
  return "MAX_ITEMS";
}

StopReason stop_reason_from_string(std::string_view s) {
  for (StopReason r : {StopReason::SemReached, StopReason::MaxItems, StopReason::PoolExhausted})
    if (to_string(r) == s) return r;
  throw std::invalid_argument("unknown stop reason '" + std::string(s) + "'");
}

std::vector<std::string> band_violations(const std::vector<Band>& bands) {
  std::vector<std::string> out;
  if (bands.empty()) return out;
  const double inf = std::numeric_limits<double>::infinity();
  if (bands.front().lo != -inf) out.push_back("first band must start at -Inf");
  if (bands.back().hi != inf) out.push_back("last band must end at +Inf");
  for (std::size_t i = 0; i < bands.size(); ++i) {
    if (bands[i].label.empty()) out.push_back("band labels must be non-empty");
    if (!(bands[i].lo < bands[i].hi)) out.push_back("band '" + bands[i].label + "' is empty");
    if (i > 0 && bands[i].lo != bands[i - 1].hi)
      out.push_back("bands '" + bands[i - 1].label + "' and '" + bands[i].label +
                    "' leave a gap or overlap");
  }
  return out;
}

std::string classify(const std::vector<Band>& bands, double theta) {
  if (bands.empty() || !band_violations(bands).empty())
    throw std::invalid_argument("classification bands do not partition the real line");
  for (const auto& b : bands)
    if (theta >= b.lo && theta < b.hi) return b.label;
  return bands.back().label;
}

std::vector<Violation> validate_config(const StudyConfig& config, const ItemBank* bank) {
  std::vector<Violation> out;
  auto add = [&](std::string key, std::string rule, std::string msg, bool warning = false) {
    out.push_back({std::move(key), std::move(rule), std::move(msg), warning});
  };
  if (config.max_items < 1) add("max_items", "positive", "max_items must be at least 1");
  if (config.min_items < 1) add("min_items", "positive", "min_items must be at least 1");
  if (config.min_items > config.max_items)
    add("min_items", "ordering", "min_items must not exceed max_items");
  if (!(config.min_sem > 0.0)) add("min_SEM", "positive", "min_SEM must be positive");
  if (config.adaptive_start < 0 || config.adaptive_start > config.max_items)
    add("adaptive_start", "range", "adaptive_start must lie in [0, max_items]");
  if (config.randomesque < 1) add("randomesque", "positive", "randomesque must be at least 1");
  if (config.session_timeout_minutes < 1)
    add("session_timeout", "positive", "session_timeout must be at least 1 minute");
  if (!(config.estimation.prior.sd > 0.0)) add("prior", "positive_sd", "prior sd must be positive");
  if (!(config.estimation.bounds.lo < config.estimation.bounds.hi))
    add("theta_bounds", "ordering", "theta bounds must satisfy lo < hi");
  if (config.estimation.grid.nodes.size() < 21)
    add("quadrature", "size", "quadrature grid needs at least 21 nodes");
  if (config.criterion == Criterion::Constrained && !config.weights.valid())
    add("weights", "valid", "selection weights must be non-negative with at least one positive");
  if (config.exposure.enabled) {
    if (!(config.exposure.uniform_target > 0.0 && config.exposure.uniform_target <= 1.0))
      add("exposure_control", "target_range", "exposure target must lie in (0, 1]");
    for (const auto& [id, k] : config.exposure.targets)
      if (!(k > 0.0 && k <= 1.0)) add(id, "target_range", "exposure target must lie in (0, 1]");
  }
  double share_total = 0.0;
  for (const auto& [g, share] : config.group_targets) {
    if (!(share >= 0.0 && share <= 1.0)) add(g, "share_range", "group target share must lie in [0, 1]");
    share_total += share;
  }
  if (share_total > 1.0 + 1e-9) add("group_targets", "share_sum", "group target shares exceed 1");
  for (auto& msg : band_violations(config.cutoffs)) add("clinical_cutoffs", "partition", std::move(msg));
  std::set<std::string> names;
  for (const auto& f : config.demographics) {
    if (f.name.empty()) add("demographics", "name", "demographic field names must be non-empty");
    if (!names.insert(f.name).second) add(f.name, "unique", "duplicate demographic field");
    if (f.type == FieldType::Choice && f.choices.empty())
      add(f.name, "choices", "choice field needs at least one choice");
  }
  if (config.results_webhook && config.results_webhook->rfind("http://", 0) != 0 &&
      config.results_webhook->rfind("https://", 0) != 0)
    add("results_webhook", "url", "webhook must be an http(s) URL");

  if (bank) {
    if (config.model != bank->model)
      add("model", "bank_model", "config model " + std::string(to_string(config.model)) +
                                     " differs from bank model " + std::string(to_string(bank->model)));
    const auto n = static_cast<int>(bank->items.size());
    if (config.max_items > n)
      add("max_items", "bank_size", "max_items exceeds the bank size; sessions may stop with POOL_EXHAUSTED",
          true);
    const auto groups = bank->groups();
    for (const auto& [g, share] : config.group_targets)
      if (!groups.contains(g)) add(g, "unknown_group", "group target references unknown group '" + g + "'");
    for (const auto& [id, k] : config.exposure.targets)
      if (!bank->find(id)) add(id, "unknown_item", "exposure target references unknown item '" + id + "'");
  }
  return out;
}

std::optional<std::string> SessionState::outstanding_item() const {
  if (!item_outstanding()) return std::nullopt;
  return administered.back();
}

AbilityEstimate SessionState::current_estimate(const StudyConfig& config) const {
  if (!trajectory.empty()) return trajectory.back();
  AbilityEstimate prior;
  prior.theta = config.estimation.bounds.clamp(config.estimation.prior.mean);
  prior.se = config.estimation.prior.sd;
  prior.method = Method::EAP;
  return prior;
}

std::mt19937_64 step_rng(std::uint64_t seed, std::uint64_t step, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

bool selection_uses_ledger(const StudyConfig& config) {
  return config.exposure.enabled || (config.criterion == Criterion::Constrained && config.weights.gamma != 0.0);
}

ExposureLedger make_ledger(const StudyConfig& config) {
  ExposureLedger ledger;
  ledger.set_uniform_target(config.exposure.uniform_target);
  for (const auto& [id, k] : config.exposure.targets) ledger.set_target(id, k);
  return ledger;
}

SessionState start_session(const StudyConfig& config, const ItemBank& bank, std::string session_id,
                           std::uint64_t seed, std::int64_t now_ms, ExposureLedger* ledger) {
  if (session_id.empty()) throw std::invalid_argument("session id must be non-empty");
  const auto violations = validate_config(config, &bank);
  if (has_errors(violations)) {
    std::string msg = "config does not match bank";
    for (const auto& v : violations)
      if (!v.warning) msg += "; " + v.subject + ": " + v.message;
    throw std::invalid_argument(msg);
  }
  SessionState s;
  s.id = std::move(session_id);
  s.seed = seed;
  s.phase = config.demographics.empty() ? Phase::Created : Phase::Demographics;
  s.created_ms = now_ms;
  s.last_activity_ms = now_ms;
  for (const auto& v : violations)
    if (v.warning) s.warnings.push_back(v.message);
  if (ledger) ledger->begin_session();
  return s;
}

void begin_test(SessionState& state, std::int64_t now_ms) {
  require_phase(state, Phase::Created, "begin_test");
  state.phase = Phase::Running;
  state.last_activity_ms = now_ms;
}

std::vector<Violation> submit_demographics(SessionState& state, const StudyConfig& config,
                                           const std::map<std::string, std::string>& values,
                                           std::int64_t now_ms) {
  require_phase(state, Phase::Demographics, "submit_demographics");
  std::vector<Violation> out;
  for (const auto& f : config.demographics) {
    auto it = values.find(f.name);
    if (it == values.end() || it->second.empty()) {
      if (f.required) out.push_back({f.name, "required", "field is required"});
      continue;
    }
    if (auto err = parse_field(f, it->second)) out.push_back({f.name, "format", *err});
  }
  for (const auto& [k, v] : values) {
    const bool known = std::any_of(config.demographics.begin(), config.demographics.end(),
                                   [&](const DemographicField& f) { return f.name == k; });
    if (!known) out.push_back({k, "unknown_field", "field is not configured for this study"});
  }
  if (!out.empty()) return out;
  for (const auto& [k, v] : values)
    if (!v.empty()) state.demographics[k] = v;
  state.phase = Phase::Running;
  state.last_activity_ms = now_ms;
  return out;
}

std::optional<StopReason> stop_check(const SessionState& state, const StudyConfig& config) {
  const auto answered = static_cast<int>(state.responses.size());
  const double se = state.current_estimate(config).se;
  if (answered >= config.min_items && se <= config.min_sem) return StopReason::SemReached;
  if (answered >= config.max_items) return StopReason::MaxItems;
  return std::nullopt;
}

void issue_item(SessionState& state, const ItemBank& bank, const std::string& item_id,
                std::vector<std::string> sh_rejected, std::int64_t now_ms) {
  require_phase(state, Phase::Running, "issue_item");
  if (state.item_outstanding()) throw SequenceError("an item is already outstanding");
  if (!bank.find(item_id)) throw std::invalid_argument("unknown item '" + item_id + "'");
  if (std::find(state.administered.begin(), state.administered.end(), item_id) != state.administered.end())
    throw SequenceError("item '" + item_id + "' was already administered");
  for (auto& r : sh_rejected) state.sh_rejected.insert(std::move(r));
  state.administered.push_back(item_id);
  state.item_issued_ms = now_ms;
  state.last_activity_ms = now_ms;
}

NextStep next_item(SessionState& state, const StudyConfig& config, const ItemBank& bank,
                   ExposureLedger* ledger, std::int64_t now_ms) {
  require_phase(state, Phase::Running, "next_item");
  if (state.item_outstanding()) throw SequenceError("an item is already outstanding");

  auto finish = [&](StopReason reason) {
    state.phase = Phase::Finished;
    state.stop_reason = reason;
    state.last_activity_ms = now_ms;
    return NextStep{StopDecision{reason}};
  };
  if (auto reason = stop_check(state, config)) return finish(*reason);

  const std::set<std::string> administered(state.administered.begin(), state.administered.end());
  auto pool = remaining_pool(bank.items, administered);
  if (pool.empty()) {
    if (static_cast<int>(state.responses.size()) < config.min_items)
      state.warnings.push_back("item pool exhausted before min_items was reached");
    return finish(StopReason::PoolExhausted);
  }

  const auto step = static_cast<std::uint64_t>(state.responses.size());
  auto rng = step_rng(state.seed, step);
  const AbilityEstimate est = state.current_estimate(config);

  if (static_cast<int>(state.responses.size()) < config.adaptive_start) {
    const double centre = config.estimation.prior.mean;
    const auto& chosen = pick_best(
        pool, [centre](const ItemParameters& it) { return -std::abs(it.location() - centre); },
        kWarmStartTop, &rng);
    issue_item(state, bank, chosen.id, {}, now_ms);
    return ItemDecision{chosen.id, {}};
  }

  static const ExposureLedger kEmptyLedger;
  const ExposureLedger& ledger_view = ledger ? *ledger : kEmptyLedger;
  const ContentState content = content_state(state, config, bank);
  std::function<double(const ItemParameters&)> score;
  switch (config.criterion) {
    case Criterion::MFI:
      score = [&](const ItemParameters& it) { return item_information(it, est.theta); };
      break;
    case Criterion::MFIPrecision:
      score = [&](const ItemParameters& it) {
        return precision_weighted_score(item_information(it, est.theta), est);
      };
      break;
    case Criterion::Constrained:
      score = [&](const ItemParameters& it) {
        return constrained_score(it, est, config.weights, ledger_view, content);
      };
      break;
  }

  std::vector<std::string> rejected;
  if (config.exposure.enabled) {
    if (!ledger) throw std::invalid_argument("exposure control requires an exposure ledger");
    std::vector<const ItemParameters*> candidates;
    for (const auto* it : pool)
      if (!state.sh_rejected.contains(it->id)) candidates.push_back(it);
    while (!candidates.empty()) {
      const auto& cand = pick_best(candidates, score, config.randomesque, &rng);
      const double p = sympson_hetter_probability(cand.id, *ledger, config.exposure.basis);
      ledger->record_selection(cand.id);
      const bool accept = p >= 1.0 || std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
      if (accept) {
        issue_item(state, bank, cand.id, rejected, now_ms);
        return ItemDecision{cand.id, std::move(rejected), true};
      }
      rejected.push_back(cand.id);
      std::erase(candidates, &cand);
    }
    // Every candidate was turned down: take the best remaining item.
  }
  const auto& chosen = pick_best(pool, score, config.randomesque, &rng);
  issue_item(state, bank, chosen.id, rejected, now_ms);
  return ItemDecision{chosen.id, std::move(rejected)};
}

AbilityEstimate estimate_for_step(const StudyConfig& config, const ItemBank& bank,
                                  const std::vector<Response>& responses) {
  if (static_cast<int>(responses.size()) <= config.adaptive_start) {
    AbilityEstimate est = estimate_eap(bank.items, responses, config.estimation.prior,
                                       config.estimation.grid, config.estimation.bounds);
    est.fallback = config.estimation.primary != Method::EAP;
    return est;
  }
  return fallback_chain(config.estimation, bank.items, responses);
}

AbilityEstimate submit_response(SessionState& state, const StudyConfig& config, const ItemBank& bank,
                                ExposureLedger* ledger, const Response& response, std::int64_t now_ms) {
  require_phase(state, Phase::Running, "submit_response");
  const auto outstanding = state.outstanding_item();
  if (!outstanding) throw SequenceError("no item is outstanding");
  if (response.item_id != *outstanding)
    throw SequenceError("response references '" + response.item_id + "' but the outstanding item is '" +
                        *outstanding + "'");
  const auto* item = bank.find(response.item_id);
  if (!item) throw ResponseError("unknown item '" + response.item_id + "'");
  if (response.value < 0 || response.value >= item->categories())
    throw ResponseError("response value " + std::to_string(response.value) + " outside [0, " +
                        std::to_string(item->categories() - 1) + "] for item '" + item->id + "'");
  if (response.latency_ms && *response.latency_ms < 0) throw ResponseError("latency must be non-negative");

  std::vector<Response> responses = state.responses;
  responses.push_back(response);
  AbilityEstimate est = estimate_for_step(config, bank, responses);
  state.responses = std::move(responses);
  state.trajectory.push_back(est);
  state.last_activity_ms = now_ms;
  if (ledger) ledger->record_administration(response.item_id);
  return est;
}

void expire(SessionState& state, std::int64_t now_ms) {
  if (state.phase == Phase::Finished || state.phase == Phase::Expired)
    throw SequenceError("session already ended");
  state.phase = Phase::Expired;
  state.last_activity_ms = now_ms;
}

bool check_expiry(SessionState& state, const StudyConfig& config, std::int64_t now_ms) {
  if (state.phase == Phase::Finished || state.phase == Phase::Expired) return false;
  const std::int64_t limit = static_cast<std::int64_t>(config.session_timeout_minutes) * 60'000;
  if (now_ms - state.last_activity_ms <= limit) return false;
  expire(state, now_ms);
  return true;
}

SessionResult finalize(const SessionState& state, const StudyConfig& config) {
  if (state.phase != Phase::Finished && state.phase != Phase::Expired)
    throw SequenceError("finalize called before the session stopped");
  SessionResult r;
  r.session_id = state.id;
  r.disposition = state.phase;
  r.stop_reason = state.stop_reason;
  r.final_estimate = state.current_estimate(config);
  r.items_administered = static_cast<int>(state.responses.size());
  for (std::size_t i = 0; i < state.responses.size(); ++i) {
    ItemRecord rec;
    rec.item_id = state.responses[i].item_id;
    rec.response = state.responses[i].value;
    rec.theta = state.trajectory[i].theta;
    rec.se = state.trajectory[i].se;
    rec.method = state.trajectory[i].method;
    rec.fallback = state.trajectory[i].fallback;
    rec.latency_ms = state.responses[i].latency_ms;
    r.records.push_back(std::move(rec));
  }
  if (!config.cutoffs.empty()) r.classification = classify(config.cutoffs, r.final_estimate.theta);
  r.duration_ms = state.last_activity_ms - state.created_ms;
  r.warnings = state.warnings;
  return r;
}

}  // namespace cat
