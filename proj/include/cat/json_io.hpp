#pragma once

// JSON renderings of configs, session snapshots and results. These are the
// structured-text formats used on the wire and on disk.

#include <stdexcept>
#include <string>

#include <json.hpp>

#include "cat/engine.hpp"

namespace cat {

using Json = nlohmann::json;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr int kSnapshotSchemaVersion = 1;

Json to_json(const AbilityEstimate& est);
AbilityEstimate estimate_from_json(const Json& j);

Json to_json(const StudyConfig& config);
/// Strict: unknown keys and ill-typed values raise ConfigError.
StudyConfig config_from_json(const Json& j);

Json to_json(const SessionState& state);
SessionState state_from_json(const Json& j);

Json to_json(const SessionResult& result);

Json to_json(const BankSpec& spec);
/// Strict: unknown keys throw ConfigError.
BankSpec bank_spec_from_json(const Json& j);

Json to_json(const Violation& v);
Json to_json(const std::vector<Violation>& vs);

}  // namespace cat
