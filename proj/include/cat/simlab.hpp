#pragma once

// Monte Carlo laboratory: simulated examinees run through headless engine
// sessions, with recovery metrics, a linear-test comparator and exposure and
// content summaries.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cat/bank.hpp"
#include "cat/engine.hpp"
#include "cat/json_io.hpp"

namespace cat {

enum class AbilityDistribution { Normal, PositiveSkew, NegativeSkew, Bimodal };

std::string_view to_string(AbilityDistribution d);
AbilityDistribution distribution_from_string(std::string_view s);

/// Standard normal; (chi2_3 - 3)/sqrt(6) and its mirror; 0.5 N(-1, 0.5^2) + 0.5 N(1, 0.5^2).
double sample_ability(AbilityDistribution d, std::mt19937_64& rng);

/// Inverse-CDF draw from category_probabilities(item, theta).
int simulate_response(const ItemParameters& item, double theta, std::mt19937_64& rng);

struct SimulationSpec {
  std::string name = "condition";
  std::optional<BankSpec> bank_spec;   // exactly one of bank_spec / bank_file
  std::optional<std::string> bank_file;
  int n_examinees = 500;
  int replications = 20;
  AbilityDistribution distribution = AbilityDistribution::Normal;
  StudyConfig config;
  bool linear_comparator = false;
  // Linear stopping target; when unset, the adaptive run's mean final se.
  std::optional<double> linear_target_sem;
  bool test_retest = false;
  std::optional<std::string> positive_band;  // for sensitivity/specificity
  std::uint64_t seed = 1;
  int threads = 0;  // 0 = hardware concurrency
};

std::vector<Violation> validate_spec(const SimulationSpec& spec);

/// Strict: unknown keys throw ConfigError. Demographics in the embedded
/// config are ignored by the simulator.
SimulationSpec spec_from_json(const Json& j);
Json to_json(const SimulationSpec& spec);

ItemBank load_spec_bank(const SimulationSpec& spec);

struct ExamineeRecord {
  int replication = 0;
  double theta_true = 0.0;
  double theta_hat = 0.0;
  double se = 0.0;
  int length = 0;
  std::vector<std::string> items;
  std::optional<double> retest_theta_hat;
};

struct Metrics {
  int n = 0;
  double rmse = 0.0;
  double bias = 0.0;
  double mae = 0.0;
  double r = 0.0;
  double error_variance = 0.0;  // population variance of theta_hat - theta
  double mean_length = 0.0;
  double mean_se = 0.0;
};

Metrics compute_metrics(std::span<const ExamineeRecord> records);

/// Pearson correlation; NaN when either side has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

struct ClassificationMetrics {
  double accuracy = 0.0;
  std::optional<double> sensitivity;  // absent when no true positives exist
  std::optional<double> specificity;  // absent when no true negatives exist
};

ClassificationMetrics classification_metrics(std::span<const ExamineeRecord> records, const std::vector<Band>& bands,
                                             const std::optional<std::string>& positive_band);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct ConditionReport {
  std::string name;
  Model model = Model::TwoPL;
  int n_items = 0;
  std::string distribution;
  std::uint64_t seed = 0;
  int n_examinees = 0;
  int replications = 0;
  Metrics metrics;
  Interval rmse_ci;  // normal approximation over replications
  Interval bias_ci;
  Interval r_ci;
  std::optional<double> linear_mean_length;
  std::optional<double> linear_target_sem;
  std::optional<double> efficiency;
  double primary_convergence = 1.0;  // share of post-warm-start steps without fallback
  double max_exposure = 0.0;          // pooled over replications
  std::vector<int> exposure_histogram;  // items per 0.05-wide exposure-rate bin
  std::map<std::string, double> group_shares;
  std::optional<ClassificationMetrics> classification;
  std::optional<double> test_retest_r;
  std::vector<ExamineeRecord> records;
};

/// Replaces the engine's final estimate; used to isolate metric code.
using FinalEstimateHook = std::function<AbilityEstimate(double theta_true, const SessionState& state)>;

/// Runs one condition. Deterministic in spec.seed regardless of threads.
ConditionReport run_condition(const SimulationSpec& spec, const ItemBank& bank,
                              const FinalEstimateHook& hook = nullptr);

/// Mean length of a fixed-order linear test stopped at se <= target_sem (or
/// bank exhaustion). The order is a seeded shuffle shared by all examinees.
double linear_mean_length(const ItemBank& bank, const StudyConfig& config, std::span<const double> thetas,
                          double target_sem, std::uint64_t seed);

/// Runs a single headless session against a simulated examinee.
SessionState simulate_session(const StudyConfig& config, const ItemBank& bank, double theta, std::uint64_t seed,
                              ExposureLedger* ledger);

}  // namespace cat
