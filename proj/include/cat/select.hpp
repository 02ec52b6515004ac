#pragma once

// Next-item selection: maximum Fisher information, the precision-weighted
// variant, the constrained weighted composite, Sympson-Hetter exposure
// filtering and the bookkeeping ledger it reads.

#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "cat/estimate.hpp"
#include "cat/irt.hpp"

namespace cat {

class PoolExhausted : public std::runtime_error {
 public:
  PoolExhausted() : std::runtime_error("no unadministered items remain in the pool") {}
};

struct SelectionWeights {
  double alpha = 1.0;   // information
  double beta = 0.5;    // content balance
  double gamma = 0.25;  // inverse exposure
  double delta = 0.0;   // external score
  std::map<std::string, double> external_scores;

  bool valid() const;
};

/// Which rate sits in the Sympson-Hetter denominator.
enum class ExposureRateBasis {
  // K_i / s_i with s_i the share of sessions in which the item was the
  // selected candidate. Administration rates settle at K_i, slowly.
  Selection,
  // K_i / r_i with r_i the administration rate.
  Administration,
  // (K_i / s_i) * (K_i / r_i)^2: the selection-rate rule with feedback on
  // the realized administration rate. Fixed point r_i = K_i.
  Corrected,
  // K_i / (r_i * N), kept for compatibility with the published formula.
  LiteralPerExaminee,
};

/// Cross-session exposure bookkeeping. Not synchronized; callers serialize
/// writes per ledger.
class ExposureLedger {
 public:
  ExposureLedger() = default;

  void begin_session() { ++sessions_total_; }
  void record_administration(const std::string& item_id);
  void record_selection(const std::string& item_id);
  void set_target(const std::string& item_id, double k);
  void set_uniform_target(double k) { uniform_target_ = k; }

  long long sessions_total() const { return sessions_total_; }
  long long administrations(const std::string& item_id) const;
  long long selections(const std::string& item_id) const;
  double exposure_rate(const std::string& item_id) const;
  double selection_rate(const std::string& item_id) const;
  std::optional<double> target(const std::string& item_id) const;

  const std::unordered_map<std::string, long long>& administration_counts() const {
    return administrations_;
  }

 private:
  long long sessions_total_ = 0;
  std::unordered_map<std::string, long long> administrations_;
  std::unordered_map<std::string, long long> selections_;
  std::unordered_map<std::string, double> targets_;
  std::optional<double> uniform_target_;
};

/// Adds one administration. Throws std::invalid_argument for ids outside the bank.
void record_administration(ExposureLedger& ledger, std::span<const ItemParameters> bank,
                           const std::string& item_id);

/// Items not yet administered, in bank order.
std::vector<const ItemParameters*> remaining_pool(std::span<const ItemParameters> bank,
                                                  const std::set<std::string>& administered);

/// Highest score wins; exact ties go to the lexicographically smallest id.
/// With randomesque > 1 the pick is uniform among the top `randomesque`.
const ItemParameters& pick_best(std::span<const ItemParameters* const> pool,
                                const std::function<double(const ItemParameters&)>& score,
                                int randomesque = 1, std::mt19937_64* rng = nullptr);

const ItemParameters& mfi_select(std::span<const ItemParameters> bank,
                                 const std::set<std::string>& administered, double theta);

/// The precision-weighting hook w(theta); constant 1 unless replaced.
using PrecisionWeight = std::function<double(const AbilityEstimate&)>;

double precision_weighted_score(double information, const AbilityEstimate& estimate,
                                const PrecisionWeight& weight = {});

const ItemParameters& precision_weighted_mfi(std::span<const ItemParameters> bank,
                                             const std::set<std::string>& administered,
                                             const AbilityEstimate& estimate,
                                             const PrecisionWeight& weight = {});

/// Per-session content state used by the balancing term.
struct ContentState {
  std::map<std::string, double> targets;  // group -> target share
  std::map<std::string, int> counts;      // group -> administered this session
  int total = 0;

  /// Shortfall of the group's share below its target, scaled so the most
  /// under-represented group scores 1. Zero for untargeted groups.
  double balance_score(const std::optional<std::string>& group) const;
};

double constrained_score(const ItemParameters& item, const AbilityEstimate& estimate,
                         const SelectionWeights& weights, const ExposureLedger& ledger,
                         const ContentState& content);

const ItemParameters& constrained_weighted_select(std::span<const ItemParameters> bank,
                                                  const std::set<std::string>& administered,
                                                  const AbilityEstimate& estimate,
                                                  const SelectionWeights& weights,
                                                  const ExposureLedger& ledger,
                                                  const ContentState& content);

/// Probability that a selected candidate is administered.
double sympson_hetter_probability(const std::string& item_id, const ExposureLedger& ledger,
                                  ExposureRateBasis basis = ExposureRateBasis::Corrected);

bool sympson_hetter_filter(const std::string& item_id, const ExposureLedger& ledger,
                           std::mt19937_64& rng,
                           ExposureRateBasis basis = ExposureRateBasis::Corrected);

}  // namespace cat
