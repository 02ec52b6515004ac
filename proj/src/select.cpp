#include "cat/select.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cat {

bool SelectionWeights::valid() const {
  auto ok = [](double w) { return std::isfinite(w) && w >= 0.0; };
  if (!ok(alpha) || !ok(beta) || !ok(gamma) || !ok(delta)) return false;
  for (const auto& [id, s] : external_scores)
    if (!(s >= 0.0 && s <= 1.0)) return false;
  return alpha > 0.0 || beta > 0.0 || gamma > 0.0 || delta > 0.0;
}

void ExposureLedger::record_administration(const std::string& item_id) {
  ++administrations_[item_id];
}

void ExposureLedger::record_selection(const std::string& item_id) { ++selections_[item_id]; }

void ExposureLedger::set_target(const std::string& item_id, double k) {
  if (!(k > 0.0 && k <= 1.0)) throw std::invalid_argument("exposure target must lie in (0, 1]");
  targets_[item_id] = k;
}

long long ExposureLedger::administrations(const std::string& item_id) const {
  auto it = administrations_.find(item_id);
  return it == administrations_.end() ? 0 : it->second;
}

long long ExposureLedger::selections(const std::string& item_id) const {
  auto it = selections_.find(item_id);
  return it == selections_.end() ? 0 : it->second;
}

double ExposureLedger::exposure_rate(const std::string& item_id) const {
  return static_cast<double>(administrations(item_id)) /
         static_cast<double>(std::max<long long>(1, sessions_total_));
}

double ExposureLedger::selection_rate(const std::string& item_id) const {
  return static_cast<double>(selections(item_id)) /
         static_cast<double>(std::max<long long>(1, sessions_total_));
}

std::optional<double> ExposureLedger::target(const std::string& item_id) const {
  auto it = targets_.find(item_id);
  if (it != targets_.end()) return it->second;
  return uniform_target_;
}

void record_administration(ExposureLedger& ledger, std::span<const ItemParameters> bank,
                           const std::string& item_id) {
  const bool known = std::any_of(bank.begin(), bank.end(),
                                 [&](const ItemParameters& it) { return it.id == item_id; });
  if (!known) throw std::invalid_argument("unknown item '" + item_id + "'");
  ledger.record_administration(item_id);
}

std::vector<const ItemParameters*> remaining_pool(std::span<const ItemParameters> bank,
                                                  const std::set<std::string>& administered) {
  std::vector<const ItemParameters*> pool;
  pool.reserve(bank.size());
  for (const auto& it : bank)
    if (!administered.contains(it.id)) pool.push_back(&it);
  return pool;
}

const ItemParameters& pick_best(std::span<const ItemParameters* const> pool,
                                const std::function<double(const ItemParameters&)>& score,
                                int randomesque, std::mt19937_64* rng) {
  if (pool.empty()) throw PoolExhausted();
  std::vector<std::pair<double, const ItemParameters*>> scored;
  scored.reserve(pool.size());
  for (const auto* it : pool) scored.emplace_back(score(*it), it);
  auto better = [](const auto& x, const auto& y) {
    if (x.first != y.first) return x.first > y.first;
    return x.second->id < y.second->id;
  };
  const std::size_t k =
      std::min<std::size_t>(scored.size(), static_cast<std::size_t>(std::max(1, randomesque)));
  if (k == 1 || rng == nullptr) {
    return *std::min_element(scored.begin(), scored.end(), better)->second;
  }
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(),
                    better);
  std::uniform_int_distribution<std::size_t> pick(0, k - 1);
  return *scored[pick(*rng)].second;
}

const ItemParameters& mfi_select(std::span<const ItemParameters> bank,
                                 const std::set<std::string>& administered, double theta) {
  const auto pool = remaining_pool(bank, administered);
  return pick_best(pool, [theta](const ItemParameters& it) { return item_information(it, theta); });
}

double precision_weighted_score(double information, const AbilityEstimate& estimate,
                                const PrecisionWeight& weight) {
  const double w = weight ? weight(estimate) : 1.0;
  return information / (1.0 + information * estimate.se * estimate.se) * w;
}

const ItemParameters& precision_weighted_mfi(std::span<const ItemParameters> bank,
                                             const std::set<std::string>& administered,
                                             const AbilityEstimate& estimate,
                                             const PrecisionWeight& weight) {
  if (!(estimate.se > 0.0)) throw std::invalid_argument("precision weighting needs se > 0");
  const auto pool = remaining_pool(bank, administered);
  return pick_best(pool, [&](const ItemParameters& it) {
    return precision_weighted_score(item_information(it, estimate.theta), estimate, weight);
  });
}

double ContentState::balance_score(const std::optional<std::string>& group) const {
  if (!group || !targets.contains(*group)) return 0.0;
  auto shortfall = [&](const std::string& g, double target) {
    const auto it = counts.find(g);
    const double observed =
        total > 0 && it != counts.end() ? static_cast<double>(it->second) / total : 0.0;
    return std::max(0.0, target - observed);
  };
  double largest = 0.0;
  for (const auto& [g, t] : targets) largest = std::max(largest, shortfall(g, t));
  if (largest <= 0.0) return 0.0;
  return shortfall(*group, targets.at(*group)) / largest;
}

double constrained_score(const ItemParameters& item, const AbilityEstimate& estimate,
                         const SelectionWeights& weights, const ExposureLedger& ledger,
                         const ContentState& content) {
  double score = 0.0;
  if (weights.alpha != 0.0) score += weights.alpha * item_information(item, estimate.theta);
  if (weights.beta != 0.0) score += weights.beta * content.balance_score(item.group);
  if (weights.gamma != 0.0)
    score += weights.gamma / (1.0 + static_cast<double>(ledger.administrations(item.id)));
  if (weights.delta != 0.0) {
    auto it = weights.external_scores.find(item.id);
    if (it != weights.external_scores.end()) score += weights.delta * it->second;
  }
  return score;
}

const ItemParameters& constrained_weighted_select(std::span<const ItemParameters> bank,
                                                  const std::set<std::string>& administered,
                                                  const AbilityEstimate& estimate,
                                                  const SelectionWeights& weights,
                                                  const ExposureLedger& ledger,
                                                  const ContentState& content) {
  if (!weights.valid()) throw std::invalid_argument("selection weights are invalid");
  const auto pool = remaining_pool(bank, administered);
  return pick_best(pool, [&](const ItemParameters& it) {
    return constrained_score(it, estimate, weights, ledger, content);
  });
}

double sympson_hetter_probability(const std::string& item_id, const ExposureLedger& ledger,
                                  ExposureRateBasis basis) {
  const auto k = ledger.target(item_id);
  if (!k) return 1.0;
  double denom = 0.0;
  switch (basis) {
    case ExposureRateBasis::Selection:
      denom = ledger.selection_rate(item_id);
      break;
    case ExposureRateBasis::Administration:
      denom = ledger.exposure_rate(item_id);
      break;
    case ExposureRateBasis::Corrected:
      denom = ledger.selection_rate(item_id) * std::pow(ledger.exposure_rate(item_id) / *k, 2);
      break;
    case ExposureRateBasis::LiteralPerExaminee:
      denom = ledger.exposure_rate(item_id) * static_cast<double>(ledger.sessions_total());
      break;
  }
  if (denom <= 0.0) return 1.0;
  return std::min(1.0, *k / denom);
}

bool sympson_hetter_filter(const std::string& item_id, const ExposureLedger& ledger,
                           std::mt19937_64& rng, ExposureRateBasis basis) {
  const double p = sympson_hetter_probability(item_id, ledger, basis);
  if (p >= 1.0) return true;
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

}  // namespace cat
