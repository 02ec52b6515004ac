#include "cat/irt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace cat {

namespace {

constexpr double kProbFloor = 1e-12;

void require_finite(double theta) {
  if (!std::isfinite(theta)) throw DomainError("theta must be finite");
}

double clamp_prob(double p) { return std::clamp(p, kProbFloor, 1.0 - kProbFloor); }

// Difference of two logistic values sigma(hi) - sigma(lo) for hi > lo, taken
// from whichever tail keeps the subtraction well conditioned.
double logistic_gap(double hi, double lo) {
  if (lo > 0.0) return logistic(-lo) - logistic(-hi);
  return logistic(hi) - logistic(lo);
}

}  // namespace

std::string_view to_string(Model m) {
  switch (m) {
    case Model::OnePL: return "1PL";
    case Model::TwoPL: return "2PL";
    case Model::ThreePL: return "3PL";
    case Model::GRM: return "GRM";
  }
  return "2PL";
}

Model model_from_string(std::string_view s) {
  if (s == "1PL" || s == "Rasch") return Model::OnePL;
  if (s == "2PL") return Model::TwoPL;
  if (s == "3PL") return Model::ThreePL;
  if (s == "GRM") return Model::GRM;
  throw std::invalid_argument("unknown model '" + std::string(s) + "'");
}

double ItemParameters::location() const {
  if (model != Model::GRM) return b;
  if (thresholds.empty()) return 0.0;
  return std::accumulate(thresholds.begin(), thresholds.end(), 0.0) /
         static_cast<double>(thresholds.size());
}

ItemParameters ItemParameters::one_pl(std::string id, double b) {
  ItemParameters p;
  p.id = std::move(id);
  p.model = Model::OnePL;
  p.b = b;
  return p;
}

ItemParameters ItemParameters::two_pl(std::string id, double a, double b) {
  ItemParameters p;
  p.id = std::move(id);
  p.model = Model::TwoPL;
  p.a = a;
  p.b = b;
  return p;
}

ItemParameters ItemParameters::three_pl(std::string id, double a, double b, double c) {
  ItemParameters p = two_pl(std::move(id), a, b);
  p.model = Model::ThreePL;
  p.c = c;
  return p;
}

ItemParameters ItemParameters::grm(std::string id, double a, std::vector<double> thresholds) {
  ItemParameters p;
  p.id = std::move(id);
  p.model = Model::GRM;
  p.a = a;
  p.thresholds = std::move(thresholds);
  return p;
}

std::vector<std::string> item_violations(const ItemParameters& item) {
  std::vector<std::string> out;
  auto add = [&](const std::string& msg) { out.push_back(msg); };
  if (item.id.empty()) add("item_id must be non-empty");
  if (!(item.a > 0.0) || !std::isfinite(item.a)) add("discrimination a must be positive");
  if (item.model == Model::OnePL && item.a != 1.0) add("1PL discrimination is fixed to 1.0");
  if (!std::isfinite(item.b)) add("difficulty b must be finite");
  if (item.model == Model::ThreePL) {
    if (!(item.c >= 0.0 && item.c <= kMaxGuessing))
      add("guessing c must lie in [0, 0.35]");
  } else if (item.c != 0.0) {
    add("guessing c is only valid for 3PL items");
  }
  if (item.model == Model::GRM) {
    if (item.thresholds.empty()) add("GRM item needs at least one threshold");
    for (std::size_t k = 0; k < item.thresholds.size(); ++k) {
      if (!std::isfinite(item.thresholds[k])) add("GRM thresholds must be finite");
      if (k > 0 && !(item.thresholds[k - 1] < item.thresholds[k])) {
        add("GRM thresholds must be strictly increasing");
        break;
      }
    }
  } else if (!item.thresholds.empty()) {
    add("thresholds are only valid for GRM items");
  }
  return out;
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double cumulative_probability(const ItemParameters& item, int k, double theta) {
  require_finite(theta);
  if (item.model != Model::GRM)
    throw std::invalid_argument("cumulative_probability requires a GRM item");
  const int m = item.categories();
  if (k < 0 || k > m) {
    std::ostringstream os;
    os << "category boundary " << k << " outside [0, " << m << "]";
    throw std::out_of_range(os.str());
  }
  if (k == 0) return 1.0;
  if (k == m) return 0.0;
  return logistic(item.a * (theta - item.thresholds[static_cast<std::size_t>(k - 1)]));
}

std::vector<double> category_probabilities(const ItemParameters& item, double theta) {
  require_finite(theta);
  if (item.model == Model::GRM) {
    const std::size_t m = item.thresholds.size() + 1;
    std::vector<double> p(m);
    // x_k = a(theta - b_k) is decreasing in k; boundaries 0 and m are +/-inf.
    const double inf = std::numeric_limits<double>::infinity();
    auto x = [&](std::size_t k) {
      if (k == 0) return inf;
      if (k == m) return -inf;
      return item.a * (theta - item.thresholds[k - 1]);
    };
    for (std::size_t k = 0; k < m; ++k) {
      const double hi = x(k);
      const double lo = x(k + 1);
      if (hi == inf) p[k] = logistic(-lo);
      else if (lo == -inf) p[k] = logistic(hi);
      else p[k] = logistic_gap(hi, lo);
    }
    return p;
  }
  const double s = logistic(item.a * (theta - item.b));
  const double sn = logistic(-item.a * (theta - item.b));
  const double c = item.model == Model::ThreePL ? item.c : 0.0;
  return {(1.0 - c) * sn, c + (1.0 - c) * s};
}

double item_information(const ItemParameters& item, double theta) {
  require_finite(theta);
  const double a2 = item.a * item.a;
  switch (item.model) {
    case Model::OnePL:
    case Model::TwoPL: {
      const double p = logistic(item.a * (theta - item.b));
      return a2 * p * (1.0 - p);
    }
    case Model::ThreePL: {
      const double s = logistic(item.a * (theta - item.b));
      const double p = item.c + (1.0 - item.c) * s;
      // ((P-c)/(1-c))^2 (1-P)/P with (P-c)/(1-c) = s and 1-P = (1-c)(1-s).
      return a2 * s * s * (1.0 - item.c) * logistic(-item.a * (theta - item.b)) / p;
    }
    case Model::GRM: {
      const auto probs = category_probabilities(item, theta);
      const std::size_t m = probs.size();
      auto w = [&](std::size_t k) {
        if (k == 0 || k == m) return 0.0;
        const double ps = logistic(item.a * (theta - item.thresholds[k - 1]));
        return ps * (1.0 - ps);
      };
      double info = 0.0;
      for (std::size_t k = 0; k < m; ++k) {
        const double d = w(k) - w(k + 1);
        if (probs[k] > 0.0) info += d * d / probs[k];
      }
      return a2 * info;
    }
  }
  return 0.0;
}

double test_information(std::span<const ItemParameters* const> items, double theta) {
  double total = 0.0;
  for (const auto* it : items) total += item_information(*it, theta);
  return total;
}

std::vector<const ItemParameters*> align(std::span<const ItemParameters> items,
                                         std::span<const Response> responses) {
  if (responses.empty()) throw LikelihoodError("empty response set");
  std::unordered_map<std::string_view, const ItemParameters*> by_id;
  by_id.reserve(items.size());
  for (const auto& it : items) by_id.emplace(it.id, &it);
  std::vector<const ItemParameters*> out;
  out.reserve(responses.size());
  for (const auto& r : responses) {
    auto found = by_id.find(r.item_id);
    if (found == by_id.end()) throw LikelihoodError("no item parameters for '" + r.item_id + "'");
    if (r.value < 0 || r.value >= found->second->categories())
      throw LikelihoodError("response value out of range for item '" + r.item_id + "'");
    out.push_back(found->second);
  }
  return out;
}

double log_likelihood_aligned(std::span<const ItemParameters* const> items,
                              std::span<const Response> responses, double theta) {
  require_finite(theta);
  double ll = 0.0;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    const auto& item = *items[i];
    const int u = responses[i].value;
    if (item.model == Model::GRM) {
      const auto probs = category_probabilities(item, theta);
      ll += std::log(clamp_prob(probs[static_cast<std::size_t>(u)]));
    } else {
      const auto probs = category_probabilities(item, theta);
      ll += u == 1 ? std::log(clamp_prob(probs[1])) : std::log(clamp_prob(probs[0]));
    }
  }
  return ll;
}

double score_aligned(std::span<const ItemParameters* const> items,
                     std::span<const Response> responses, double theta) {
  require_finite(theta);
  double score = 0.0;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    const auto& item = *items[i];
    const int u = responses[i].value;
    switch (item.model) {
      case Model::OnePL:
      case Model::TwoPL: {
        const double p = logistic(item.a * (theta - item.b));
        score += item.a * (u - p);
        break;
      }
      case Model::ThreePL: {
        const double x = item.a * (theta - item.b);
        const double s = logistic(x);
        if (u == 1) {
          const double p = item.c + (1.0 - item.c) * s;
          score += item.a * (1.0 - item.c) * s * logistic(-x) / p;
        } else {
          score -= item.a * s;
        }
        break;
      }
      case Model::GRM: {
        const auto probs = category_probabilities(item, theta);
        const std::size_t m = probs.size();
        const auto k = static_cast<std::size_t>(u);
        auto w = [&](std::size_t j) {
          if (j == 0 || j == m) return 0.0;
          const double ps = logistic(item.a * (theta - item.thresholds[j - 1]));
          return ps * (1.0 - ps);
        };
        score += item.a * (w(k) - w(k + 1)) / probs[k];
        break;
      }
    }
  }
  return score;
}

double response_log_likelihood(std::span<const ItemParameters> items,
                               std::span<const Response> responses, double theta) {
  const auto aligned = align(items, responses);
  return log_likelihood_aligned(aligned, responses, theta);
}

double score_function(std::span<const ItemParameters> items,
                      std::span<const Response> responses, double theta) {
  const auto aligned = align(items, responses);
  return score_aligned(aligned, responses, theta);
}

}  // namespace cat
