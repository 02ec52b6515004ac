#include "cat/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

namespace cat {

namespace {

struct RootResult {
  double x = 0.0;
  bool converged = false;
  int iterations = 0;
};

// Safeguarded Newton on [lo, hi] where f(lo) and f(hi) differ in sign.
// The derivative is taken numerically; any step leaving the current bracket
// is replaced by bisection.
RootResult solve_bracketed(const std::function<double(double)>& f, double lo, double hi,
                           double f_lo, double start) {
  constexpr double h = 1e-6;
  RootResult out;
  double x = std::clamp(start, lo, hi);
  const bool lo_positive = f_lo > 0.0;
  for (int it = 1; it <= kMaxNewtonIterations; ++it) {
    out.iterations = it;
    const double fx = f(x);
    if (std::abs(fx) < kScoreTolerance) {
      out.x = x;
      out.converged = true;
      return out;
    }
    if ((fx > 0.0) == lo_positive) lo = x;
    else hi = x;
    const double slope = (f(x + h) - f(x - h)) / (2.0 * h);
    double next = x - fx / slope;
    if (!std::isfinite(next) || next <= lo || next >= hi) next = 0.5 * (lo + hi);
    if (hi - lo < 1e-15) {
      out.x = next;
      out.converged = std::abs(f(next)) < kScoreTolerance;
      return out;
    }
    x = next;
  }
  out.x = x;
  out.converged = std::abs(f(x)) < kScoreTolerance;
  return out;
}

bool all_extreme(std::span<const ItemParameters* const> items, std::span<const Response> responses) {
  bool all_low = true;
  bool all_high = true;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    const int v = responses[i].value;
    if (v != 0) all_low = false;
    if (v != items[i]->categories() - 1) all_high = false;
  }
  return all_low || all_high;
}

double information_slope(std::span<const ItemParameters* const> items, double theta) {
  constexpr double h = 1e-5;
  return (test_information(items, theta + h) - test_information(items, theta - h)) / (2.0 * h);
}

double info_se(double information) {
  if (!(information > 0.0)) return std::numeric_limits<double>::infinity();
  return 1.0 / std::sqrt(information);
}

// Shared driver for the score-equation estimators. Returns a non-converged
// estimate pinned to the nearer bound when the root lies outside the bounds.
AbilityEstimate solve_score_equation(const std::function<double(double)>& f, const Bounds& bounds,
                                     Method method, double start) {
  AbilityEstimate est;
  est.method = method;
  const double f_lo = f(bounds.lo);
  const double f_hi = f(bounds.hi);
  if (f_lo == 0.0 || f_hi == 0.0) {
    est.theta = f_lo == 0.0 ? bounds.lo : bounds.hi;
    est.converged = true;
    return est;
  }
  if ((f_lo > 0.0) == (f_hi > 0.0)) {
    // Both positive: the root is above the upper bound.
    est.theta = f_lo > 0.0 ? bounds.hi : bounds.lo;
    est.converged = false;
    est.iterations = 0;
    return est;
  }
  const RootResult root = solve_bracketed(f, bounds.lo, bounds.hi, f_lo, start);
  est.theta = root.x;
  est.converged = root.converged;
  est.iterations = root.iterations;
  return est;
}

}  // namespace

std::string_view to_string(Method m) {
  switch (m) {
    case Method::EAP: return "EAP";
    case Method::MAP: return "MAP";
    case Method::ML: return "ML";
    case Method::WLE: return "WLE";
  }
  return "EAP";
}

Method method_from_string(std::string_view s) {
  if (s == "EAP") return Method::EAP;
  if (s == "MAP") return Method::MAP;
  if (s == "ML" || s == "MLE") return Method::ML;
  if (s == "WLE") return Method::WLE;
  throw std::invalid_argument("unknown estimation method '" + std::string(s) + "'");
}

double Prior::log_density(double theta) const {
  const double z = (theta - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

QuadratureGrid QuadratureGrid::uniform(double lo, double hi, int n) {
  if (n < 2 || !(hi > lo)) throw std::invalid_argument("quadrature grid needs n >= 2 and hi > lo");
  QuadratureGrid g;
  g.nodes.resize(static_cast<std::size_t>(n));
  g.weights.assign(static_cast<std::size_t>(n), 1.0);
  const double step = (hi - lo) / (n - 1);
  for (int i = 0; i < n; ++i) g.nodes[static_cast<std::size_t>(i)] = lo + step * i;
  return g;
}

const QuadratureGrid& QuadratureGrid::standard() {
  static const QuadratureGrid grid = uniform(-5.0, 5.0, 101);
  return grid;
}

double Bounds::clamp(double theta) const { return std::clamp(theta, lo, hi); }

AbilityEstimate estimate_eap(std::span<const ItemParameters> items,
                             std::span<const Response> responses, const Prior& prior,
                             const QuadratureGrid& grid, const Bounds& bounds) {
  if (grid.nodes.size() < 21 || grid.weights.size() != grid.nodes.size())
    throw EstimationError("EAP requires a grid of at least 21 nodes with matching weights");
  AbilityEstimate est;
  est.method = Method::EAP;
  est.converged = true;
  if (responses.empty()) {
    est.theta = bounds.clamp(prior.mean);
    est.se = prior.sd;
    return est;
  }
  const auto aligned = align(items, responses);
  const std::size_t n = grid.nodes.size();
  std::vector<double> log_post(n);
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t q = 0; q < n; ++q) {
    const double t = grid.nodes[q];
    log_post[q] = log_likelihood_aligned(aligned, responses, t) + prior.log_density(t) +
                  std::log(grid.weights[q]);
    peak = std::max(peak, log_post[q]);
  }
  if (!std::isfinite(peak)) throw EstimationError("degenerate posterior on quadrature grid");
  double mass = 0.0;
  double first = 0.0;
  for (std::size_t q = 0; q < n; ++q) {
    log_post[q] = std::exp(log_post[q] - peak);
    mass += log_post[q];
    first += log_post[q] * grid.nodes[q];
  }
  if (!(mass > 0.0)) throw EstimationError("degenerate posterior on quadrature grid");
  const double mean = first / mass;
  double second = 0.0;
  for (std::size_t q = 0; q < n; ++q) {
    const double d = grid.nodes[q] - mean;
    second += log_post[q] * d * d;
  }
  est.theta = bounds.clamp(mean);
  est.se = std::sqrt(second / mass);
  if (!(est.se > 0.0)) throw EstimationError("posterior collapsed to a single node");
  return est;
}

AbilityEstimate estimate_ml(std::span<const ItemParameters> items,
                            std::span<const Response> responses, const Bounds& bounds) {
  const auto aligned = align(items, responses);
  if (all_extreme(aligned, responses))
    throw NonFiniteMLE("response pattern is all-extreme; maximum likelihood estimate is infinite");
  auto score = [&](double t) { return score_aligned(aligned, responses, t); };
  AbilityEstimate est = solve_score_equation(score, bounds, Method::ML, 0.0);
  est.se = info_se(test_information(aligned, est.theta));
  return est;
}

AbilityEstimate estimate_map(std::span<const ItemParameters> items,
                             std::span<const Response> responses, const Prior& prior,
                             const Bounds& bounds) {
  const double precision = 1.0 / (prior.sd * prior.sd);
  if (responses.empty()) {
    AbilityEstimate est;
    est.method = Method::MAP;
    est.theta = bounds.clamp(prior.mean);
    est.se = prior.sd;
    est.converged = bounds.contains(prior.mean);
    return est;
  }
  const auto aligned = align(items, responses);
  auto penalized = [&](double t) {
    return score_aligned(aligned, responses, t) - (t - prior.mean) * precision;
  };
  AbilityEstimate est = solve_score_equation(penalized, bounds, Method::MAP, bounds.clamp(prior.mean));
  est.se = info_se(test_information(aligned, est.theta) + precision);
  return est;
}

AbilityEstimate estimate_wle(std::span<const ItemParameters> items,
                             std::span<const Response> responses, const Bounds& bounds) {
  const auto aligned = align(items, responses);
  auto weighted = [&](double t) {
    const double info = test_information(aligned, t);
    return score_aligned(aligned, responses, t) + information_slope(aligned, t) / (2.0 * info);
  };
  const double f_lo = weighted(bounds.lo);
  const double f_hi = weighted(bounds.hi);
  if ((f_lo > 0.0) == (f_hi > 0.0) && f_lo != 0.0 && f_hi != 0.0)
    throw EstimationError("weighted likelihood root is not bracketed within the bounds");
  AbilityEstimate est = solve_score_equation(weighted, bounds, Method::WLE, 0.0);
  est.se = info_se(test_information(aligned, est.theta));
  return est;
}

AbilityEstimate estimate_with(Method method, const EstimatorConfig& config,
                              std::span<const ItemParameters> items,
                              std::span<const Response> responses) {
  switch (method) {
    case Method::EAP: return estimate_eap(items, responses, config.prior, config.grid, config.bounds);
    case Method::MAP: return estimate_map(items, responses, config.prior, config.bounds);
    case Method::ML: return estimate_ml(items, responses, config.bounds);
    case Method::WLE: return estimate_wle(items, responses, config.bounds);
  }
  throw EstimationError("unknown method");
}

AbilityEstimate fallback_chain(const EstimatorConfig& config, std::span<const ItemParameters> items,
                               std::span<const Response> responses) {
  std::vector<Method> chain{config.primary};
  if (config.alternate && *config.alternate != config.primary) chain.push_back(*config.alternate);
  for (std::size_t i = 0; i < chain.size(); ++i) {
    if (chain[i] == Method::EAP) break;
    try {
      AbilityEstimate est = estimate_with(chain[i], config, items, responses);
      if (est.converged && std::isfinite(est.theta) && std::isfinite(est.se) && est.se > 0.0 &&
          config.bounds.contains(est.theta)) {
        est.fallback = i > 0;
        return est;
      }
    } catch (const EstimationError&) {
    } catch (const LikelihoodError&) {
      if (!responses.empty()) throw;
    }
  }
  AbilityEstimate est = estimate_eap(items, responses, config.prior, config.grid, config.bounds);
  est.fallback = config.primary != Method::EAP;
  return est;
}

}  // namespace cat
