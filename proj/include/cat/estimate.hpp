#pragma once

// Ability estimation: EAP on a fixed quadrature grid (the fast path), and
// Newton-based ML, MAP and WLE (the precise path), plus the fallback chain
// that ends unconditionally in EAP.

#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "cat/irt.hpp"

namespace cat {

enum class Method { EAP, MAP, ML, WLE };

std::string_view to_string(Method m);
Method method_from_string(std::string_view s);

struct AbilityEstimate {
  double theta = 0.0;
  double se = 1.0;
  Method method = Method::EAP;
  bool converged = true;
  int iterations = 0;
  // True when the estimate came from a later link of the fallback chain.
  bool fallback = false;
};

struct Prior {
  double mean = 0.0;
  double sd = 1.0;

  double log_density(double theta) const;
};

struct QuadratureGrid {
  std::vector<double> nodes;
  std::vector<double> weights;

  /// n equally spaced nodes on [lo, hi] with unit weights.
  static QuadratureGrid uniform(double lo, double hi, int n);
  /// The default 101-node grid on [-5, 5].
  static const QuadratureGrid& standard();
};

struct Bounds {
  double lo = -4.5;
  double hi = 4.5;

  double clamp(double theta) const;
  bool contains(double theta) const { return theta >= lo && theta <= hi; }
};

class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by ML when the response pattern has no interior likelihood maximum.
class NonFiniteMLE : public EstimationError {
 public:
  using EstimationError::EstimationError;
};

inline constexpr double kScoreTolerance = 1e-8;
inline constexpr int kMaxNewtonIterations = 50;

AbilityEstimate estimate_eap(std::span<const ItemParameters> items,
                             std::span<const Response> responses, const Prior& prior = {},
                             const QuadratureGrid& grid = QuadratureGrid::standard(),
                             const Bounds& bounds = {});

AbilityEstimate estimate_ml(std::span<const ItemParameters> items,
                            std::span<const Response> responses, const Bounds& bounds = {});

AbilityEstimate estimate_map(std::span<const ItemParameters> items,
                             std::span<const Response> responses, const Prior& prior = {},
                             const Bounds& bounds = {});

AbilityEstimate estimate_wle(std::span<const ItemParameters> items,
                             std::span<const Response> responses, const Bounds& bounds = {});

struct EstimatorConfig {
  Method primary = Method::EAP;
  std::optional<Method> alternate;
  Prior prior;
  QuadratureGrid grid = QuadratureGrid::standard();
  Bounds bounds;
};

/// Runs one estimator by name. May throw EstimationError.
AbilityEstimate estimate_with(Method method, const EstimatorConfig& config,
                              std::span<const ItemParameters> items,
                              std::span<const Response> responses);

/// primary -> alternate -> EAP. Returns the first estimate that converged
/// with a finite theta inside the bounds; EAP is accepted unconditionally.
AbilityEstimate fallback_chain(const EstimatorConfig& config,
                               std::span<const ItemParameters> items,
                               std::span<const Response> responses);

}  // namespace cat
