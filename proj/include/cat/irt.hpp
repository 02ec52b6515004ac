#pragma once

// Item response models: probabilities, Fisher information and response
// log-likelihoods for the 1PL, 2PL, 3PL and graded response models.
//
// Everything here is on the plain logistic metric (no 1.7 scaling).

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cat {

enum class Model { OnePL, TwoPL, ThreePL, GRM };

std::string_view to_string(Model m);
Model model_from_string(std::string_view s);

inline constexpr double kMaxGuessing = 0.35;

struct ItemParameters {
  std::string id;
  Model model = Model::TwoPL;
  double a = 1.0;
  double b = 0.0;
  double c = 0.0;
  std::vector<double> thresholds;  // GRM only, strictly increasing
  std::optional<std::string> group;
  std::optional<std::string> text;  // display text passed through to clients

  /// Number of response categories (2 for dichotomous items).
  int categories() const {
    return model == Model::GRM ? static_cast<int>(thresholds.size()) + 1 : 2;
  }

  /// Location used by the warm-start rule; b for dichotomous items, the mean
  /// threshold for GRM items.
  double location() const;

  static ItemParameters one_pl(std::string id, double b);
  static ItemParameters two_pl(std::string id, double a, double b);
  static ItemParameters three_pl(std::string id, double a, double b, double c);
  static ItemParameters grm(std::string id, double a, std::vector<double> thresholds);
};

/// Returns human-readable descriptions of every violated item invariant.
std::vector<std::string> item_violations(const ItemParameters& item);

struct Response {
  std::string item_id;
  int value = 0;
  std::optional<long long> latency_ms;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class LikelihoodError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerically stable logistic function.
double logistic(double x);

/// P(category k | theta) for k = 0..m-1. Dichotomous items return
/// (P(incorrect), P(correct)).
std::vector<double> category_probabilities(const ItemParameters& item, double theta);

/// GRM boundary probability P*(X >= k). P*_0 = 1 and P*_m = 0.
double cumulative_probability(const ItemParameters& item, int k, double theta);

double item_information(const ItemParameters& item, double theta);

/// Sum of item information over a set of items.
double test_information(std::span<const ItemParameters* const> items, double theta);

/// Pairs each response with its item. Throws LikelihoodError on an empty
/// response set, an unknown item id, or an out-of-range category.
std::vector<const ItemParameters*> align(std::span<const ItemParameters> items,
                                         std::span<const Response> responses);

double response_log_likelihood(std::span<const ItemParameters> items,
                               std::span<const Response> responses, double theta);

/// Derivative of response_log_likelihood with respect to theta.
double score_function(std::span<const ItemParameters> items,
                      std::span<const Response> responses, double theta);

// Aligned-input variants used by the estimators to avoid repeated id lookups.
double log_likelihood_aligned(std::span<const ItemParameters* const> items,
                              std::span<const Response> responses, double theta);
double score_aligned(std::span<const ItemParameters* const> items,
                     std::span<const Response> responses, double theta);

}  // namespace cat
