#include "cat/simlab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <set>
#include <stdexcept>
#include <thread>

namespace cat {

std::string_view to_string(AbilityDistribution d) {
  switch (d) {
    case AbilityDistribution::Normal: return "normal";
    case AbilityDistribution::PositiveSkew: return "positive_skew";
    case AbilityDistribution::NegativeSkew: return "negative_skew";
    case AbilityDistribution::Bimodal: return "bimodal";
  }
  return "normal";
}

AbilityDistribution distribution_from_string(std::string_view s) {
  if (s == "normal") return AbilityDistribution::Normal;
  if (s == "positive_skew") return AbilityDistribution::PositiveSkew;
  if (s == "negative_skew") return AbilityDistribution::NegativeSkew;
  if (s == "bimodal") return AbilityDistribution::Bimodal;
  throw std::invalid_argument("unknown ability distribution '" + std::string(s) + "'");
}

double sample_ability(AbilityDistribution d, std::mt19937_64& rng) {
  switch (d) {
    case AbilityDistribution::Normal: return std::normal_distribution<double>(0.0, 1.0)(rng);
    case AbilityDistribution::PositiveSkew:
      return (std::chi_squared_distribution<double>(3.0)(rng) - 3.0) / std::sqrt(6.0);
    case AbilityDistribution::NegativeSkew:
      return -(std::chi_squared_distribution<double>(3.0)(rng) - 3.0) / std::sqrt(6.0);
    case AbilityDistribution::Bimodal: {
      const bool upper = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 0.5;
      return std::normal_distribution<double>(upper ? 1.0 : -1.0, 0.5)(rng);
    }
  }
  return 0.0;
}

int simulate_response(const ItemParameters& item, double theta, std::mt19937_64& rng) {
  const auto p = category_probabilities(item, theta);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < p.size(); ++k) {
    acc += p[k];
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(p.size()) - 1;
}

std::vector<Violation> validate_spec(const SimulationSpec& spec) {
  std::vector<Violation> out;
  auto add = [&](std::string subject, std::string rule, std::string msg) {
    out.push_back({std::move(subject), std::move(rule), std::move(msg), false});
  };
  if (spec.n_examinees < 1) add("n_examinees", "positive", "n_examinees must be at least 1");
  if (spec.replications < 1) add("replications", "positive", "replications must be at least 1");
  if (spec.bank_spec.has_value() == spec.bank_file.has_value())
    add("bank", "source", "give exactly one of bank.generate or bank.file");
  if (spec.linear_target_sem && !(*spec.linear_target_sem > 0.0))
    add("linear_target_sem", "positive", "linear_target_sem must be positive");
  if (spec.threads < 0) add("threads", "range", "threads must be non-negative");
  if (spec.positive_band) {
    const bool known = std::any_of(spec.config.cutoffs.begin(), spec.config.cutoffs.end(),
                                   [&](const Band& b) { return b.label == *spec.positive_band; });
    if (!known) add("positive_band", "unknown_band", "positive_band is not one of the clinical_cutoffs labels");
  }
  for (auto& v : validate_config(spec.config))
    if (!v.warning) out.push_back(std::move(v));
  return out;
}

SimulationSpec spec_from_json(const Json& j) {
  static const std::set<std::string> known{"name",        "bank",          "n_examinees",       "replications",
                                           "distribution", "config",       "linear_comparator", "linear_target_sem",
                                           "test_retest", "positive_band", "seed",              "threads"};
  if (!j.is_object()) throw ConfigError("simulation spec must be an object");
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) throw ConfigError("unknown key '" + k + "' in simulation spec");
  SimulationSpec s;
  try {
    s.name = j.value("name", s.name);
    if (j.contains("bank")) {
      const auto& b = j.at("bank");
      if (!b.is_object()) throw ConfigError("bank must be an object");
      for (const auto& [k, v] : b.items())
        if (k != "generate" && k != "file") throw ConfigError("unknown key '" + k + "' in bank");
      if (b.contains("generate")) s.bank_spec = bank_spec_from_json(b.at("generate"));
      if (b.contains("file")) s.bank_file = b.at("file").get<std::string>();
    }
    s.n_examinees = j.value("n_examinees", s.n_examinees);
    s.replications = j.value("replications", s.replications);
    if (j.contains("distribution")) s.distribution = distribution_from_string(j.at("distribution").get<std::string>());
    if (j.contains("config")) s.config = config_from_json(j.at("config"));
    s.linear_comparator = j.value("linear_comparator", s.linear_comparator);
    if (j.contains("linear_target_sem") && !j.at("linear_target_sem").is_null())
      s.linear_target_sem = j.at("linear_target_sem").get<double>();
    s.test_retest = j.value("test_retest", s.test_retest);
    if (j.contains("positive_band") && !j.at("positive_band").is_null())
      s.positive_band = j.at("positive_band").get<std::string>();
    s.seed = j.value("seed", s.seed);
    s.threads = j.value("threads", s.threads);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed simulation spec: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  s.config.demographics.clear();
  return s;
}

Json to_json(const SimulationSpec& s) {
  Json bank = Json::object();
  if (s.bank_spec) bank["generate"] = to_json(*s.bank_spec);
  if (s.bank_file) bank["file"] = *s.bank_file;
  return Json{{"name", s.name},
              {"bank", bank},
              {"n_examinees", s.n_examinees},
              {"replications", s.replications},
              {"distribution", to_string(s.distribution)},
              {"config", to_json(s.config)},
              {"linear_comparator", s.linear_comparator},
              {"linear_target_sem", s.linear_target_sem ? Json(*s.linear_target_sem) : Json(nullptr)},
              {"test_retest", s.test_retest},
              {"positive_band", s.positive_band ? Json(*s.positive_band) : Json(nullptr)},
              {"seed", s.seed},
              {"threads", s.threads}};
}

ItemBank load_spec_bank(const SimulationSpec& spec) {
  if (spec.bank_spec) return generate_bank(*spec.bank_spec);
  if (spec.bank_file) return load_bank_file(*spec.bank_file);
  throw std::invalid_argument("simulation spec has no bank");
}

double pearson(std::span<const double> x, std::span<const double> y) {
  const auto n = static_cast<double>(x.size());
  if (x.empty() || x.size() != y.size()) return std::nan("");
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nan("");
  return sxy / std::sqrt(sxx * syy);
}

Metrics compute_metrics(std::span<const ExamineeRecord> records) {
  Metrics m;
  m.n = static_cast<int>(records.size());
  if (records.empty()) return m;
  const double n = static_cast<double>(records.size());
  std::vector<double> truth, est;
  double se2 = 0.0, sum = 0.0, abs = 0.0, len = 0.0, se = 0.0;
  for (const auto& r : records) {
    const double e = r.theta_hat - r.theta_true;
    sum += e;
    se2 += e * e;
    abs += std::abs(e);
    len += r.length;
    se += r.se;
    truth.push_back(r.theta_true);
    est.push_back(r.theta_hat);
  }
  m.bias = sum / n;
  m.rmse = std::sqrt(se2 / n);
  m.mae = abs / n;
  m.mean_length = len / n;
  m.mean_se = se / n;
  double var = 0.0;
  for (const auto& r : records) {
    const double d = r.theta_hat - r.theta_true - m.bias;
    var += d * d;
  }
  m.error_variance = var / n;
  m.r = pearson(truth, est);
  return m;
}

ClassificationMetrics classification_metrics(std::span<const ExamineeRecord> records, const std::vector<Band>& bands,
                                             const std::optional<std::string>& positive_band) {
  if (!band_violations(bands).empty()) throw std::invalid_argument("cutoffs do not partition the real line");
  ClassificationMetrics c;
  if (records.empty()) return c;
  int agree = 0, tp = 0, pos = 0, tn = 0, neg = 0;
  for (const auto& r : records) {
    const auto truth = classify(bands, r.theta_true);
    const auto got = classify(bands, r.theta_hat);
    agree += truth == got;
    if (!positive_band) continue;
    if (truth == *positive_band) {
      ++pos;
      tp += got == *positive_band;
    } else {
      ++neg;
      tn += got != *positive_band;
    }
  }
  c.accuracy = static_cast<double>(agree) / static_cast<double>(records.size());
  if (pos > 0) c.sensitivity = static_cast<double>(tp) / pos;
  if (neg > 0) c.specificity = static_cast<double>(tn) / neg;
  return c;
}

SessionState simulate_session(const StudyConfig& config, const ItemBank& bank, double theta, std::uint64_t seed,
                              ExposureLedger* ledger) {
  auto s = start_session(config, bank, "sim", seed, 0, ledger);
  if (s.phase != Phase::Created) throw std::invalid_argument("simulated sessions cannot collect demographics");
  begin_test(s, 0);
  auto responses = step_rng(seed, 0, 2);
  for (std::int64_t t = 1;; ++t) {
    const auto step = next_item(s, config, bank, ledger, t);
    if (std::holds_alternative<StopDecision>(step)) break;
    const auto& id = std::get<ItemDecision>(step).item_id;
    submit_response(s, config, bank, ledger, {id, simulate_response(*bank.find(id), theta, responses), {}}, t);
  }
  return s;
}

double linear_mean_length(const ItemBank& bank, const StudyConfig& config, std::span<const double> thetas,
                          double target_sem, std::uint64_t seed) {
  if (thetas.empty()) return 0.0;
  std::vector<std::size_t> order(bank.items.size());
  std::iota(order.begin(), order.end(), 0);
  auto shuffle_rng = step_rng(seed, 0, 9);
  std::shuffle(order.begin(), order.end(), shuffle_rng);
  double total = 0.0;
  for (std::size_t j = 0; j < thetas.size(); ++j) {
    auto rng = step_rng(seed, j, 6);
    std::vector<Response> responses;
    for (std::size_t idx : order) {
      const auto& item = bank.items[idx];
      responses.push_back({item.id, simulate_response(item, thetas[j], rng), {}});
      if (estimate_for_step(config, bank, responses).se <= target_sem) break;
    }
    total += static_cast<double>(responses.size());
  }
  return total / static_cast<double>(thetas.size());
}

namespace {

struct ReplicationOut {
  std::vector<ExamineeRecord> records;
  std::map<std::string, long long> administrations;
  long long primary_steps = 0;
  long long primary_ok = 0;
};

Interval normal_ci(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() < 2) return {mean, mean};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double half = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return {mean - half, mean + half};
}

ReplicationOut run_replication(const SimulationSpec& spec, const StudyConfig& config, const ItemBank& bank, int rep,
                               const FinalEstimateHook& hook) {
  ReplicationOut out;
  auto rng = step_rng(spec.seed, static_cast<std::uint64_t>(rep), 1);
  auto ledger = make_ledger(config);
  auto retest_ledger = make_ledger(config);
  for (int j = 0; j < spec.n_examinees; ++j) {
    const double theta = sample_ability(spec.distribution, rng);
    const std::uint64_t seed = rng();
    const auto s = simulate_session(config, bank, theta, seed, &ledger);
    ExamineeRecord rec;
    rec.replication = rep;
    rec.theta_true = theta;
    auto est = s.current_estimate(config);
    if (hook) est = hook(theta, s);
    rec.theta_hat = est.theta;
    rec.se = est.se;
    rec.length = static_cast<int>(s.responses.size());
    rec.items = s.administered;
    for (std::size_t i = 0; i < s.trajectory.size(); ++i) {
      if (static_cast<int>(i) + 1 <= config.adaptive_start) continue;
      ++out.primary_steps;
      out.primary_ok += !s.trajectory[i].fallback;
    }
    for (const auto& id : s.administered) ++out.administrations[id];
    if (spec.test_retest) {
      const auto again = simulate_session(config, bank, theta, step_rng(seed, 0, 4)(), &retest_ledger);
      rec.retest_theta_hat = again.current_estimate(config).theta;
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

ConditionReport run_condition(const SimulationSpec& spec, const ItemBank& bank, const FinalEstimateHook& hook) {
  try {
    const auto spec_errors = validate_spec(spec);
    if (!spec_errors.empty()) throw std::invalid_argument(spec_errors.front().message);
    StudyConfig config = spec.config;
    config.demographics.clear();
    const auto config_errors = validate_config(config, &bank);
    if (has_errors(config_errors)) throw std::invalid_argument(config_errors.front().message);

    std::vector<ReplicationOut> reps(static_cast<std::size_t>(spec.replications));
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const int n_threads =
        std::min(spec.replications, spec.threads > 0 ? spec.threads : static_cast<int>(hw));
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&] {
      for (int k; (k = next++) < spec.replications;) {
        try {
          reps[static_cast<std::size_t>(k)] = run_replication(spec, config, bank, k, hook);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    };
    if (n_threads <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    ConditionReport report;
    report.name = spec.name;
    report.model = bank.model;
    report.n_items = static_cast<int>(bank.items.size());
    report.distribution = std::string(to_string(spec.distribution));
    report.seed = spec.seed;
    report.n_examinees = spec.n_examinees;
    report.replications = spec.replications;

    std::vector<double> rmse, bias, r;
    std::map<std::string, long long> administrations;
    long long steps = 0, ok = 0;
    for (auto& rep : reps) {
      const auto m = compute_metrics(rep.records);
      rmse.push_back(m.rmse);
      bias.push_back(m.bias);
      r.push_back(m.r);
      for (const auto& [id, n] : rep.administrations) administrations[id] += n;
      steps += rep.primary_steps;
      ok += rep.primary_ok;
      std::move(rep.records.begin(), rep.records.end(), std::back_inserter(report.records));
    }
    report.metrics = compute_metrics(report.records);
    report.rmse_ci = normal_ci(rmse);
    report.bias_ci = normal_ci(bias);
    report.r_ci = normal_ci(r);
    report.primary_convergence = steps ? static_cast<double>(ok) / static_cast<double>(steps) : 1.0;

    const double sessions = static_cast<double>(spec.n_examinees) * spec.replications;
    report.exposure_histogram.assign(20, 0);
    long long total_admin = 0;
    std::map<std::string, long long> by_group;
    for (const auto& item : bank.items) {
      const auto it = administrations.find(item.id);
      const long long n = it == administrations.end() ? 0 : it->second;
      const double rate = static_cast<double>(n) / sessions;
      report.max_exposure = std::max(report.max_exposure, rate);
      ++report.exposure_histogram[std::min<std::size_t>(19, static_cast<std::size_t>(rate / 0.05))];
      total_admin += n;
      if (item.group) by_group[*item.group] += n;
    }
    for (const auto& [g, n] : by_group)
      report.group_shares[g] = static_cast<double>(n) / static_cast<double>(total_admin);

    if (!config.cutoffs.empty())
      report.classification = classification_metrics(report.records, config.cutoffs, spec.positive_band);
    if (spec.test_retest) {
      std::vector<double> first, second;
      for (const auto& rec : report.records) {
        first.push_back(rec.theta_hat);
        second.push_back(*rec.retest_theta_hat);
      }
      report.test_retest_r = pearson(first, second);
    }
    if (spec.linear_comparator) {
      // Linear examinees reuse the first replication's abilities.
      std::vector<double> thetas;
      for (int j = 0; j < spec.n_examinees; ++j) thetas.push_back(report.records[static_cast<std::size_t>(j)].theta_true);
      const double target = spec.linear_target_sem.value_or(report.metrics.mean_se);
      report.linear_target_sem = target;
      report.linear_mean_length = linear_mean_length(bank, config, thetas, target, spec.seed);
      report.efficiency = 1.0 - report.metrics.mean_length / *report.linear_mean_length;
    }
    return report;
  } catch (const std::exception& e) {
    throw std::runtime_error("condition '" + spec.name + "': " + e.what());
  }
}

}  // namespace cat
