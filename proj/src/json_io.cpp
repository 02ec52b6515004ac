#include "cat/json_io.hpp"

#include <cmath>
#include <limits>
#include <set>

namespace cat {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Json bound_to_json(double v) {
  if (v == kInf) return "Inf";
  if (v == -kInf) return "-Inf";
  return v;
}

double bound_from_json(const Json& j) {
  if (j.is_null()) throw ConfigError("band bound must not be null");
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "Inf" || s == "+Inf" || s == "inf") return kInf;
    if (s == "-Inf" || s == "-inf") return -kInf;
    throw ConfigError("bad band bound '" + s + "'");
  }
  return j.get<double>();
}

std::string_view to_string(FieldType t) {
  switch (t) {
    case FieldType::Integer: return "integer";
    case FieldType::Number: return "number";
    case FieldType::Text: return "text";
    case FieldType::Choice: return "choice";
  }
  return "text";
}

FieldType field_type_from_string(const std::string& s) {
  if (s == "integer") return FieldType::Integer;
  if (s == "number") return FieldType::Number;
  if (s == "text") return FieldType::Text;
  if (s == "choice") return FieldType::Choice;
  throw ConfigError("unknown demographic field type '" + s + "'");
}

std::string_view to_string(ExposureRateBasis b) {
  switch (b) {
    case ExposureRateBasis::Selection: return "selection";
    case ExposureRateBasis::Administration: return "administration";
    case ExposureRateBasis::Corrected: return "corrected";
    case ExposureRateBasis::LiteralPerExaminee: return "literal";
  }
  return "corrected";
}

ExposureRateBasis basis_from_string(const std::string& s) {
  if (s == "selection") return ExposureRateBasis::Selection;
  if (s == "administration") return ExposureRateBasis::Administration;
  if (s == "corrected") return ExposureRateBasis::Corrected;
  if (s == "literal") return ExposureRateBasis::LiteralPerExaminee;
  throw ConfigError("unknown exposure basis '" + s + "'");
}

void reject_unknown(const Json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [k, v] : j.items())
    if (!allowed.contains(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

Json response_to_json(const Response& r) {
  Json j{{"item_id", r.item_id}, {"value", r.value}};
  j["latency_ms"] = r.latency_ms ? Json(*r.latency_ms) : Json(nullptr);
  return j;
}

Response response_from_json(const Json& j) {
  Response r;
  r.item_id = j.at("item_id").get<std::string>();
  r.value = j.at("value").get<int>();
  if (j.contains("latency_ms") && !j.at("latency_ms").is_null()) r.latency_ms = j.at("latency_ms").get<long long>();
  return r;
}

}  // namespace

Json to_json(const AbilityEstimate& est) {
  return Json{{"theta", est.theta},         {"se", est.se},
              {"method", to_string(est.method)}, {"converged", est.converged},
              {"iterations", est.iterations}, {"fallback", est.fallback}};
}

AbilityEstimate estimate_from_json(const Json& j) {
  AbilityEstimate e;
  e.theta = j.at("theta").get<double>();
  e.se = j.at("se").get<double>();
  e.method = method_from_string(j.at("method").get<std::string>());
  e.converged = j.at("converged").get<bool>();
  e.iterations = j.at("iterations").get<int>();
  e.fallback = j.value("fallback", false);
  return e;
}

Json to_json(const StudyConfig& c) {
  Json j;
  j["name"] = c.name;
  j["model"] = to_string(c.model);
  j["estimation_method"] = to_string(c.estimation.primary);
  j["alternate_method"] = c.estimation.alternate ? Json(to_string(*c.estimation.alternate)) : Json(nullptr);
  j["prior"] = {{"mean", c.estimation.prior.mean}, {"sd", c.estimation.prior.sd}};
  j["theta_bounds"] = {c.estimation.bounds.lo, c.estimation.bounds.hi};
  const auto& g = c.estimation.grid.nodes;
  j["quadrature"] = {{"lo", g.front()}, {"hi", g.back()}, {"nodes", g.size()}};
  j["criteria"] = to_string(c.criterion);
  j["max_items"] = c.max_items;
  j["min_items"] = c.min_items;
  j["min_SEM"] = c.min_sem;
  j["adaptive_start"] = c.adaptive_start;
  j["randomesque"] = c.randomesque;
  j["exposure_control"] = {{"enabled", c.exposure.enabled},
                           {"target", c.exposure.uniform_target},
                           {"targets", c.exposure.targets},
                           {"basis", to_string(c.exposure.basis)}};
  j["weights"] = {{"alpha", c.weights.alpha},
                  {"beta", c.weights.beta},
                  {"gamma", c.weights.gamma},
                  {"delta", c.weights.delta},
                  {"external_scores", c.weights.external_scores}};
  j["group_targets"] = c.group_targets;
  Json bands = Json::array();
  for (const auto& b : c.cutoffs)
    bands.push_back({{"label", b.label}, {"lo", bound_to_json(b.lo)}, {"hi", bound_to_json(b.hi)}});
  j["clinical_cutoffs"] = bands;
  Json fields = Json::array();
  for (const auto& f : c.demographics) {
    Json fj{{"name", f.name}, {"type", to_string(f.type)}, {"required", f.required}};
    if (f.min) fj["min"] = *f.min;
    if (f.max) fj["max"] = *f.max;
    if (!f.choices.empty()) fj["choices"] = f.choices;
    fields.push_back(std::move(fj));
  }
  j["demographics"] = fields;
  j["session_save"] = c.session_save;
  j["results_webhook"] = c.results_webhook ? Json(*c.results_webhook) : Json(nullptr);
  j["seed"] = c.seed ? Json(*c.seed) : Json(nullptr);
  j["language"] = c.language;
  j["session_timeout"] = c.session_timeout_minutes;
  j["expose_theta"] = c.expose_theta;
  j["expose_se"] = c.expose_se;
  return j;
}

StudyConfig config_from_json(const Json& j) {
  reject_unknown(j,
                 {"name", "model", "estimation_method", "alternate_method", "prior", "theta_bounds",
                  "quadrature", "criteria", "max_items", "min_items", "min_SEM", "adaptive_start",
                  "randomesque", "exposure_control", "weights", "group_targets", "clinical_cutoffs",
                  "demographics", "session_save", "results_webhook", "seed", "language",
                  "session_timeout", "expose_theta", "expose_se"},
                 "study config");
  StudyConfig c;
  try {
    c.name = j.value("name", c.name);
    if (j.contains("model")) c.model = model_from_string(j.at("model").get<std::string>());
    if (j.contains("estimation_method"))
      c.estimation.primary = method_from_string(j.at("estimation_method").get<std::string>());
    if (j.contains("alternate_method") && !j.at("alternate_method").is_null())
      c.estimation.alternate = method_from_string(j.at("alternate_method").get<std::string>());
    if (j.contains("prior")) {
      const auto& p = j.at("prior");
      reject_unknown(p, {"mean", "sd"}, "prior");
      c.estimation.prior.mean = p.value("mean", 0.0);
      c.estimation.prior.sd = p.value("sd", 1.0);
    }
    if (j.contains("theta_bounds")) {
      const auto b = j.at("theta_bounds").get<std::vector<double>>();
      if (b.size() != 2) throw ConfigError("theta_bounds must be [lo, hi]");
      c.estimation.bounds = {b[0], b[1]};
    }
    if (j.contains("quadrature")) {
      const auto& q = j.at("quadrature");
      reject_unknown(q, {"lo", "hi", "nodes"}, "quadrature");
      c.estimation.grid = QuadratureGrid::uniform(q.value("lo", -5.0), q.value("hi", 5.0), q.value("nodes", 101));
    }
    if (j.contains("criteria")) c.criterion = criterion_from_string(j.at("criteria").get<std::string>());
    c.max_items = j.value("max_items", c.max_items);
    c.min_items = j.value("min_items", c.min_items);
    c.min_sem = j.value("min_SEM", c.min_sem);
    c.adaptive_start = j.value("adaptive_start", c.adaptive_start);
    c.randomesque = j.value("randomesque", c.randomesque);
    if (j.contains("exposure_control")) {
      const auto& e = j.at("exposure_control");
      if (e.is_boolean()) {
        c.exposure.enabled = e.get<bool>();
      } else {
        reject_unknown(e, {"enabled", "target", "targets", "basis"}, "exposure_control");
        c.exposure.enabled = e.value("enabled", true);
        c.exposure.uniform_target = e.value("target", c.exposure.uniform_target);
        if (e.contains("targets")) c.exposure.targets = e.at("targets").get<std::map<std::string, double>>();
        if (e.contains("basis")) c.exposure.basis = basis_from_string(e.at("basis").get<std::string>());
      }
    }
    if (j.contains("weights")) {
      const auto& w = j.at("weights");
      reject_unknown(w, {"alpha", "beta", "gamma", "delta", "external_scores"}, "weights");
      c.weights.alpha = w.value("alpha", c.weights.alpha);
      c.weights.beta = w.value("beta", c.weights.beta);
      c.weights.gamma = w.value("gamma", c.weights.gamma);
      c.weights.delta = w.value("delta", c.weights.delta);
      if (w.contains("external_scores"))
        c.weights.external_scores = w.at("external_scores").get<std::map<std::string, double>>();
    }
    if (j.contains("group_targets"))
      c.group_targets = j.at("group_targets").get<std::map<std::string, double>>();
    if (j.contains("clinical_cutoffs")) {
      const auto& cj = j.at("clinical_cutoffs");
      if (cj.is_array()) {
        for (const auto& b : cj)
          c.cutoffs.push_back({b.at("label").get<std::string>(), bound_from_json(b.at("lo")),
                               bound_from_json(b.at("hi"))});
      } else if (cj.is_object()) {
        for (const auto& [label, range] : cj.items()) {
          if (!range.is_array() || range.size() != 2) throw ConfigError("cutoff '" + label + "' must be [lo, hi]");
          c.cutoffs.push_back({label, bound_from_json(range[0]), bound_from_json(range[1])});
        }
      } else {
        throw ConfigError("clinical_cutoffs must be an array or object");
      }
      std::stable_sort(c.cutoffs.begin(), c.cutoffs.end(),
                       [](const Band& a, const Band& b) { return a.lo < b.lo; });
    }
    if (j.contains("demographics")) {
      for (const auto& f : j.at("demographics")) {
        DemographicField field;
        if (f.is_string()) {
          field.name = f.get<std::string>();
        } else {
          reject_unknown(f, {"name", "type", "required", "min", "max", "choices"}, "demographic field");
          field.name = f.at("name").get<std::string>();
          field.type = field_type_from_string(f.value("type", std::string("text")));
          field.required = f.value("required", true);
          if (f.contains("min")) field.min = f.at("min").get<double>();
          if (f.contains("max")) field.max = f.at("max").get<double>();
          if (f.contains("choices")) field.choices = f.at("choices").get<std::vector<std::string>>();
        }
        c.demographics.push_back(std::move(field));
      }
    }
    c.session_save = j.value("session_save", c.session_save);
    if (j.contains("results_webhook") && !j.at("results_webhook").is_null())
      c.results_webhook = j.at("results_webhook").get<std::string>();
    if (j.contains("seed") && !j.at("seed").is_null()) c.seed = j.at("seed").get<std::uint64_t>();
    c.language = j.value("language", c.language);
    c.session_timeout_minutes = j.value("session_timeout", c.session_timeout_minutes);
    c.expose_theta = j.value("expose_theta", c.expose_theta);
    c.expose_se = j.value("expose_se", c.expose_se);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed study config: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

Json to_json(const SessionState& s) {
  Json j;
  j["schema_version"] = kSnapshotSchemaVersion;
  j["session_id"] = s.id;
  j["phase"] = to_string(s.phase);
  j["seed"] = s.seed;
  j["administered"] = s.administered;
  Json rs = Json::array();
  for (const auto& r : s.responses) rs.push_back(response_to_json(r));
  j["responses"] = rs;
  Json tr = Json::array();
  for (const auto& e : s.trajectory) tr.push_back(to_json(e));
  j["trajectory"] = tr;
  j["sh_rejected"] = s.sh_rejected;
  j["demographics"] = s.demographics;
  j["stop_reason"] = s.stop_reason ? Json(to_string(*s.stop_reason)) : Json(nullptr);
  j["warnings"] = s.warnings;
  j["created_ms"] = s.created_ms;
  j["last_activity_ms"] = s.last_activity_ms;
  j["item_issued_ms"] = s.item_issued_ms;
  return j;
}

SessionState state_from_json(const Json& j) {
  if (j.value("schema_version", 0) != kSnapshotSchemaVersion)
    throw std::invalid_argument("unsupported session snapshot schema version");
  SessionState s;
  s.id = j.at("session_id").get<std::string>();
  s.phase = phase_from_string(j.at("phase").get<std::string>());
  s.seed = j.at("seed").get<std::uint64_t>();
  s.administered = j.at("administered").get<std::vector<std::string>>();
  for (const auto& r : j.at("responses")) s.responses.push_back(response_from_json(r));
  for (const auto& e : j.at("trajectory")) s.trajectory.push_back(estimate_from_json(e));
  s.sh_rejected = j.at("sh_rejected").get<std::set<std::string>>();
  s.demographics = j.at("demographics").get<std::map<std::string, std::string>>();
  if (!j.at("stop_reason").is_null()) s.stop_reason = stop_reason_from_string(j.at("stop_reason").get<std::string>());
  s.warnings = j.at("warnings").get<std::vector<std::string>>();
  s.created_ms = j.at("created_ms").get<std::int64_t>();
  s.last_activity_ms = j.at("last_activity_ms").get<std::int64_t>();
  s.item_issued_ms = j.at("item_issued_ms").get<std::int64_t>();
  if (s.trajectory.size() != s.responses.size() || s.administered.size() < s.responses.size() ||
      s.administered.size() > s.responses.size() + 1)
    throw std::invalid_argument("inconsistent session snapshot");
  return s;
}

Json to_json(const SessionResult& r) {
  Json j;
  j["session_id"] = r.session_id;
  j["disposition"] = to_string(r.disposition);
  j["stop_reason"] = r.stop_reason ? Json(to_string(*r.stop_reason)) : Json(nullptr);
  j["theta_estimate"] = r.final_estimate.theta;
  j["se_estimate"] = r.final_estimate.se;
  j["method"] = to_string(r.final_estimate.method);
  j["converged"] = r.final_estimate.converged;
  j["items_administered"] = r.items_administered;
  j["completion_time"] = r.duration_ms;
  j["classification"] = r.classification ? Json(*r.classification) : Json(nullptr);
  Json recs = Json::array();
  for (const auto& rec : r.records) {
    Json rj{{"item_id", rec.item_id}, {"response", rec.response}, {"theta", rec.theta},
            {"se", rec.se},           {"method", to_string(rec.method)}, {"fallback", rec.fallback}};
    rj["latency_ms"] = rec.latency_ms ? Json(*rec.latency_ms) : Json(nullptr);
    recs.push_back(std::move(rj));
  }
  j["trajectory"] = recs;
  j["warnings"] = r.warnings;
  return j;
}

Json to_json(const BankSpec& s) {
  return Json{{"model", to_string(s.model)}, {"n_items", s.n_items}, {"seed", s.seed},
              {"categories", s.categories}, {"log_a_mean", s.log_a_mean}, {"log_a_sd", s.log_a_sd},
              {"a_min", s.a_min}, {"a_max", s.a_max}, {"b_mean", s.b_mean}, {"b_sd", s.b_sd},
              {"b_min", s.b_min}, {"b_max", s.b_max}, {"c_min", s.c_min}, {"c_max", s.c_max},
              {"groups", s.groups}, {"id_prefix", s.id_prefix}};
}

BankSpec bank_spec_from_json(const Json& j) {
  reject_unknown(j,
                 {"model", "n_items", "seed", "categories", "log_a_mean", "log_a_sd", "a_min", "a_max", "b_mean",
                  "b_sd", "b_min", "b_max", "c_min", "c_max", "groups", "id_prefix"},
                 "bank spec");
  BankSpec s;
  try {
    if (j.contains("model")) s.model = model_from_string(j.at("model").get<std::string>());
    s.n_items = j.value("n_items", s.n_items);
    s.seed = j.value("seed", s.seed);
    s.categories = j.value("categories", s.categories);
    s.log_a_mean = j.value("log_a_mean", s.log_a_mean);
    s.log_a_sd = j.value("log_a_sd", s.log_a_sd);
    s.a_min = j.value("a_min", s.a_min);
    s.a_max = j.value("a_max", s.a_max);
    s.b_mean = j.value("b_mean", s.b_mean);
    s.b_sd = j.value("b_sd", s.b_sd);
    s.b_min = j.value("b_min", s.b_min);
    s.b_max = j.value("b_max", s.b_max);
    s.c_min = j.value("c_min", s.c_min);
    s.c_max = j.value("c_max", s.c_max);
    s.groups = j.value("groups", s.groups);
    s.id_prefix = j.value("id_prefix", s.id_prefix);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed bank spec: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return s;
}

Json to_json(const Violation& v) {
  return Json{{"subject", v.subject}, {"rule", v.rule}, {"message", v.message},
              {"severity", v.warning ? "warning" : "error"}};
}

Json to_json(const std::vector<Violation>& vs) {
  Json arr = Json::array();
  for (const auto& v : vs) arr.push_back(to_json(v));
  return arr;
}

}  // namespace cat
