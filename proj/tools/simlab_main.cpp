// simlab: Monte Carlo runs of the adaptive engine.
//
//   simlab run --spec conditions.json [--seed N] [--out DIR] [--format table|csv|json]
//   simlab compare --adaptive spec.json --linear [--target-sem 0.3]
//
// Exit codes: 0 success, 1 runtime failure, 2 invalid spec.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cat/numfmt.hpp"
#include "cat/report.hpp"
#include "cat/simlab.hpp"

namespace {

using namespace cat;

constexpr int kInvalidSpec = 2;

struct SpecError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A spec file holds one condition or {"conditions": [...]}.
std::vector<SimulationSpec> load_specs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot open spec file '" + path + "'");
  const auto j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw SpecError("spec file '" + path + "' is not valid JSON");
  std::vector<SimulationSpec> specs;
  try {
    if (j.is_object() && j.contains("conditions")) {
      for (const auto& c : j.at("conditions")) specs.push_back(spec_from_json(c));
    } else {
      specs.push_back(spec_from_json(j));
    }
  } catch (const std::exception& e) {
    throw SpecError(e.what());
  }
  // Relative bank files resolve against the spec file's directory.
  const auto base = std::filesystem::path(path).parent_path();
  for (auto& s : specs) {
    if (s.bank_file && std::filesystem::path(*s.bank_file).is_relative())
      s.bank_file = (base / *s.bank_file).string();
    const auto violations = validate_spec(s);
    for (const auto& v : violations)
      if (v.warning) std::cerr << "warning: " << s.name << ": " << v.subject << ": " << v.message << "\n";
    if (has_errors(violations)) {
      std::ostringstream msg;
      msg << "condition '" << s.name << "' is invalid:";
      for (const auto& v : violations)
        if (!v.warning) msg << "\n  " << v.subject << ": " << v.message;
      throw SpecError(msg.str());
    }
  }
  return specs;
}

ItemBank bank_for(const SimulationSpec& spec) {
  try {
    auto bank = load_spec_bank(spec);
    const auto errors = validate_config(spec.config, &bank);
    if (has_errors(errors)) {
      std::ostringstream msg;
      msg << "condition '" << spec.name << "' does not fit its bank:";
      for (const auto& v : errors)
        if (!v.warning) msg << "\n  " << v.subject << ": " << v.message;
      throw SpecError(msg.str());
    }
    return bank;
  } catch (const SpecError&) {
    throw;
  } catch (const std::exception& e) {
    throw SpecError("condition '" + spec.name + "': " + e.what());
  }
}

void write_file(const std::filesystem::path& p, const std::string& data) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << data;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo simulation of adaptive test sessions"};
  app.require_subcommand(1);

  std::string spec_path, out_dir, format = "table";
  std::optional<std::uint64_t> seed;
  auto* run = app.add_subcommand("run", "Run every condition in a spec file and print a report");
  run->add_option("--spec", spec_path, "Spec file (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Master seed; overrides the spec");
  run->add_option("--out", out_dir, "Directory for report, spec echo and per-examinee records");
  run->add_option("--format", format, "Report format")->check(CLI::IsMember({"table", "csv", "json"}));

  std::string adaptive_path;
  bool linear = false;
  std::optional<double> target_sem;
  auto* compare = app.add_subcommand("compare", "Adaptive vs fixed-order linear test length");
  compare->add_option("--adaptive", adaptive_path, "Spec file (JSON)")->required()->check(CLI::ExistingFile);
  compare->add_flag("--linear", linear, "Run the linear comparator")->required();
  compare->add_option("--target-sem", target_sem, "Linear stopping se; defaults to the adaptive mean se");
  compare->add_option("--seed", seed, "Master seed; overrides the spec");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto specs = load_specs(spec_path);
      std::vector<ConditionReport> reports;
      for (auto& s : specs) {
        if (seed) s.seed = *seed;
        const auto bank = bank_for(s);
        std::cerr << "running " << s.name << " (" << s.n_examinees << " x " << s.replications << ")\n";
        reports.push_back(run_condition(s, bank));
      }
      const auto fmt = report_format_from_string(format);
      const auto text = emit_report(reports, fmt);
      std::cout << text;
      if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        const std::string ext = format == "table" ? "txt" : format;
        write_file(std::filesystem::path(out_dir) / ("report." + ext), text);
        Json echo = Json::array();
        for (const auto& s : specs) echo.push_back(to_json(s));
        write_file(std::filesystem::path(out_dir) / "spec.json", echo.dump(2) + "\n");
        for (const auto& r : reports)
          write_file(std::filesystem::path(out_dir) / (r.name + ".records.csv"), records_csv(r));
      }
      return 0;
    }
    if (*compare) {
      auto specs = load_specs(adaptive_path);
      std::cout << "condition,adaptive_mean_length,linear_mean_length,target_sem,efficiency\n";
      for (auto& s : specs) {
        if (seed) s.seed = *seed;
        s.linear_comparator = linear;
        if (target_sem) s.linear_target_sem = *target_sem;
        const auto r = run_condition(s, bank_for(s));
        std::cout << s.name << ',' << format_double(r.metrics.mean_length) << ',' << format_double(*r.linear_mean_length)
                  << ',' << format_double(*r.linear_target_sem) << ',' << format_double(*r.efficiency) << "\n";
      }
      return 0;
    }
  } catch (const SpecError& e) {
    std::cerr << "invalid spec: " << e.what() << "\n";
    return kInvalidSpec;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
