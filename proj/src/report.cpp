#include "cat/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "cat/numfmt.hpp"

namespace cat {

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string distribution_note(const std::string& d) {
  if (d == "positive_skew") return "(chi2_3 - 3)/sqrt(6)";
  if (d == "negative_skew") return "-(chi2_3 - 3)/sqrt(6)";
  if (d == "bimodal") return "0.5 N(-1, 0.5^2) + 0.5 N(1, 0.5^2)";
  return "N(0, 1)";
}

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

ReportFormat report_format_from_string(std::string_view s) {
  if (s == "table") return ReportFormat::Table;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "json") return ReportFormat::Json;
  throw std::invalid_argument("unknown report format '" + std::string(s) + "'");
}

ReportRow report_row(const ConditionReport& r) {
  return ReportRow{std::string(to_string(r.model)), r.n_items, r.metrics.mean_length, r.metrics.rmse,
                   r.metrics.bias, r.metrics.r, r.efficiency};
}

Json to_json(const ConditionReport& r) {
  Json j;
  j["name"] = r.name;
  j["model"] = to_string(r.model);
  j["n_items"] = r.n_items;
  j["distribution"] = r.distribution;
  j["distribution_definition"] = distribution_note(r.distribution);
  j["seed"] = r.seed;
  j["n_examinees"] = r.n_examinees;
  j["replications"] = r.replications;
  j["rmse"] = r.metrics.rmse;
  j["bias"] = r.metrics.bias;
  j["mae"] = r.metrics.mae;
  j["r"] = r.metrics.r;
  j["error_variance"] = r.metrics.error_variance;
  j["mean_length"] = r.metrics.mean_length;
  j["mean_se"] = r.metrics.mean_se;
  j["rmse_ci"] = {r.rmse_ci.lo, r.rmse_ci.hi};
  j["bias_ci"] = {r.bias_ci.lo, r.bias_ci.hi};
  j["r_ci"] = {r.r_ci.lo, r.r_ci.hi};
  j["linear_mean_length"] = optional_json(r.linear_mean_length);
  j["linear_target_sem"] = optional_json(r.linear_target_sem);
  j["efficiency"] = optional_json(r.efficiency);
  j["primary_convergence"] = r.primary_convergence;
  j["max_exposure"] = r.max_exposure;
  j["exposure_histogram"] = r.exposure_histogram;
  j["group_shares"] = r.group_shares;
  if (r.classification) {
    j["classification"] = {{"accuracy", r.classification->accuracy},
                           {"sensitivity", optional_json(r.classification->sensitivity)},
                           {"specificity", optional_json(r.classification->specificity)}};
  } else {
    j["classification"] = nullptr;
  }
  j["test_retest_r"] = optional_json(r.test_retest_r);
  return j;
}

std::string emit_report(std::span<const ConditionReport> reports, ReportFormat format) {
  std::ostringstream out;
  switch (format) {
    case ReportFormat::Csv:
      out << kReportCsvHeader << "\n";
      for (const auto& rep : reports) {
        const auto row = report_row(rep);
        out << row.model << ',' << row.n_items << ',' << format_double(row.length) << ','
            << format_double(row.rmse) << ',' << format_double(row.bias) << ',' << format_double(row.r) << ','
            << (row.efficiency ? format_double(*row.efficiency) : "") << "\n";
      }
      break;
    case ReportFormat::Json: {
      Json arr = Json::array();
      for (const auto& rep : reports) arr.push_back(to_json(rep));
      out << Json{{"conditions", arr}}.dump(2) << "\n";
      break;
    }
    case ReportFormat::Table: {
      for (const auto& rep : reports)
        out << "# " << rep.name << ": " << rep.n_examinees << " examinees x " << rep.replications
            << " replications, seed " << rep.seed << ", ability " << distribution_note(rep.distribution) << "\n";
      const std::vector<std::size_t> w{7, 9, 8, 8, 8, 7, 11};
      const std::vector<std::string> head{"Model", "N Items", "Length", "RMSE", "Bias", "r", "Efficiency"};
      for (std::size_t i = 0; i < head.size(); ++i) out << (i + 1 < head.size() ? pad(head[i], w[i]) : head[i]);
      out << "\n";
      for (const auto& rep : reports) {
        const auto row = report_row(rep);
        const std::vector<std::string> cells{row.model,         std::to_string(row.n_items), fixed(row.length, 1),
                                             fixed(row.rmse, 3), fixed(row.bias, 3),         fixed(row.r, 3),
                                             row.efficiency ? fixed(100.0 * *row.efficiency, 1) + "%" : "-"};
        for (std::size_t i = 0; i < cells.size(); ++i) out << (i + 1 < cells.size() ? pad(cells[i], w[i]) : cells[i]);
        out << "\n";
      }
      break;
    }
  }
  return out.str();
}

std::vector<ReportRow> parse_report_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kReportCsvHeader) throw std::invalid_argument("bad report csv header");
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 7) throw std::invalid_argument("report csv row needs 7 fields: " + line);
    auto num = [&](const std::string& s) {
      const auto v = parse_double(s);
      if (!v) throw std::invalid_argument("bad number '" + s + "' in report csv");
      return *v;
    };
    ReportRow row;
    row.model = f[0];
    row.n_items = static_cast<int>(num(f[1]));
    row.length = num(f[2]);
    row.rmse = num(f[3]);
    row.bias = num(f[4]);
    row.r = num(f[5]);
    if (!f[6].empty()) row.efficiency = num(f[6]);
    rows.push_back(row);
  }
  return rows;
}

std::string records_csv(const ConditionReport& report) {
  std::ostringstream out;
  out << "replication,theta_true,theta_hat,se,length\n";
  for (const auto& r : report.records)
    out << r.replication << ',' << format_double(r.theta_true) << ',' << format_double(r.theta_hat) << ','
        << format_double(r.se) << ',' << r.length << "\n";
  return out.str();
}

}  // namespace cat
