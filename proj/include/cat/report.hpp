#pragma once

// Report rendering for simulation conditions. Column order follows the
// detailed-results table: Model, N Items, Length, RMSE, Bias, r, Efficiency.

#include <istream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cat/json_io.hpp"
#include "cat/simlab.hpp"

namespace cat {

enum class ReportFormat { Table, Csv, Json };

ReportFormat report_format_from_string(std::string_view s);

struct ReportRow {
  std::string model;
  int n_items = 0;
  double length = 0.0;  // mean administered length
  double rmse = 0.0;
  double bias = 0.0;
  double r = 0.0;
  std::optional<double> efficiency;  // fraction; empty without a linear comparator
};

inline constexpr const char* kReportCsvHeader = "model,n_items,length,rmse,bias,r,efficiency";

ReportRow report_row(const ConditionReport& report);

/// Full condition summary without per-examinee records.
Json to_json(const ConditionReport& report);

std::string emit_report(std::span<const ConditionReport> reports, ReportFormat format);

/// Parses the csv rendering back into rows. Throws std::invalid_argument.
std::vector<ReportRow> parse_report_csv(std::istream& in);

/// Per-examinee records: replication,theta_true,theta_hat,se,length.
std::string records_csv(const ConditionReport& report);

}  // namespace cat
