#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cat/irt.hpp"

namespace cat {

struct ItemBank {
  std::string name;
  Model model = Model::TwoPL;
  std::string version = "1";
  std::vector<ItemParameters> items;

  /// group label -> item ids, in bank order.
  std::map<std::string, std::vector<std::string>> groups() const;
  const ItemParameters* find(const std::string& id) const;
};

struct Violation {
  std::string subject;  // item id, field name or config key; empty for bank-level rules
  std::string rule;
  std::string message;
  bool warning = false;
};

/// Fatal violations only.
bool has_errors(const std::vector<Violation>& violations);

enum class BankFormat { Csv, Json };

class BankParseError : public std::runtime_error {
 public:
  BankParseError(const std::string& msg, int line, int column);
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

class BankValidationError : public std::runtime_error {
 public:
  explicit BankValidationError(std::vector<Violation> violations);
  const std::vector<Violation>& violations() const { return violations_; }

 private:
  std::vector<Violation> violations_;
};

/// Parses and validates. The CSV header is
/// `item_id,model,a,b,c,thresholds,group[,text]` with `;`-separated thresholds.
ItemBank load_bank(std::istream& in, BankFormat format, std::string name = "bank");
ItemBank load_bank_file(const std::string& path);

std::string serialize_bank(const ItemBank& bank, BankFormat format);

std::vector<Violation> validate_bank(const ItemBank& bank);

struct BankSpec {
  Model model = Model::TwoPL;
  int n_items = 100;
  std::uint64_t seed = 1;
  int categories = 5;  // GRM only
  double log_a_mean = 0.0;
  double log_a_sd = 0.25;
  double a_min = 0.5;
  double a_max = 2.5;
  double b_mean = 0.0;
  double b_sd = 1.0;
  double b_min = -3.0;
  double b_max = 3.0;
  double c_min = 0.05;
  double c_max = 0.25;
  std::vector<std::string> groups;  // assigned round-robin when non-empty
  std::string id_prefix = "it";
};

ItemBank generate_bank(const BankSpec& spec);

}  // namespace cat
