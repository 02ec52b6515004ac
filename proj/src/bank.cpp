#include "cat/bank.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cat/numfmt.hpp"

namespace cat {

namespace {

using nlohmann::json;

const std::vector<std::string> kCsvColumns{"item_id", "model", "a", "b", "c", "thresholds", "group"};

struct Cell {
  std::string text;
  int column = 1;
};

// One CSV record; double quotes may wrap a field and "" escapes a quote.
std::vector<Cell> split_csv_line(const std::string& line, int line_no) {
  std::vector<Cell> cells;
  Cell cur;
  bool quoted = false;
  bool field_start = true;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (field_start) {
      cur.column = static_cast<int>(i) + 1;
      field_start = false;
      if (ch == '"') {
        quoted = true;
        continue;
      }
    }
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.text += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.text += ch;
      }
    } else if (ch == ',') {
      cells.push_back(std::move(cur));
      cur = Cell{};
      field_start = true;
    } else if (ch != '\r') {
      cur.text += ch;
    }
  }
  if (quoted) throw BankParseError("unterminated quoted field", line_no, static_cast<int>(line.size()));
  if (field_start) cur.column = static_cast<int>(line.size()) + 1;
  cells.push_back(std::move(cur));
  return cells;
}

std::string quote_csv(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

ItemParameters parse_csv_item(const std::vector<Cell>& cells, const std::vector<int>& col_of,
                              int line_no) {
  auto cell = [&](int logical) -> const Cell* {
    const int idx = col_of[static_cast<std::size_t>(logical)];
    if (idx < 0 || idx >= static_cast<int>(cells.size())) return nullptr;
    return &cells[static_cast<std::size_t>(idx)];
  };
  auto text = [&](int logical) {
    const Cell* c = cell(logical);
    return c ? trim(c->text) : std::string{};
  };
  auto number = [&](int logical, double fallback) {
    const Cell* c = cell(logical);
    const std::string t = c ? trim(c->text) : std::string{};
    if (t.empty()) return fallback;
    auto v = parse_double(t);
    if (!v) throw BankParseError("expected a number, found '" + t + "'", line_no, c->column);
    return *v;
  };

  ItemParameters item;
  item.id = text(0);
  if (item.id.empty()) throw BankParseError("missing item_id", line_no, 1);
  try {
    item.model = model_from_string(text(1));
  } catch (const std::invalid_argument& e) {
    throw BankParseError(e.what(), line_no, cell(1) ? cell(1)->column : 1);
  }
  item.a = number(2, 1.0);
  item.b = number(3, 0.0);
  item.c = number(4, 0.0);
  const std::string th = text(5);
  if (!th.empty()) {
    std::stringstream ss(th);
    std::string part;
    while (std::getline(ss, part, ';')) {
      auto v = parse_double(part);
      if (!v) throw BankParseError("bad threshold '" + part + "'", line_no, cell(5)->column);
      item.thresholds.push_back(*v);
    }
  }
  if (std::string g = text(6); !g.empty()) item.group = g;
  if (std::string t = text(7); !t.empty()) item.text = t;
  return item;
}

ItemBank parse_csv(std::istream& in, std::string name) {
  std::string line;
  int line_no = 0;
  ItemBank bank;
  bank.name = std::move(name);
  std::vector<int> col_of(8, -1);
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line, line_no);
    if (!have_header) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        const std::string h = trim(cells[i].text);
        auto it = std::find(kCsvColumns.begin(), kCsvColumns.end(), h);
        if (it != kCsvColumns.end()) col_of[static_cast<std::size_t>(it - kCsvColumns.begin())] = static_cast<int>(i);
        else if (h == "text") col_of[7] = static_cast<int>(i);
        else throw BankParseError("unknown column '" + h + "'", line_no, cells[i].column);
      }
      for (std::size_t k = 0; k < kCsvColumns.size(); ++k)
        if (col_of[k] < 0) throw BankParseError("header is missing column '" + kCsvColumns[k] + "'", line_no, 1);
      have_header = true;
      continue;
    }
    bank.items.push_back(parse_csv_item(cells, col_of, line_no));
  }
  if (!have_header) throw BankParseError("missing header row", std::max(1, line_no), 1);
  if (!bank.items.empty()) bank.model = bank.items.front().model;
  return bank;
}

ItemBank parse_json(std::istream& in, std::string name) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    // nlohmann reports a byte offset; map it onto line 1 column offset.
    throw BankParseError(e.what(), 1, static_cast<int>(e.byte));
  }
  ItemBank bank;
  try {
    bank.name = doc.value("name", name);
    bank.version = doc.value("version", std::string("1"));
    const bool has_model = doc.contains("model");
    if (has_model) bank.model = model_from_string(doc.at("model").get<std::string>());
    int index = 0;
    for (const auto& j : doc.at("items")) {
      ++index;
      ItemParameters item;
      item.id = j.at("item_id").get<std::string>();
      item.model = j.contains("model") ? model_from_string(j.at("model").get<std::string>()) : bank.model;
      item.a = j.value("a", 1.0);
      item.b = j.value("b", 0.0);
      item.c = j.value("c", 0.0);
      if (j.contains("thresholds")) item.thresholds = j.at("thresholds").get<std::vector<double>>();
      if (j.contains("group") && !j.at("group").is_null()) item.group = j.at("group").get<std::string>();
      if (j.contains("text") && !j.at("text").is_null()) item.text = j.at("text").get<std::string>();
      bank.items.push_back(std::move(item));
    }
    if (!has_model && !bank.items.empty()) bank.model = bank.items.front().model;
  } catch (const json::exception& e) {
    throw BankParseError(e.what(), 1, 1);
  } catch (const std::invalid_argument& e) {
    throw BankParseError(e.what(), 1, 1);
  }
  return bank;
}

double truncated_draw(std::mt19937_64& rng, std::normal_distribution<double>& dist, double lo,
                      double hi) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const double v = dist(rng);
    if (v >= lo && v <= hi) return v;
  }
  throw std::invalid_argument("truncation interval has negligible mass");
}

}  // namespace

std::map<std::string, std::vector<std::string>> ItemBank::groups() const {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& it : items)
    if (it.group) out[*it.group].push_back(it.id);
  return out;
}

const ItemParameters* ItemBank::find(const std::string& id) const {
  for (const auto& it : items)
    if (it.id == id) return &it;
  return nullptr;
}

bool has_errors(const std::vector<Violation>& violations) {
  return std::any_of(violations.begin(), violations.end(),
                     [](const Violation& v) { return !v.warning; });
}

BankParseError::BankParseError(const std::string& msg, int line, int column)
    : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) +
                         ": " + msg),
      line_(line),
      column_(column) {}

BankValidationError::BankValidationError(std::vector<Violation> violations)
    : std::runtime_error([&] {
        std::string msg = "item bank failed validation";
        for (const auto& v : violations)
          if (!v.warning) msg += "; " + (v.subject.empty() ? v.rule : v.subject + ": " + v.message);
        return msg;
      }()),
      violations_(std::move(violations)) {}

ItemBank load_bank(std::istream& in, BankFormat format, std::string name) {
  ItemBank bank = format == BankFormat::Csv ? parse_csv(in, std::move(name))
                                            : parse_json(in, std::move(name));
  auto violations = validate_bank(bank);
  if (has_errors(violations)) throw BankValidationError(std::move(violations));
  return bank;
}

ItemBank load_bank_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open bank file '" + path + "'");
  const bool is_json = path.size() >= 5 && path.substr(path.size() - 5) == ".json";
  std::string stem = path.substr(path.find_last_of('/') + 1);
  stem = stem.substr(0, stem.find_last_of('.'));
  return load_bank(in, is_json ? BankFormat::Json : BankFormat::Csv, stem);
}

std::string serialize_bank(const ItemBank& bank, BankFormat format) {
  if (format == BankFormat::Json) {
    json doc;
    doc["name"] = bank.name;
    doc["model"] = std::string(to_string(bank.model));
    doc["version"] = bank.version;
    doc["items"] = json::array();
    for (const auto& it : bank.items) {
      json j;
      j["item_id"] = it.id;
      j["model"] = std::string(to_string(it.model));
      j["a"] = it.a;
      if (it.model != Model::GRM) j["b"] = it.b;
      if (it.model == Model::ThreePL) j["c"] = it.c;
      if (it.model == Model::GRM) j["thresholds"] = it.thresholds;
      if (it.group) j["group"] = *it.group;
      if (it.text) j["text"] = *it.text;
      doc["items"].push_back(std::move(j));
    }
    return doc.dump(2) + "\n";
  }
  const bool with_text =
      std::any_of(bank.items.begin(), bank.items.end(), [](const auto& it) { return it.text.has_value(); });
  std::string out = "item_id,model,a,b,c,thresholds,group";
  out += with_text ? ",text\n" : "\n";
  for (const auto& it : bank.items) {
    out += quote_csv(it.id) + "," + std::string(to_string(it.model)) + ",";
    out += (it.model == Model::OnePL ? "" : format_double(it.a)) + ",";
    out += (it.model == Model::GRM ? "" : format_double(it.b)) + ",";
    out += (it.model == Model::ThreePL ? format_double(it.c) : "") + ",";
    for (std::size_t k = 0; k < it.thresholds.size(); ++k) {
      if (k) out += ";";
      out += format_double(it.thresholds[k]);
    }
    out += "," + quote_csv(it.group.value_or(""));
    if (with_text) out += "," + quote_csv(it.text.value_or(""));
    out += "\n";
  }
  return out;
}

std::vector<Violation> validate_bank(const ItemBank& bank) {
  std::vector<Violation> out;
  if (bank.items.empty()) out.push_back({"", "nonempty", "item bank has no items"});
  std::set<std::string> seen;
  for (const auto& it : bank.items) {
    if (!seen.insert(it.id).second)
      out.push_back({it.id, "unique_id", "duplicate item_id '" + it.id + "'"});
    for (auto& msg : item_violations(it)) {
      std::string rule = "item";
      if (msg.find("guessing") != std::string::npos) rule = "guessing_range";
      else if (msg.find("increasing") != std::string::npos) rule = "threshold_order";
      else if (msg.find("discrimination") != std::string::npos) rule = "discrimination";
      out.push_back({it.id, rule, std::move(msg)});
    }
    if (it.model != bank.model)
      out.push_back({it.id, "single_model",
                     "item model " + std::string(to_string(it.model)) + " differs from bank model " +
                         std::string(to_string(bank.model))});
    if (it.group && it.group->empty()) out.push_back({it.id, "group", "empty group label"});
  }
  if (!has_errors(out) && !bank.items.empty()) {
    for (int g = -6; g <= 6; ++g) {
      const double theta = 0.5 * g;
      double info = 0.0;
      for (const auto& it : bank.items) info += item_information(it, theta);
      if (info < 5.0) {
        out.push_back({"", "coverage",
                       "bank information " + format_double(info) + " below 5 at theta " +
                           format_double(theta),
                       true});
      }
    }
  }
  return out;
}

ItemBank generate_bank(const BankSpec& spec) {
  if (spec.n_items < 1) throw std::invalid_argument("n_items must be at least 1");
  if (spec.model == Model::GRM && spec.categories < 2)
    throw std::invalid_argument("GRM items need at least 2 categories");
  if (!(spec.a_min > 0.0) || spec.a_max < spec.a_min || spec.b_max < spec.b_min ||
      spec.c_min < 0.0 || spec.c_max > kMaxGuessing || spec.c_max < spec.c_min || !(spec.log_a_sd >= 0.0) ||
      !(spec.b_sd >= 0.0))
    throw std::invalid_argument("invalid parameter distribution bounds");

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> log_a(spec.log_a_mean, spec.log_a_sd);
  std::normal_distribution<double> loc(spec.b_mean, spec.b_sd);
  std::uniform_real_distribution<double> guess(spec.c_min, spec.c_max);

  ItemBank bank;
  bank.name = std::string(to_string(spec.model)) + "-" + std::to_string(spec.n_items) + "-seed" +
              std::to_string(spec.seed);
  bank.model = spec.model;
  const int width = std::max(3, static_cast<int>(std::to_string(spec.n_items).size()));
  for (int i = 0; i < spec.n_items; ++i) {
    ItemParameters it;
    std::string num = std::to_string(i + 1);
    it.id = spec.id_prefix + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num;
    it.model = spec.model;
    if (spec.model != Model::OnePL) {
      it.a = spec.log_a_sd == 0.0
                 ? std::clamp(std::exp(spec.log_a_mean), spec.a_min, spec.a_max)
                 : std::exp(truncated_draw(rng, log_a, std::log(spec.a_min), std::log(spec.a_max)));
    }
    const double location = spec.b_sd == 0.0 ? spec.b_mean : truncated_draw(rng, loc, spec.b_min, spec.b_max);
    if (spec.model == Model::GRM) {
      const int m = spec.categories;
      if (m == 2) {
        it.thresholds = {location};
      } else {
        for (int k = 0; k < m - 1; ++k)
          it.thresholds.push_back(location - 1.0 + 2.0 * k / static_cast<double>(m - 2));
      }
    } else {
      it.b = location;
    }
    if (spec.model == Model::ThreePL) it.c = guess(rng);
    if (!spec.groups.empty()) it.group = spec.groups[static_cast<std::size_t>(i) % spec.groups.size()];
    bank.items.push_back(std::move(it));
  }
  return bank;
}

}  // namespace cat
