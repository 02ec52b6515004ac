#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "cat/bank.hpp"

using namespace cat;

namespace {

ItemBank parse_csv(const std::string& body) {
  std::istringstream in("item_id,model,a,b,c,thresholds,group\n" + body);
  return load_bank(in, BankFormat::Csv);
}

bool has_rule(const std::vector<Violation>& vs, const std::string& rule) {
  return std::any_of(vs.begin(), vs.end(), [&](const Violation& v) { return v.rule == rule; });
}

}  // namespace

TEST(LoadBank, TwoPLRow) {
  const auto bank = parse_csv("it01,2PL,1.2,0.5,,\n");
  ASSERT_EQ(bank.items.size(), 1u);
  EXPECT_EQ(bank.items[0].id, "it01");
  EXPECT_EQ(bank.items[0].model, Model::TwoPL);
  EXPECT_EQ(bank.items[0].a, 1.2);
  EXPECT_EQ(bank.items[0].b, 0.5);
  EXPECT_FALSE(bank.items[0].group.has_value());
}

TEST(LoadBank, GrmRow) {
  const auto bank = parse_csv("g1,GRM,1.4,,,-1.0;0.0;1.0,mood\n");
  ASSERT_EQ(bank.items.size(), 1u);
  EXPECT_EQ(bank.items[0].categories(), 4);
  EXPECT_EQ(bank.items[0].thresholds, (std::vector<double>{-1.0, 0.0, 1.0}));
  EXPECT_EQ(bank.items[0].group, "mood");
  EXPECT_EQ(bank.model, Model::GRM);
}

TEST(LoadBank, GuessingAboveBoundIsValidationError) {
  try {
    parse_csv("it01,3PL,1.0,0.0,0.5,\n");
    FAIL() << "expected a validation error";
  } catch (const BankValidationError& e) {
    ASSERT_FALSE(e.violations().empty());
    EXPECT_EQ(e.violations()[0].subject, "it01");
    EXPECT_NE(e.violations()[0].message.find("0.35"), std::string::npos);
  }
}

TEST(LoadBank, ParseErrorsCarryPosition) {
  try {
    parse_csv("it01,2PL,1.0,0.0,,\nit02,2PL,abc,0.0,,\n");
    FAIL() << "expected a parse error";
  } catch (const BankParseError& e) {
    EXPECT_EQ(e.line(), 3);
    EXPECT_GT(e.column(), 0);
  }
  std::istringstream bad_header("id,model\n");
  EXPECT_THROW(load_bank(bad_header, BankFormat::Csv), BankParseError);
  std::istringstream bad_json("{\"items\": [");
  EXPECT_THROW(load_bank(bad_json, BankFormat::Json), BankParseError);
}

TEST(LoadBank, QuotedTextField) {
  std::istringstream in("item_id,model,a,b,c,thresholds,group,text\nq1,2PL,1,0,,,,\"Hello, \"\"world\"\"\"\n");
  const auto bank = load_bank(in, BankFormat::Csv);
  EXPECT_EQ(bank.items[0].text, "Hello, \"world\"");
}

TEST(ValidateBank, ValidBankHasNoErrors) {
  BankSpec spec;
  spec.n_items = 10;
  EXPECT_FALSE(has_errors(validate_bank(generate_bank(spec))));
}

TEST(ValidateBank, Rules) {
  ItemBank bank;
  EXPECT_TRUE(has_rule(validate_bank(bank), "nonempty"));
  bank.model = Model::GRM;
  bank.items = {ItemParameters::grm("g", 1.0, {1.0, -1.0})};
  EXPECT_TRUE(has_rule(validate_bank(bank), "threshold_order"));
  bank.model = Model::TwoPL;
  bank.items = {ItemParameters::two_pl("x", 1, 0), ItemParameters::two_pl("x", 1, 1)};
  EXPECT_TRUE(has_rule(validate_bank(bank), "unique_id"));
  bank.items = {ItemParameters::two_pl("x", -1, 0)};
  EXPECT_TRUE(has_rule(validate_bank(bank), "discrimination"));
  bank.items = {ItemParameters::two_pl("x", 1, 0), ItemParameters::grm("g", 1, {0.0})};
  EXPECT_TRUE(has_rule(validate_bank(bank), "single_model"));
}

TEST(ValidateBank, ThinCoverageIsWarningOnly) {
  ItemBank bank;
  bank.items = {ItemParameters::two_pl("x", 1, 0)};
  const auto vs = validate_bank(bank);
  ASSERT_FALSE(vs.empty());
  EXPECT_FALSE(has_errors(vs));
  EXPECT_TRUE(vs[0].warning);
}

TEST(GenerateBank, Deterministic) {
  BankSpec spec;
  spec.model = Model::ThreePL;
  spec.seed = 77;
  EXPECT_EQ(serialize_bank(generate_bank(spec), BankFormat::Json),
            serialize_bank(generate_bank(spec), BankFormat::Json));
  auto other = spec;
  other.seed = 78;
  EXPECT_NE(serialize_bank(generate_bank(spec), BankFormat::Json),
            serialize_bank(generate_bank(other), BankFormat::Json));
}

TEST(GenerateBank, TruncationBounds) {
  BankSpec spec;
  spec.n_items = 200;
  const auto bank = generate_bank(spec);
  ASSERT_EQ(bank.items.size(), 200u);
  for (const auto& it : bank.items) {
    EXPECT_GE(it.a, 0.5);
    EXPECT_LE(it.a, 2.5);
    EXPECT_GE(it.b, -3.0);
    EXPECT_LE(it.b, 3.0);
  }
}

TEST(GenerateBank, ValidationCleanForRandomSpecs) {
  std::mt19937_64 rng(5150);
  const Model models[] = {Model::OnePL, Model::TwoPL, Model::ThreePL, Model::GRM};
  for (int i = 0; i < 1000; ++i) {
    BankSpec spec;
    spec.model = models[rng() % 4];
    spec.n_items = 1 + static_cast<int>(rng() % 60);
    spec.seed = rng();
    spec.categories = 2 + static_cast<int>(rng() % 5);
    if (rng() % 2) spec.groups = {"A", "B", "C"};
    const auto bank = generate_bank(spec);
    EXPECT_EQ(static_cast<int>(bank.items.size()), spec.n_items);
    EXPECT_FALSE(has_errors(validate_bank(bank))) << "spec " << i;
  }
}

TEST(GenerateBank, InvalidSpecThrows) {
  BankSpec spec;
  spec.n_items = 0;
  EXPECT_THROW(generate_bank(spec), std::invalid_argument);
}

TEST(RoundTrip, SerializeThenLoadIsIdentity) {
  for (Model m : {Model::OnePL, Model::TwoPL, Model::ThreePL, Model::GRM}) {
    for (BankFormat f : {BankFormat::Csv, BankFormat::Json}) {
      BankSpec spec;
      spec.model = m;
      spec.n_items = 40;
      spec.seed = 9;
      spec.groups = {"alpha", "beta"};
      const auto bank = generate_bank(spec);
      std::istringstream in(serialize_bank(bank, f));
      const auto back = load_bank(in, f, bank.name);
      ASSERT_EQ(back.items.size(), bank.items.size());
      for (std::size_t i = 0; i < bank.items.size(); ++i) {
        const auto& x = bank.items[i];
        const auto& y = back.items[i];
        EXPECT_EQ(x.id, y.id);
        EXPECT_EQ(x.model, y.model);
        EXPECT_EQ(x.a, y.a);
        EXPECT_EQ(x.b, y.b);
        EXPECT_EQ(x.c, y.c);
        EXPECT_EQ(x.thresholds, y.thresholds);
        EXPECT_EQ(x.group, y.group);
      }
      EXPECT_EQ(serialize_bank(back, f), serialize_bank(bank, f));
    }
  }
}

TEST(Groups, InBankOrder) {
  BankSpec spec;
  spec.n_items = 6;
  spec.groups = {"A", "B", "C"};
  const auto groups = generate_bank(spec).groups();
  ASSERT_EQ(groups.size(), 3u);
  EXPECT_EQ(groups.at("A").size(), 2u);
}
