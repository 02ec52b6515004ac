#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "cat/json_io.hpp"
#include "cat/persist.hpp"
#include "oracles.hpp"

using namespace cat;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("cat_persist_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ItemBank demo_bank(Model m = Model::TwoPL, int n = 80) {
  BankSpec spec;
  spec.model = m;
  spec.n_items = n;
  spec.seed = 31;
  spec.groups = {"A", "B"};
  return generate_bank(spec);
}

int draw(const ItemParameters& item, double theta, std::mt19937_64& rng) {
  const auto p = oracle::probs(item, theta);
  double u = std::uniform_real_distribution<double>(0, 1)(rng), acc = 0;
  for (std::size_t k = 0; k + 1 < p.size(); ++k) {
    acc += p[k];
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(p.size()) - 1;
}

// Drives a logged session; stops early after `stop_after` responses when >= 0.
SessionState drive(SessionStore* store, const StudyConfig& cfg, const ItemBank& bank, const std::string& id,
                   std::uint64_t seed, double theta, int stop_after = -1, ExposureLedger* ledger = nullptr) {
  auto s = logged_start(store, cfg, bank, id, seed, 1000, ledger);
  std::int64_t t = 1000;
  if (s.phase == Phase::Demographics)
    logged_demographics(store, s, cfg, {{"age", "40"}}, t += 5);
  else
    logged_begin(store, s, t += 5);
  std::mt19937_64 rng(seed * 7 + 1);
  for (int n = 0;; ++n) {
    if (stop_after >= 0 && n == stop_after) return s;
    const auto step = logged_next(store, s, cfg, bank, ledger, t += 10);
    if (std::holds_alternative<StopDecision>(step)) return s;
    const auto& id_ = std::get<ItemDecision>(step).item_id;
    logged_submit(store, s, cfg, bank, ledger, {id_, draw(*bank.find(id_), theta, rng), 1234 + n}, t += 3000);
  }
}

// Continues an in-flight session to completion with the same response stream.
void finish(SessionStore* store, SessionState& s, const StudyConfig& cfg, const ItemBank& bank, std::uint64_t seed,
            double theta, int already, ExposureLedger* ledger = nullptr) {
  std::mt19937_64 rng(seed * 7 + 1);
  std::int64_t t = s.last_activity_ms;
  // Burn the draws the first leg consumed.
  for (int n = 0; n < already; ++n) std::uniform_real_distribution<double>(0, 1)(rng);
  for (int n = already;; ++n) {
    if (!s.item_outstanding()) {
      const auto step = logged_next(store, s, cfg, bank, ledger, t += 10);
      if (std::holds_alternative<StopDecision>(step)) return;
    }
    const auto id = *s.outstanding_item();
    logged_submit(store, s, cfg, bank, ledger, {id, draw(*bank.find(id), theta, rng), 1234 + n}, t += 3000);
  }
}

}  // namespace

TEST(Digest, Sha256KnownAnswer) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Tokens, RoundTripAndTamper) {
  const auto token = make_resume_token("sess-1", "k3y");
  EXPECT_EQ(verify_resume_token(token, "k3y"), "sess-1");
  EXPECT_THROW(verify_resume_token(token, "other"), TokenError);
  auto tampered = token;
  tampered.back() = tampered.back() == '0' ? '1' : '0';
  EXPECT_THROW(verify_resume_token(tampered, "k3y"), TokenError);
  EXPECT_THROW(verify_resume_token("sess-2" + token.substr(token.find('.')), "k3y"), TokenError);
  EXPECT_THROW(verify_resume_token("garbage", "k3y"), TokenError);
}

TEST(ConfigJson, RoundTrip) {
  StudyConfig c;
  c.name = "phq";
  c.estimation.primary = Method::WLE;
  c.estimation.alternate = Method::MAP;
  c.criterion = Criterion::Constrained;
  c.max_items = 12;
  c.min_items = 4;
  c.exposure.enabled = true;
  c.group_targets = {{"A", 0.5}};
  c.cutoffs = {{"low", -INFINITY, 0.0}, {"high", 0.0, INFINITY}};
  c.demographics = {{"age", FieldType::Integer, true, 18, 99, {}}};
  c.results_webhook = "http://localhost:9/hook";
  c.seed = 77;
  const auto j = to_json(c);
  const auto back = config_from_json(Json::parse(j.dump()));
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(config_digest(back), config_digest(c));
}

TEST(ConfigJson, PaperStyleCutoffsAndStrictness) {
  const auto c = config_from_json(Json::parse(R"({
    "max_items": 12, "min_items": 4, "min_SEM": 0.3, "criteria": "MFI",
    "clinical_cutoffs": {"None": ["-Inf", -1], "Mild": [-1, -0.5], "Moderate": [-0.5, 0.5], "Severe": [0.5, "Inf"]}
  })"));
  ASSERT_EQ(c.cutoffs.size(), 4u);
  EXPECT_EQ(c.cutoffs.front().label, "None");
  EXPECT_EQ(classify(c.cutoffs, 0.7), "Severe");
  EXPECT_THROW(config_from_json(Json::parse(R"({"max_itemz": 3})")), ConfigError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"max_items": "three"})")), ConfigError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"criteria": "KL"})")), ConfigError);
}

TEST(SnapshotJson, RoundTrip) {
  StudyConfig cfg;
  const auto bank = demo_bank();
  auto s = drive(nullptr, cfg, bank, "snap", 5, 0.2, 6);
  logged_next(nullptr, s, cfg, bank, nullptr, 99999);
  const auto j = to_json(s);
  const auto back = state_from_json(Json::parse(j.dump()));
  EXPECT_EQ(to_json(back), j);
  auto bad = j;
  bad["schema_version"] = 99;
  EXPECT_THROW(state_from_json(bad), std::invalid_argument);
}

TEST(Store, AppendReadAndTornTail) {
  TempDir dir;
  SessionStore store(dir.path);
  store.append("abc", Json{{"type", "created"}, {"ms", 1}});
  store.append("abc", Json{{"type", "begin"}, {"ms", 2}});
  {
    std::ofstream out(dir.path / "abc.jsonl", std::ios::app);
    out << "{\"type\": \"ite";  // crash mid-write
  }
  EXPECT_EQ(store.events("abc").size(), 2u);
  EXPECT_TRUE(store.exists("abc"));
  EXPECT_FALSE(store.exists("nope"));
  EXPECT_FALSE(store.exists("../etc"));
  EXPECT_THROW(store.append("../x", Json::object()), std::invalid_argument);
  EXPECT_EQ(store.list(), std::vector<std::string>{"abc"});
}

TEST(Replay, ReproducesResultsByteForByte) {
  TempDir dir;
  SessionStore store(dir.path);
  StudyConfig cfg;
  cfg.randomesque = 3;
  cfg.adaptive_start = 2;
  cfg.cutoffs = {{"low", -INFINITY, 0.0}, {"high", 0.0, INFINITY}};
  const auto bank = demo_bank();
  for (int i = 0; i < 20; ++i) {
    const auto id = "r" + std::to_string(i);
    auto live = drive(&store, cfg, bank, id, 100 + i, -1.0 + 0.1 * i);
    const auto replayed = replay(store.events(id), cfg, bank);
    EXPECT_EQ(to_json(finalize(replayed, cfg)).dump(), to_json(finalize(live, cfg)).dump());
    EXPECT_EQ(to_json(replayed).dump(), to_json(live).dump());
    EXPECT_EQ(store.snapshot(id)->dump(), to_json(live).dump());
  }
}

TEST(Replay, DetectsDivergenceAndMismatch) {
  TempDir dir;
  SessionStore store(dir.path);
  StudyConfig cfg;
  const auto bank = demo_bank();
  drive(&store, cfg, bank, "x", 1, 0.0);
  auto events = store.events("x");
  auto other = cfg;
  other.max_items = 7;
  EXPECT_THROW(replay(events, other, bank), ReplayError);
  auto tampered = events;
  for (auto& ev : tampered)
    if (ev["type"] == "response") {
      ev["estimate"]["theta"] = ev["estimate"]["theta"].get<double>() + 1e-9;
      break;
    }
  EXPECT_THROW(replay(tampered, cfg, bank), ReplayError);
  EXPECT_THROW(replay({}, cfg, bank), ReplayError);
}

TEST(Resume, MidSessionEquivalence) {
  TempDir dir;
  SessionStore store(dir.path);
  StudyConfig cfg;
  cfg.model = Model::GRM;
  cfg.estimation.primary = Method::ML;
  cfg.adaptive_start = 2;
  const auto bank = demo_bank(Model::GRM, 60);
  for (int i = 0; i < 10; ++i) {
    const auto seed = static_cast<std::uint64_t>(500 + i);
    const double theta = -1.5 + 0.3 * i;
    const auto whole = drive(nullptr, cfg, bank, "w" + std::to_string(i), seed, theta);

    const auto id = "w" + std::to_string(i);
    const int cut = 1 + i % 5;
    auto first = drive(&store, cfg, bank, id, seed, theta, cut);
    // Leave an item outstanding on odd sessions so resume lands mid-step.
    if (i % 2) logged_next(&store, first, cfg, bank, nullptr, first.last_activity_ms + 10);
    const auto token = make_resume_token(id, "secret");
    auto resumed = resume_session(token, "secret", store, cfg, bank);
    EXPECT_EQ(to_json(resumed).dump(), to_json(first).dump());
    finish(&store, resumed, cfg, bank, seed, theta, cut);
    EXPECT_EQ(resumed.administered, whole.administered);
    const auto a = to_json(finalize(resumed, cfg));
    const auto b = to_json(finalize(whole, cfg));
    EXPECT_EQ(a["trajectory"], b["trajectory"]);
    EXPECT_EQ(a["theta_estimate"], b["theta_estimate"]);
  }
}

TEST(Resume, RejectsTamperedAndExpired) {
  TempDir dir;
  SessionStore store(dir.path);
  StudyConfig cfg;
  const auto bank = demo_bank();
  auto s = drive(&store, cfg, bank, "e1", 1, 0.0, 3);
  EXPECT_THROW(resume_session(make_resume_token("e1", "k") + "0", "k", store, cfg, bank), TokenError);
  EXPECT_THROW(resume_session(make_resume_token("zz", "k"), "k", store, cfg, bank), TokenError);
  logged_expiry(&store, s, cfg, s.last_activity_ms + 31 * 60'000);
  EXPECT_THROW(resume_session(make_resume_token("e1", "k"), "k", store, cfg, bank), SequenceError);
}

TEST(Exposure, LedgerRebuiltFromLogs) {
  TempDir dir;
  SessionStore store(dir.path);
  StudyConfig cfg;
  cfg.exposure.enabled = true;
  const auto bank = demo_bank();
  ExposureLedger live;
  live.set_uniform_target(0.25);
  for (int i = 0; i < 30; ++i) drive(&store, cfg, bank, "x" + std::to_string(i), i + 1, 0.1 * i - 1.5, -1, &live);
  ExposureLedger rebuilt;
  for (const auto& id : store.list()) {
    accumulate_exposure(store.events(id), rebuilt);
    // Logged items are authoritative when selection reads the shared ledger.
    EXPECT_NO_THROW(replay(store.events(id), cfg, bank));
  }
  EXPECT_EQ(rebuilt.sessions_total(), live.sessions_total());
  for (const auto& it : bank.items) {
    EXPECT_EQ(rebuilt.administrations(it.id), live.administrations(it.id));
    EXPECT_EQ(rebuilt.selections(it.id), live.selections(it.id));
  }
}
