#include <doctest.h>

#include <fstream>
#include <random>

#include "handpass/error.hpp"
#include "handpass/gatekeeper.hpp"
#include "handpass/synth.hpp"
#include "support.hpp"

using namespace handpass;

namespace {

constexpr int kUsers = 5;

SynthConfig fixture_config() {
  SynthConfig cfg;
  cfg.users = kUsers;
  cfg.captures_per_user = 2;
  cfg.frames_per_capture = 500;
  cfg.packets_per_second = 100;
  return cfg;
}

FeatureMatrix enrollment_rows(const SynthConfig& cfg, int frames_per_user) {
  FeatureMatrix all;
  for (int u = 1; u <= cfg.users; ++u) {
    auto frames = generate_capture_frames(cfg, u, Hand::Right, 1);
    frames.resize(static_cast<std::size_t>(frames_per_user));
    const BuiltRows b = build_rows(std::span<const CsiFrame>(frames), synth_meta(cfg, u, Hand::Right, 1),
                                   SubcarrierMask::vht80(), {});
    if (u == 1) {
      all = b.matrix;
    } else {
      all.append(b.matrix);
    }
  }
  return all;
}

const EnrollmentStore& fixture_store() {
  static const EnrollmentStore store = [] {
    const SynthConfig cfg = fixture_config();
    EnrollOptions opts;
    opts.hyper.n_trees = 20;
    opts.packets_per_second = cfg.packets_per_second;
    EnrollmentStore s = enroll(enrollment_rows(cfg, 300), opts);
    s.roster[2].insert("lab");
    return s;
  }();
  return store;
}

std::vector<CsiFrame> probe(int user) { return generate_capture_frames(fixture_config(), user, Hand::Right, 2); }

}  // namespace

TEST_SUITE("gatekeeper") {

TEST_CASE("enrollment fits its own rows") {
  const EnrollmentStore& s = fixture_store();
  const FeatureMatrix rows = enrollment_rows(fixture_config(), 300);
  const auto pred = predict(s.model, apply_scaler(s.scaler, rows.features));
  const auto truth = rows.labels();
  int correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == truth[i];
  CHECK(correct >= 0.95 * static_cast<double>(pred.size()));
  CHECK(s.roster.size() == kUsers);
  CHECK(s.roster.at(1) == std::set<std::string>{"access"});
  CHECK(s.packets_per_second == 100);
  CHECK_FALSE(s.created_at.empty());
}

TEST_CASE("enrollment rejects one user and thin users") {
  const FeatureMatrix rows = enrollment_rows(fixture_config(), 120);
  std::vector<Eigen::Index> first;
  for (Eigen::Index i = 0; i < 120; ++i) first.push_back(i);
  CHECK_THROWS_AS(enroll(rows.select_rows(first)), DegenerateLabels);
  std::vector<Eigen::Index> thin;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    if (i >= 120 || i < 99) thin.push_back(i);
  }
  CHECK_THROWS_AS(enroll(rows.select_rows(thin)), TooFewFrames);
}

TEST_CASE("every enrolled user is granted with a 1 second window") {
  const EnrollmentStore& s = fixture_store();
  for (int u = 1; u <= kUsers; ++u) {
    const auto frames = probe(u);
    const AuthDecision d = authenticate(s, frames);
    CHECK(d.decision == Verdict::Grant);
    CHECK(d.user_id == u);
    CHECK(d.frames_used == 100);
    CHECK(d.reason == "granted");
  }
}

TEST_CASE("permissions and thresholds gate the grant") {
  const EnrollmentStore& s = fixture_store();
  AuthRequest lab;
  lab.required_permission = "lab";
  CHECK(authenticate(s, probe(2), lab).decision == Verdict::Grant);
  const AuthDecision d = authenticate(s, probe(3), lab);
  CHECK(d.decision == Verdict::Deny);
  CHECK(d.reason == "missing permission");
  AuthRequest strict;
  strict.threshold = 1.01;
  CHECK(authenticate(s, probe(1), strict).reason == "below threshold");
}

TEST_CASE("decide reasons") {
  const EnrollmentStore& s = fixture_store();
  const std::vector<int> none;
  CHECK(decide(s, none, {}).reason == "no usable frames");
  const std::vector<int> stranger{42, 42, 1};
  const AuthDecision d = decide(s, stranger, {});
  CHECK(d.user_id == 42);
  CHECK(d.reason == "not enrolled");
  CHECK(d.decision == Verdict::Deny);
  const std::vector<int> split{1, 1, 2, 2};
  CHECK(decide(s, split, {}).user_id == 1);
  CHECK(decide(s, split, {}).vote_share == 0.5);
}

TEST_CASE("short windows and dead frames are errors") {
  const EnrollmentStore& s = fixture_store();
  auto frames = probe(1);
  frames.resize(50);
  CHECK_THROWS_AS(authenticate(s, frames), WindowTooShort);
  AuthRequest zero;
  zero.window_seconds = 0;
  CHECK_THROWS_AS(authenticate(s, frames, zero), WindowTooShort);
  const std::vector<CsiFrame> dead(100);
  CHECK_THROWS_AS(authenticate(s, dead), ZeroSignal);
}

TEST_CASE("a saved store decides exactly like the original") {
  const EnrollmentStore& s = fixture_store();
  test::TempDir dir("store");
  save_store(s, dir / "store.json");
  const EnrollmentStore back = load_store(dir / "store.json");
  CHECK(back.roster == s.roster);
  CHECK(store_to_string(back) == store_to_string(s));
  for (int u = 1; u <= kUsers; ++u) {
    const auto frames = probe(u);
    CHECK(authenticate(back, frames) == authenticate(s, frames));
  }
  CHECK_THROWS_AS(store_from_string("{}"), BadModelDocument);
  CHECK_THROWS_AS(store_from_string("[1,2"), BadModelDocument);
}

TEST_CASE("raising the threshold never turns a deny into a grant") {
  const EnrollmentStore& s = fixture_store();
  std::mt19937_64 gen(31);
  std::uniform_int_distribution<int> user(1, kUsers + 2), len(1, 40);
  for (int t = 0; t < 500; ++t) {
    std::vector<int> votes(static_cast<std::size_t>(len(gen)));
    for (int& v : votes) v = user(gen);
    bool granted_before = true;
    for (double th : {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}) {
      AuthRequest r;
      r.threshold = th;
      const bool granted = decide(s, votes, r).decision == Verdict::Grant;
      REQUIRE((granted_before || !granted));
      granted_before = granted;
    }
  }
}

TEST_CASE("no grant ever goes to a user outside the roster") {
  EnrollmentStore s = fixture_store();
  std::mt19937_64 gen(32);
  std::uniform_int_distribution<int> user(1, 8), len(1, 30), coin(0, 1);
  std::uniform_real_distribution<double> th(0, 1);
  for (int t = 0; t < 2000; ++t) {
    s.roster.clear();
    for (int u = 1; u <= kUsers; ++u) {
      if (coin(gen)) s.roster[u] = coin(gen) ? std::set<std::string>{"access"} : std::set<std::string>{"lab"};
    }
    std::vector<int> votes(static_cast<std::size_t>(len(gen)));
    for (int& v : votes) v = user(gen);
    AuthRequest r;
    r.threshold = th(gen);
    r.required_permission = coin(gen) ? "access" : "";
    const AuthDecision d = decide(s, votes, r);
    if (d.decision == Verdict::Grant) {
      REQUIRE(d.user_id.has_value());
      REQUIRE(s.roster.contains(*d.user_id));
      REQUIRE(d.vote_share >= r.threshold);
      REQUIRE((r.required_permission.empty() || s.roster.at(*d.user_id).contains(r.required_permission)));
    }
  }
}

TEST_CASE("longer windows identify at least as many users") {
  SynthConfig noisy = fixture_config();
  noisy.noise_sigma = 0.6;
  EnrollOptions opts;
  opts.hyper.n_trees = 20;
  opts.packets_per_second = noisy.packets_per_second;
  const EnrollmentStore s = enroll(enrollment_rows(noisy, 300), opts);
  std::vector<int> correct;
  for (double w : {0.1, 1.0, 5.0}) {
    AuthRequest r;
    r.window_seconds = w;
    r.threshold = 0;
    int hits = 0;
    for (int u = 1; u <= kUsers; ++u) {
      const auto frames = generate_capture_frames(noisy, u, Hand::Right, 2);
      hits += authenticate(s, frames, r).user_id == u;
    }
    correct.push_back(hits);
  }
  MESSAGE("users identified at 0.1 / 1 / 5 s: ", correct[0], " / ", correct[1], " / ", correct[2]);
  CHECK(correct[0] <= correct[1]);
  CHECK(correct[1] <= correct[2]);
  CHECK(correct[2] == kUsers);
}

TEST_CASE("audit log appends, reads ranges and survives a torn tail") {
  test::TempDir dir("audit");
  const auto path = dir / "audit.jsonl";
  std::vector<AuthDecision> written;
  {
    AuditLog log(path);
    for (int i = 0; i < 5; ++i) {
      AuthDecision d;
      d.user_id = i % 2 == 0 ? std::optional<int>(i + 1) : std::nullopt;
      d.vote_share = 0.1 * i;
      d.frames_used = static_cast<std::size_t>(10 * i);
      d.window_seconds = 1;
      d.decision = i % 2 == 0 ? Verdict::Grant : Verdict::Deny;
      d.reason = i % 2 == 0 ? "granted" : "not enrolled";
      log.append(d);
      written.push_back(d);
    }
    log.flush();
  }
  AuditLog log(path);
  const auto all = log.read();
  CHECK(all.warning.empty());
  CHECK(all.decisions == written);
  for (std::size_t i = 1; i < all.decisions.size(); ++i) {
    CHECK(all.decisions[i].timestamp_us > all.decisions[i - 1].timestamp_us);
  }
  CHECK(log.read(1, 2).decisions == std::vector<AuthDecision>{written[1], written[2]});
  CHECK(log.read(4).decisions.size() == 1);
  CHECK(log.read(9).decisions.empty());

  std::ofstream(path, std::ios::app) << R"({"ts_us":1,"user_id":3,"vote)";
  const auto torn = AuditLog(path).read();
  CHECK(torn.decisions == written);
  CHECK_FALSE(torn.warning.empty());

  AuditLog reopened(dir / "second.jsonl");
  AuthDecision d;
  reopened.append(d);
  AuditLog again(dir / "second.jsonl");
  AuthDecision e;
  again.append(e);
  CHECK(e.timestamp_us > d.timestamp_us);
}

TEST_CASE("decision records round-trip through JSON") {
  AuthDecision d;
  d.user_id = 7;
  d.vote_share = 0.73;
  d.frames_used = 1000;
  d.window_seconds = 1;
  d.decision = Verdict::Grant;
  d.reason = "granted";
  d.timestamp_us = 1700000000123456;
  CHECK(decision_from_json(decision_to_json(d)) == d);
  CHECK_THROWS_AS(decision_from_json("{}"), BadModelDocument);
}

}  // TEST_SUITE
