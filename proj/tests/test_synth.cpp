#include <doctest.h>

#include <fstream>
#include <iterator>
#include <stdexcept>

#include "handpass/dataset.hpp"
#include "handpass/learners.hpp"
#include "handpass/synth.hpp"
#include "support.hpp"

using namespace handpass;

namespace {

SynthConfig noise_free() {
  SynthConfig cfg;
  cfg.noise_sigma = 0;
  cfg.ramp_range = 0;
  cfg.offset_range = 0;
  cfg.gain_jitter = 0;
  cfg.placement_jitter = 0;
  cfg.interference_rate = 0;
  cfg.frames_per_capture = 4;
  return cfg;
}

std::vector<std::uint8_t> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Rows of `users` x `captures` sessions, `frames` each.
FeatureMatrix corpus_rows(const SynthConfig& cfg, const PipelineOptions& opts) {
  FeatureMatrix all;
  const SubcarrierMask mask = SubcarrierMask::vht80();
  for (int u = 1; u <= cfg.users; ++u) {
    for (int c = 1; c <= cfg.captures_per_user; ++c) {
      const auto frames = generate_capture_frames(cfg, u, Hand::Right, c);
      const BuiltRows b = build_rows(std::span<const CsiFrame>(frames), synth_meta(cfg, u, Hand::Right, c), mask, opts);
      if (all.rows() == 0) {
        all = b.matrix;
      } else {
        all.append(b.matrix);
      }
    }
  }
  return all;
}

double cv_f1(ModelKind kind, const FeatureMatrix& rows) {
  CvOptions opts;
  opts.folds = 5;
  opts.hyper.n_trees = 20;
  opts.fold_scaler = ScalerKind::MinMax;
  return cross_validate(kind, rows.features, rows.labels(), opts).mean.f1;
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("defaults describe 20 users x 5 captures x 5500 frames at 1000 packets per second") {
  const SynthConfig cfg;
  CHECK(cfg.users == 20);
  CHECK(cfg.captures_per_user == 5);
  CHECK(cfg.frames_per_capture == 5500);
  CHECK(cfg.packets_per_second == 1000);
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("out-of-range configurations are rejected") {
  SynthConfig cfg;
  cfg.users = 21;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.gain_jitter = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.interference_rate = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.noise_sigma = -0.1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("noise-free frames of one user are identical rows, users differ") {
  const SynthConfig cfg = noise_free();
  const SubcarrierMask mask = SubcarrierMask::vht80();
  std::vector<Eigen::MatrixXd> per_user;
  for (int u = 1; u <= 3; ++u) {
    const auto frames = generate_capture_frames(cfg, u, Hand::Right, 1);
    per_user.push_back(build_rows(std::span<const CsiFrame>(frames), synth_meta(cfg, u, Hand::Right, 1), mask, {})
                           .matrix.features);
    const Eigen::MatrixXd& m = per_user.back();
    for (Eigen::Index r = 1; r < m.rows(); ++r) REQUIRE(m.row(r) == m.row(0));
  }
  CHECK((per_user[0].row(0) - per_user[1].row(0)).cwiseAbs().maxCoeff() > 1e-3);
  CHECK((per_user[1].row(0) - per_user[2].row(0)).cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("noise-free captures cross-validate perfectly") {
  SynthConfig cfg = noise_free();
  cfg.users = 6;
  cfg.captures_per_user = 2;
  cfg.frames_per_capture = 10;
  const FeatureMatrix rows = corpus_rows(cfg, {});
  for (auto k : {ModelKind::RandomForest, ModelKind::DecisionTree, ModelKind::KNN, ModelKind::GaussianNB}) {
    CHECK(cv_f1(k, rows) == 1.0);
  }
}

TEST_CASE("generate writes one capture per session plus a manifest") {
  test::TempDir dir("synth");
  SynthConfig cfg;
  cfg.users = 3;
  cfg.captures_per_user = 2;
  cfg.frames_per_capture = 25;
  cfg.both_hands = true;
  const Manifest m = generate(cfg, dir.path());
  CHECK(m.captures.size() == 3 * 2 * 2);
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  CHECK(std::filesystem::exists(dir.path() / "03" / "left" / "2.pcap"));
  const Manifest back = read_manifest(dir / "manifest.json");
  REQUIRE(back.captures.size() == m.captures.size());
  for (std::size_t i = 0; i < m.captures.size(); ++i) {
    CHECK(back.captures[i].path == m.captures[i].path);
    CHECK(back.captures[i].meta == m.captures[i].meta);
    CHECK(back.captures[i].frames == 25);
  }
  CHECK(back.config.interference_rate == cfg.interference_rate);
  CHECK(back.config.both_hands);
  const CaptureFile c = read_capture(dir.path() / m.captures[0].path);
  CHECK(c.frames.size() == 25);
  CHECK(c.frames[0].capture_timestamp.microseconds == 0);
  CHECK(c.frames[1].capture_timestamp.microseconds == 1000);
}

TEST_CASE("the same seed gives byte-identical files, another seed does not") {
  test::TempDir a("synth"), b("synth"), c("synth");
  SynthConfig cfg;
  cfg.users = 2;
  cfg.captures_per_user = 2;
  cfg.frames_per_capture = 30;
  cfg.seed = 7;
  const Manifest m = generate(cfg, a.path());
  generate(cfg, b.path());
  cfg.seed = 8;
  generate(cfg, c.path());
  for (const CaptureEntry& e : m.captures) {
    CHECK(file_bytes(a.path() / e.path) == file_bytes(b.path() / e.path));
    CHECK(file_bytes(a.path() / e.path) != file_bytes(c.path() / e.path));
  }
  CHECK(file_bytes(a / "manifest.json") == file_bytes(b / "manifest.json"));
}

TEST_CASE("oracle labels follow manifest order") {
  Manifest m;
  m.captures.push_back({"a", CaptureMeta{1, Gender::M, Hand::Right, 4}, 3});
  m.captures.push_back({"b", CaptureMeta{2, Gender::M, Hand::Right, 9}, 2});
  CHECK(oracle_labels(m) == std::vector<int>{4, 4, 4, 9, 9});
}

TEST_CASE("default amplitudes stay clear of int16 saturation") {
  SynthConfig cfg;
  cfg.frames_per_capture = 1000;
  cfg.interference_rate = 1.0;
  int peak = 0;
  for (int u = 1; u <= cfg.users; ++u) {
    for (const CsiFrame& f : generate_capture_frames(cfg, u, Hand::Right, 1)) {
      for (const RawSample& s : f.csi) peak = std::max({peak, std::abs(int{s.re}), std::abs(int{s.im})});
    }
  }
  CHECK(peak < 32767);
}

TEST_CASE("per-frame nuisance leaves the user signature recoverable") {
  // Deterministic nuisance only: ramp, offset and gain are removed by the
  // pipeline, so every frame of a user maps close to the same row.
  SynthConfig cfg;
  cfg.noise_sigma = 0;
  cfg.interference_rate = 0;
  cfg.placement_jitter = 0;
  cfg.frames_per_capture = 50;
  const auto frames = generate_capture_frames(cfg, 5, Hand::Right, 1);
  const Eigen::MatrixXd m =
      build_rows(std::span<const CsiFrame>(frames), synth_meta(cfg, 5, Hand::Right, 1), SubcarrierMask::vht80(), {})
          .matrix.features;
  const Eigen::Index half = m.cols() / 2;
  const Eigen::MatrixXd amp = m.leftCols(half);
  for (Eigen::Index r = 1; r < amp.rows(); ++r) REQUIRE((amp.row(r) - amp.row(0)).cwiseAbs().maxCoeff() < 0.01);
}

TEST_CASE("cross-validated F1 falls as noise rises") {
  SynthConfig cfg;
  cfg.users = 6;
  cfg.captures_per_user = 2;
  cfg.frames_per_capture = 60;
  std::vector<double> f1;
  for (double sigma : {0.05, 0.8, 2.5}) {
    cfg.noise_sigma = sigma;
    f1.push_back(cv_f1(ModelKind::GaussianNB, corpus_rows(cfg, {})));
  }
  MESSAGE("F1 at noise 0.05 / 0.8 / 2.5: ", f1[0], " / ", f1[1], " / ", f1[2]);
  CHECK(f1[0] > f1[1]);
  CHECK(f1[1] > f1[2]);
}

TEST_CASE("phase sanitization is needed for phase-only features") {
  SynthConfig cfg;
  cfg.users = 6;
  cfg.captures_per_user = 2;
  cfg.frames_per_capture = 60;
  PipelineOptions raw;
  raw.sanitize = false;
  FeatureMatrix with = corpus_rows(cfg, {});
  FeatureMatrix without = corpus_rows(cfg, raw);
  const Eigen::Index half = with.features.cols() / 2;
  with.features = with.features.rightCols(half).eval();
  without.features = without.features.rightCols(half).eval();
  const double f1_with = cv_f1(ModelKind::RandomForest, with);
  const double f1_without = cv_f1(ModelKind::RandomForest, without);
  MESSAGE("phase-only F1 sanitized / raw: ", f1_with, " / ", f1_without);
  CHECK(f1_with > 0.9);
  CHECK(f1_without < f1_with - 0.3);
}

}  // TEST_SUITE
