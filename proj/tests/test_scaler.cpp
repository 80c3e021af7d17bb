#include <doctest.h>

#include <random>

#include "handpass/error.hpp"
#include "handpass/scaler.hpp"
#include "support.hpp"

using namespace handpass;

namespace {

Eigen::MatrixXd column(std::initializer_list<double> values) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(values.size()), 1);
  Eigen::Index i = 0;
  for (double v : values) m(i++, 0) = v;
  return m;
}

}  // namespace

TEST_SUITE("scaler") {

TEST_CASE("names round-trip") {
  for (auto k : {ScalerKind::MinMax, ScalerKind::ZScore, ScalerKind::Robust}) {
    CHECK(parse_scaler_kind(to_string(k)) == k);
  }
  CHECK_FALSE(parse_scaler_kind("l2").has_value());
}

TEST_CASE("minmax parameters and transform") {
  const auto m = column({2, 4, 6});
  const FittedScaler s = fit_scaler(ScalerKind::MinMax, m);
  CHECK(s.parameters(0, 0) == 2.0);
  CHECK(s.parameters(1, 0) == 6.0);
  const Eigen::MatrixXd out = apply_scaler(s, m);
  CHECK(std::abs(out(0, 0) - 0.0) < 1e-12);
  CHECK(std::abs(out(1, 0) - 0.5) < 1e-12);
  CHECK(std::abs(out(2, 0) - 1.0) < 1e-12);
}

TEST_CASE("zscore uses the population standard deviation") {
  const auto m = column({1, 2, 3});
  const FittedScaler s = fit_scaler(ScalerKind::ZScore, m);
  CHECK(std::abs(s.parameters(0, 0) - 2.0) < 1e-12);
  CHECK(std::abs(s.parameters(1, 0) - std::sqrt(2.0 / 3.0)) < 1e-12);
  CHECK(std::abs(s.parameters(1, 0) - 0.8164966) < 1e-7);
  const Eigen::MatrixXd out = apply_scaler(s, m);
  const double z = 1.0 / std::sqrt(2.0 / 3.0);
  CHECK(std::abs(out(0, 0) + z) < 1e-12);
  CHECK(std::abs(out(1, 0)) < 1e-12);
  CHECK(std::abs(out(2, 0) - z) < 1e-12);
  CHECK(std::abs(z - 1.2247449) < 1e-7);
}

TEST_CASE("robust uses interpolated quartiles") {
  const auto m = column({1, 2, 3, 4, 100});
  const FittedScaler s = fit_scaler(ScalerKind::Robust, m);
  std::vector<double> v{1, 2, 3, 4, 100};
  CHECK(s.parameters(0, 0) == test::quantile(v, 0.5));
  CHECK(s.parameters(1, 0) == test::quantile(v, 0.75) - test::quantile(v, 0.25));
  CHECK(s.parameters(0, 0) == 3.0);
  CHECK(s.parameters(1, 0) == 2.0);
  // Even count: quartiles fall between order statistics.
  const FittedScaler e = fit_scaler(ScalerKind::Robust, column({1, 2, 3, 4}));
  CHECK(std::abs(e.parameters(0, 0) - 2.5) < 1e-12);
  CHECK(std::abs(e.parameters(1, 0) - (3.25 - 1.75)) < 1e-12);
}

TEST_CASE("constant columns map to zero for every kind") {
  const auto m = column({5, 5, 5});
  for (auto k : {ScalerKind::MinMax, ScalerKind::ZScore, ScalerKind::Robust}) {
    const Eigen::MatrixXd out = apply_scaler(fit_scaler(k, m), m);
    CHECK(out.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(fit_scaler(ScalerKind::MinMax, Eigen::MatrixXd(0, 3)), EmptyMatrix);
  const FittedScaler s = fit_scaler(ScalerKind::MinMax, Eigen::MatrixXd::Random(4, 3));
  CHECK_THROWS_AS(apply_scaler(s, Eigen::MatrixXd::Random(4, 2)), DimensionMismatch);
}

TEST_CASE("fitted columns hit their targets") {
  std::mt19937_64 gen(6);
  std::normal_distribution<double> normal(3.0, 7.0);
  for (int t = 0; t < 30; ++t) {
    const Eigen::Index rows = 5 + t, cols = 4;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = normal(gen);
    const Eigen::MatrixXd mm = apply_scaler(fit_scaler(ScalerKind::MinMax, m), m);
    const Eigen::MatrixXd zs = apply_scaler(fit_scaler(ScalerKind::ZScore, m), m);
    const Eigen::MatrixXd rb = apply_scaler(fit_scaler(ScalerKind::Robust, m), m);
    for (Eigen::Index c = 0; c < cols; ++c) {
      REQUIRE(std::abs(mm.col(c).minCoeff()) < 1e-9);
      REQUIRE(std::abs(mm.col(c).maxCoeff() - 1) < 1e-9);
      const double mean = zs.col(c).mean();
      REQUIRE(std::abs(mean) < 1e-9);
      REQUIRE(std::abs(std::sqrt((zs.col(c).array() - mean).square().mean()) - 1) < 1e-9);
      std::vector<double> v(rb.col(c).begin(), rb.col(c).end());
      REQUIRE(std::abs(test::quantile(v, 0.5)) < 1e-9);
    }
  }
}

TEST_CASE("transform is affine per column") {
  Eigen::MatrixXd m = Eigen::MatrixXd::Random(20, 5);
  for (auto k : {ScalerKind::MinMax, ScalerKind::ZScore, ScalerKind::Robust}) {
    const FittedScaler s = fit_scaler(k, m);
    const Eigen::MatrixXd a = apply_scaler(s, m);
    const Eigen::MatrixXd twice = apply_scaler(s, Eigen::MatrixXd(2 * m));
    const Eigen::MatrixXd zero = apply_scaler(s, Eigen::MatrixXd::Zero(20, 5));
    // f(2x) - f(0) == 2 (f(x) - f(0))
    REQUIRE(((twice - zero) - 2 * (a - zero)).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("float scalar instantiation") {
  Eigen::MatrixXf m(3, 1);
  m << 2, 4, 6;
  const auto s = fit_scaler(ScalerKind::MinMax, m);
  const Eigen::MatrixXf out = apply_scaler(s, m);
  CHECK(out(1, 0) == doctest::Approx(0.5f));
}

}  // TEST_SUITE
