#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "handpass/error.hpp"

namespace handpass {

enum class ScalerKind { MinMax, ZScore, Robust };

std::string_view to_string(ScalerKind kind);
std::optional<ScalerKind> parse_scaler_kind(std::string_view name);

/// Per-column parameters of a fitted scaler. Row 0 / row 1 of `parameters`
/// hold (min, max), (mean, population stddev) or (median, IQR) depending on
/// the kind.
template <typename Scalar = double>
struct BasicFittedScaler {
  using Params = Eigen::Array<Scalar, 2, Eigen::Dynamic>;

  ScalerKind kind = ScalerKind::MinMax;
  Params parameters;

  Eigen::Index features() const { return parameters.cols(); }

  /// Subtracted from each column.
  auto offset() const { return parameters.row(0); }

  /// Divisor per column; zero marks a constant column.
  Eigen::Array<Scalar, 1, Eigen::Dynamic> denominator() const {
    if (kind == ScalerKind::MinMax) return parameters.row(1) - parameters.row(0);
    return parameters.row(1);
  }
};

using FittedScaler = BasicFittedScaler<double>;

/// Linear-interpolation quantile of an already sorted range (q in [0, 1]).
template <typename Scalar>
Scalar sorted_quantile(const std::vector<Scalar>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const Scalar frac = static_cast<Scalar>(pos - static_cast<double>(lo));
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

template <typename Derived>
BasicFittedScaler<typename Derived::Scalar> fit_scaler(ScalerKind kind,
                                                       const Eigen::MatrixBase<Derived>& matrix) {
  using Scalar = typename Derived::Scalar;
  if (matrix.rows() == 0 || matrix.cols() == 0) throw EmptyMatrix("cannot fit a scaler on an empty matrix");
  BasicFittedScaler<Scalar> scaler;
  scaler.kind = kind;
  scaler.parameters.resize(2, matrix.cols());
  const auto n = static_cast<Scalar>(matrix.rows());
  std::vector<Scalar> column(static_cast<std::size_t>(matrix.rows()));
  for (Eigen::Index c = 0; c < matrix.cols(); ++c) {
    const auto col = matrix.col(c);
    switch (kind) {
      case ScalerKind::MinMax:
        scaler.parameters(0, c) = col.minCoeff();
        scaler.parameters(1, c) = col.maxCoeff();
        break;
      case ScalerKind::ZScore: {
        const Scalar mean = col.sum() / n;
        scaler.parameters(0, c) = mean;
        const bool constant = col.maxCoeff() == col.minCoeff();
        scaler.parameters(1, c) = constant ? Scalar(0) : std::sqrt((col.array() - mean).square().sum() / n);
        break;
      }
      case ScalerKind::Robust: {
        for (Eigen::Index r = 0; r < matrix.rows(); ++r) column[static_cast<std::size_t>(r)] = col(r);
        std::sort(column.begin(), column.end());
        scaler.parameters(0, c) = sorted_quantile(column, 0.5);
        scaler.parameters(1, c) = sorted_quantile(column, 0.75) - sorted_quantile(column, 0.25);
        break;
      }
    }
  }
  return scaler;
}

/// (x - offset) / denominator per column; constant columns map to 0.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> apply_scaler(
    const BasicFittedScaler<Scalar>& scaler, const Eigen::MatrixBase<Derived>& matrix) {
  if (matrix.cols() != scaler.features()) {
    throw DimensionMismatch("scaler fitted on " + std::to_string(scaler.features()) +
                            " columns, matrix has " + std::to_string(matrix.cols()));
  }
  const auto denom = scaler.denominator();
  Eigen::Array<Scalar, 1, Eigen::Dynamic> inv(denom.size());
  for (Eigen::Index c = 0; c < denom.size(); ++c) inv(c) = denom(c) == Scalar(0) ? Scalar(0) : 1 / denom(c);
  return ((matrix.array().rowwise() - scaler.offset()).rowwise() * inv).matrix();
}

}  // namespace handpass
