#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "handpass/csi_frame.hpp"
#include "handpass/error.hpp"

namespace handpass {

inline constexpr int kLowestSubcarrier = -static_cast<int>(kSubcarriers / 2);
inline constexpr int kHighestSubcarrier = static_cast<int>(kSubcarriers / 2) - 1;

/// Position of logical subcarrier k (-128..127) in a shifted 256-vector.
constexpr Eigen::Index subcarrier_position(int k) noexcept { return k - kLowestSubcarrier; }
constexpr int logical_subcarrier(Eigen::Index position) noexcept {
  return static_cast<int>(position) + kLowestSubcarrier;
}

/// Null, pilot and useful subcarriers of the 80 MHz (256-bin) layout.
struct SubcarrierMask {
  std::vector<int> null_indices;
  std::vector<int> pilot_indices;
  std::vector<int> useful;  ///< ascending

  /// The 14 null / 8 pilot / 234 useful split of a VHT80 channel.
  static SubcarrierMask vht80();

  /// Builds a mask from explicit null and pilot sets; `useful` is the
  /// ascending complement in [-128, 127].
  static SubcarrierMask from_excluded(std::vector<int> null_indices, std::vector<int> pilot_indices);

  bool is_useful(int k) const;
};

/// Channel frequency response in logical order: position p holds subcarrier
/// p - 128.
template <typename Scalar = double>
struct Cfr {
  using Complex = std::complex<Scalar>;
  using ComplexVector = Eigen::Matrix<Complex, Eigen::Dynamic, 1>;
  using RealArray = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  ComplexVector subcarriers;
  RealArray amplitude;
  RealArray phase_deg;

  Scalar amplitude_at(int k) const { return amplitude(subcarrier_position(k)); }
  Scalar phase_deg_at(int k) const { return phase_deg(subcarrier_position(k)); }
};

using CfrVector = Cfr<double>;

struct SanitizerConfig {
  double lambda = 0.1;
  bool unwrap = true;
};

// ---------------------------------------------------------------------------
// FFT shift

/// output[i] = input[(i + n/2) mod n].
template <typename Derived>
typename Derived::PlainObject fft_shift(const Eigen::DenseBase<Derived>& values) {
  const Eigen::Index n = values.size();
  if (n % 2 != 0) throw OddLength("fft_shift needs an even length, got " + std::to_string(n));
  typename Derived::PlainObject out(values.rows(), values.cols());
  const Eigen::Index half = n / 2;
  for (Eigen::Index i = 0; i < n; ++i) out(i) = values.derived()((i + half) % n);
  return out;
}

template <typename T>
std::vector<T> fft_shift(const std::vector<T>& values) {
  const std::size_t n = values.size();
  if (n % 2 != 0) throw OddLength("fft_shift needs an even length, got " + std::to_string(n));
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = values[(i + n / 2) % n];
  return out;
}

// ---------------------------------------------------------------------------
// Complex helpers

/// atan2 in degrees, mapped to (-180, 180]; the origin maps to 0.
template <typename Scalar>
Scalar phase_degrees(const std::complex<Scalar>& z) {
  if (z.real() == Scalar(0) && z.imag() == Scalar(0)) return Scalar(0);
  Scalar deg = std::atan2(z.imag(), z.real()) * Scalar(180) / std::numbers::pi_v<Scalar>;
  if (deg <= Scalar(-180)) deg += Scalar(360);
  return deg;
}

template <typename Scalar>
Scalar phase_radians(const std::complex<Scalar>& z) {
  if (z.real() == Scalar(0) && z.imag() == Scalar(0)) return Scalar(0);
  return std::atan2(z.imag(), z.real());
}

/// Recomputes amplitude and phase_deg from the complex values.
template <typename Scalar>
void refresh_polar(Cfr<Scalar>& cfr) {
  const Eigen::Index n = cfr.subcarriers.size();
  cfr.amplitude.resize(n);
  cfr.phase_deg.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    cfr.amplitude(i) = std::abs(cfr.subcarriers(i));
    cfr.phase_deg(i) = phase_degrees(cfr.subcarriers(i));
  }
}

template <typename Scalar = double>
Cfr<Scalar> to_cfr(const CsiFrame& frame) {
  typename Cfr<Scalar>::ComplexVector hw(static_cast<Eigen::Index>(kSubcarriers));
  for (std::size_t k = 0; k < kSubcarriers; ++k) {
    hw(static_cast<Eigen::Index>(k)) = {static_cast<Scalar>(frame.csi[k].re),
                                        static_cast<Scalar>(frame.csi[k].im)};
  }
  Cfr<Scalar> cfr;
  cfr.subcarriers = fft_shift(hw);
  refresh_polar(cfr);
  return cfr;
}

/// Divides every subcarrier by the mean amplitude across all bins.
template <typename Scalar>
Cfr<Scalar> normalize_cfr(const Cfr<Scalar>& cfr) {
  const Scalar mean = cfr.amplitude.mean();
  if (!(mean > Scalar(0)) || !std::isfinite(mean)) {
    throw ZeroSignal("CFR has zero mean amplitude");
  }
  Cfr<Scalar> out;
  out.subcarriers = cfr.subcarriers / mean;
  out.amplitude = cfr.amplitude / mean;
  out.phase_deg = cfr.phase_deg;
  return out;
}

// ---------------------------------------------------------------------------
// Phase sanitization

struct LinearTrend {
  double slope = 0;
  double intercept = 0;
};

/// Sequential unwrap: each step is folded into (-pi, pi].
template <typename Scalar>
void unwrap_in_place(std::vector<Scalar>& phases) {
  constexpr Scalar kPi = std::numbers::pi_v<Scalar>;
  for (std::size_t i = 1; i < phases.size(); ++i) {
    Scalar step = phases[i] - phases[i - 1];
    step = std::remainder(step, Scalar(2) * kPi);
    if (step <= -kPi) step += Scalar(2) * kPi;
    phases[i] = phases[i - 1] + step;
  }
}

/// Ridge fit of phase ~ slope * k + intercept with penalty lambda on both
/// coefficients.
template <typename Scalar>
LinearTrend fit_ridge_trend(const std::vector<int>& indices, const std::vector<Scalar>& phases,
                            double lambda) {
  Eigen::Matrix2d normal = Eigen::Matrix2d::Zero();
  Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const double k = indices[i];
    const double phi = static_cast<double>(phases[i]);
    normal(0, 0) += k * k;
    normal(0, 1) += k;
    normal(1, 1) += 1.0;
    rhs(0) += k * phi;
    rhs(1) += phi;
  }
  normal(1, 0) = normal(0, 1);
  normal.diagonal().array() += lambda;
  const Eigen::Vector2d coef = normal.ldlt().solve(rhs);
  return {coef(0), coef(1)};
}

/// Removes a regularized linear phase trend, estimated over the useful
/// subcarriers, from all 256 bins. Amplitudes are untouched.
template <typename Scalar>
Cfr<Scalar> sanitize_phase(const Cfr<Scalar>& cfr, const SanitizerConfig& cfg,
                           const SubcarrierMask& mask) {
  const Eigen::Index n = cfr.subcarriers.size();
  Eigen::Array<Scalar, Eigen::Dynamic, 1> phase(n);
  for (Eigen::Index i = 0; i < n; ++i) phase(i) = phase_radians(cfr.subcarriers(i));

  std::vector<Scalar> useful_phase;
  useful_phase.reserve(mask.useful.size());
  for (const int k : mask.useful) useful_phase.push_back(phase(subcarrier_position(k)));
  if (cfg.unwrap) {
    unwrap_in_place(useful_phase);
    for (std::size_t i = 0; i < mask.useful.size(); ++i) {
      phase(subcarrier_position(mask.useful[i])) = useful_phase[i];
    }
  }
  const LinearTrend trend = fit_ridge_trend(mask.useful, useful_phase, cfg.lambda);

  Cfr<Scalar> out;
  out.subcarriers.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar residual = phase(i) - static_cast<Scalar>(trend.slope * logical_subcarrier(i) +
                                                           trend.intercept);
    out.subcarriers(i) = std::polar(cfr.amplitude(i), residual);
  }
  refresh_polar(out);
  out.amplitude = cfr.amplitude;
  return out;
}

}  // namespace handpass
