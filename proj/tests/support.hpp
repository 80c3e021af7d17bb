#pragma once

// Test-only generators and reference implementations. Oracles here are coded
// directly from the textbook definitions and share no code with the library.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Dense>

#include "handpass/csi_frame.hpp"

namespace test {

// ---------------------------------------------------------------------------
// Generators

inline handpass::CsiFrame random_frame(std::mt19937_64& gen) {
  std::uniform_int_distribution<int> byte(0, 255);
  std::uniform_int_distribution<int> i16(-32768, 32767);
  std::uniform_int_distribution<std::uint32_t> u32;
  handpass::CsiFrame f;
  f.rssi = static_cast<std::int8_t>(byte(gen) - 128);
  f.frame_control = static_cast<std::uint8_t>(byte(gen));
  for (auto& b : f.source_mac) b = static_cast<std::uint8_t>(byte(gen));
  f.sequence_number = static_cast<std::uint16_t>(u32(gen));
  f.core_spatial = static_cast<std::uint16_t>(u32(gen));
  f.chanspec = static_cast<std::uint16_t>(u32(gen));
  f.chip_version = static_cast<std::uint16_t>(u32(gen));
  for (auto& s : f.csi) s = {static_cast<std::int16_t>(i16(gen)), static_cast<std::int16_t>(i16(gen))};
  f.capture_timestamp = {u32(gen), u32(gen) % 1000000u};
  return f;
}

inline std::vector<std::uint8_t> random_bytes(std::mt19937_64& gen, std::size_t n) {
  std::uniform_int_distribution<int> byte(0, 255);
  std::vector<std::uint8_t> out(n);
  for (auto& b : out) b = static_cast<std::uint8_t>(byte(gen));
  return out;
}

// ---------------------------------------------------------------------------
// Hand-assembled PCAP bytes

inline void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_be(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = bytes - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::vector<std::uint8_t> pcap_global_header(std::uint32_t linktype = 1) {
  std::vector<std::uint8_t> out;
  put_le(out, 0xA1B2C3D4, 4);
  put_le(out, 2, 2);
  put_le(out, 4, 2);
  put_le(out, 0, 4);
  put_le(out, 0, 4);
  put_le(out, 65535, 4);
  put_le(out, linktype, 4);
  return out;
}

inline void append_record(std::vector<std::uint8_t>& file, const std::vector<std::uint8_t>& packet,
                          std::uint32_t ts_sec = 0) {
  put_le(file, ts_sec, 4);
  put_le(file, 0, 4);
  put_le(file, packet.size(), 4);
  put_le(file, packet.size(), 4);
  file.insert(file.end(), packet.begin(), packet.end());
}

/// Ethernet + IPv4 + UDP around `payload`, checksum left zero.
inline std::vector<std::uint8_t> udp_packet(const std::vector<std::uint8_t>& payload, std::uint16_t dst_port) {
  std::vector<std::uint8_t> p;
  for (int i = 0; i < 6; ++i) p.push_back(0xFF);
  for (int i = 0; i < 6; ++i) p.push_back(0x02);
  put_be(p, 0x0800, 2);
  p.push_back(0x45);
  p.push_back(0);
  put_be(p, 20 + 8 + payload.size(), 2);
  put_be(p, 0, 2);
  put_be(p, 0, 2);
  p.push_back(64);
  p.push_back(17);
  put_be(p, 0, 2);
  put_be(p, 0x0A000001, 4);
  put_be(p, 0x0A0000FF, 4);
  put_be(p, 5500, 2);
  put_be(p, dst_port, 2);
  put_be(p, 8 + payload.size(), 2);
  put_be(p, 0, 2);
  p.insert(p.end(), payload.begin(), payload.end());
  return p;
}

inline std::vector<std::uint8_t> arp_packet() {
  std::vector<std::uint8_t> p;
  for (int i = 0; i < 6; ++i) p.push_back(0xFF);
  for (int i = 0; i < 6; ++i) p.push_back(0x02);
  put_be(p, 0x0806, 2);
  put_be(p, 1, 2);
  put_be(p, 0x0800, 2);
  p.push_back(6);
  p.push_back(4);
  put_be(p, 1, 2);
  for (int i = 0; i < 20; ++i) p.push_back(static_cast<std::uint8_t>(i));
  return p;
}

// ---------------------------------------------------------------------------
// Numeric oracles

inline double amplitude(double re, double im) { return std::sqrt(re * re + im * im); }

inline double phase_deg(double re, double im) {
  if (re == 0 && im == 0) return 0;
  return std::atan2(im, re) * 180.0 / std::numbers::pi;
}

/// Minimizes sum (y - a x - b)^2 + lambda (a^2 + b^2) by Cramer's rule.
inline std::pair<double, double> ridge_line(const std::vector<double>& x, const std::vector<double>& y,
                                            double lambda) {
  double sxx = 0, sx = 0, n = 0, sxy = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += x[i] * x[i];
    sx += x[i];
    n += 1;
    sxy += x[i] * y[i];
    sy += y[i];
  }
  const double a11 = sxx + lambda, a12 = sx, a22 = n + lambda;
  const double det = a11 * a22 - a12 * a12;
  return {(sxy * a22 - a12 * sy) / det, (a11 * sy - a12 * sxy) / det};
}

/// Quantile with linear interpolation between order statistics.
inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double gini(const std::vector<int>& labels) {
  if (labels.empty()) return 0;
  std::map<int, double> counts;
  for (int l : labels) counts[l] += 1;
  double g = 1;
  for (const auto& [_, c] : counts) g -= (c / labels.size()) * (c / labels.size());
  return g;
}

/// Weighted Gini decrease of splitting `rows` on x[feature] <= threshold.
inline double split_decrease(const Eigen::MatrixXd& x, const std::vector<int>& y, int feature, double threshold) {
  std::vector<int> left, right;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    (x(r, feature) <= threshold ? left : right).push_back(y[static_cast<std::size_t>(r)]);
  }
  const double n = static_cast<double>(y.size());
  return gini(y) - left.size() / n * gini(left) - right.size() / n * gini(right);
}

struct BestSplit {
  double decrease = -1;
  int feature = -1;
  double threshold = 0;
};

/// Exhaustive search over every feature and every midpoint between
/// consecutive distinct values.
inline BestSplit brute_force_root_split(const Eigen::MatrixXd& x, const std::vector<int>& y) {
  BestSplit best;
  for (int f = 0; f < x.cols(); ++f) {
    std::set<double> values(x.col(f).begin(), x.col(f).end());
    std::vector<double> v(values.begin(), values.end());
    for (std::size_t i = 0; i + 1 < v.size(); ++i) {
      const double t = (v[i] + v[i + 1]) / 2;
      const double d = split_decrease(x, y, f, t);
      if (d > best.decrease) best = {d, f, t};
    }
  }
  return best;
}

/// Posterior of a Gaussian naive Bayes model computed term by term.
inline std::vector<double> gnb_posterior(const Eigen::MatrixXd& x, const std::vector<int>& y,
                                         const Eigen::RowVectorXd& query, double var_smoothing) {
  std::vector<int> classes(y.begin(), y.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  const auto d = x.cols();
  double max_var = 0;
  for (Eigen::Index f = 0; f < d; ++f) {
    double mean = 0;
    for (Eigen::Index r = 0; r < x.rows(); ++r) mean += x(r, f);
    mean /= static_cast<double>(x.rows());
    double var = 0;
    for (Eigen::Index r = 0; r < x.rows(); ++r) var += (x(r, f) - mean) * (x(r, f) - mean);
    max_var = std::max(max_var, var / static_cast<double>(x.rows()));
  }
  const double eps = var_smoothing * max_var;
  std::vector<double> log_joint;
  for (const int c : classes) {
    std::vector<Eigen::Index> members;
    for (std::size_t r = 0; r < y.size(); ++r) {
      if (y[r] == c) members.push_back(static_cast<Eigen::Index>(r));
    }
    double lj = std::log(static_cast<double>(members.size()) / static_cast<double>(y.size()));
    for (Eigen::Index f = 0; f < d; ++f) {
      double mean = 0;
      for (auto r : members) mean += x(r, f);
      mean /= static_cast<double>(members.size());
      double var = 0;
      for (auto r : members) var += (x(r, f) - mean) * (x(r, f) - mean);
      var = var / static_cast<double>(members.size()) + eps;
      lj += -0.5 * std::log(2 * std::numbers::pi * var) - (query(f) - mean) * (query(f) - mean) / (2 * var);
    }
    log_joint.push_back(lj);
  }
  const double m = *std::max_element(log_joint.begin(), log_joint.end());
  double z = 0;
  for (double v : log_joint) z += std::exp(v - m);
  std::vector<double> post;
  for (double v : log_joint) post.push_back(std::exp(v - m) / z);
  return post;
}

// ---------------------------------------------------------------------------

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("handpass-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace test
