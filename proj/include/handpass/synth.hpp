#pragma once

#include <cstdint>
#include <filesystem>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "handpass/csi_frame.hpp"
#include "handpass/dataset.hpp"

namespace handpass {

/// Parameters of the synthetic capture generator. Each user gets a stable
/// spectral signature (Gaussian bumps over a shared channel baseline plus a
/// smooth phase profile); every frame then receives a random linear phase
/// ramp, a random common phase offset, a random gain, an optional
/// narrowband interference burst and complex Gaussian noise before int16
/// quantization.
struct SynthConfig {
  int users = 20;
  int captures_per_user = 5;
  int frames_per_capture = 5500;
  double packets_per_second = 1000;
  /// Noise standard deviation relative to the mean channel amplitude.
  double noise_sigma = 0.2;
  int bump_count = 4;
  /// Per-frame slope alpha ~ U(-ramp_range, ramp_range), radians per subcarrier.
  double ramp_range = 0.05;
  /// Per-frame offset beta ~ U(-offset_range, offset_range), radians.
  double offset_range = std::numbers::pi;
  /// Per-frame gain g ~ U(1 - gain_jitter, 1 + gain_jitter).
  double gain_jitter = 0.3;
  /// Relative per-capture perturbation of bump heights (hand placement).
  double placement_jitter = 0.05;
  /// Mean raw amplitude in int16 units.
  double amplitude_scale = 4000;
  /// Fraction of frames hit by a narrowband burst that scales the amplitude
  /// of 8 to 40 adjacent subcarriers by U(1.5, 1 + interference_gain).
  double interference_rate = 0.3;
  double interference_gain = 2.0;
  bool both_hands = false;
  std::uint64_t seed = 42;

  /// Throws std::invalid_argument on out-of-range fields.
  void validate() const;
};

/// Noise-free per-user channel in logical subcarrier order (-128..127).
struct UserSignature {
  Eigen::ArrayXd amplitude;  ///< relative to amplitude_scale
  Eigen::ArrayXd phase;      ///< radians
};

UserSignature user_signature(const SynthConfig& cfg, int user_id, Hand hand);

/// Frames of one capture session; deterministic in (cfg.seed, user, hand, capture).
std::vector<CsiFrame> generate_capture_frames(const SynthConfig& cfg, int user_id, Hand hand, int capture);

CaptureMeta synth_meta(const SynthConfig& cfg, int user_id, Hand hand, int capture);

struct Manifest {
  SynthConfig config;
  std::vector<CaptureEntry> captures;  ///< paths relative to the manifest's directory
};

/// Writes <out>/<uu>/<hand>/<capture>.pcap for every session and
/// <out>/manifest.json.
Manifest generate(const SynthConfig& cfg, const std::filesystem::path& out_dir);

void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

/// Ground-truth user id of every frame, entry by entry in manifest order.
std::vector<int> oracle_labels(const Manifest& manifest);

}  // namespace handpass
