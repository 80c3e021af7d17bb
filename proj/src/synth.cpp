#include "handpass/synth.hpp"

#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "handpass/dsp.hpp"
#include "handpass/error.hpp"
#include "handpass/rng.hpp"

namespace handpass {
namespace {

constexpr double kTwoPi = 2 * std::numbers::pi;
constexpr std::uint64_t kEnvironmentStream = 0xE7;
constexpr std::uint32_t kEpoch = 1700000000;

std::uint64_t user_stream(int user_id, Hand hand) {
  return 0x1000 + static_cast<std::uint64_t>(user_id) * 2 + (hand == Hand::Left ? 1 : 0);
}

std::uint64_t capture_stream(int user_id, Hand hand, int capture) {
  return 0x100000 + user_stream(user_id, hand) * 16 + static_cast<std::uint64_t>(capture);
}

struct Bump {
  double center;
  double width;
  double height;
};

// Shared environment channel: two slow ripples over unit level.
Eigen::ArrayXd environment_baseline(const SynthConfig& cfg) {
  Rng rng(mix_seed(cfg.seed, kEnvironmentStream));
  const double p1 = rng.uniform(80, 120);
  const double p2 = rng.uniform(30, 50);
  const double s1 = rng.uniform(0, kTwoPi);
  const double s2 = rng.uniform(0, kTwoPi);
  Eigen::ArrayXd base(static_cast<Eigen::Index>(kSubcarriers));
  for (Eigen::Index p = 0; p < base.size(); ++p) {
    const double k = logical_subcarrier(p);
    base(p) = 1.0 + 0.25 * std::cos(kTwoPi * k / p1 + s1) + 0.15 * std::cos(kTwoPi * k / p2 + s2);
  }
  return base;
}

std::vector<Bump> user_bumps(const SynthConfig& cfg, Rng& rng) {
  std::vector<Bump> bumps;
  for (int b = 0; b < cfg.bump_count; ++b) {
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    bumps.push_back({rng.uniform(-120, 120), rng.uniform(4, 16), sign * rng.uniform(0.15, 0.5)});
  }
  return bumps;
}

Eigen::ArrayXd bump_profile(const std::vector<Bump>& bumps, const Eigen::ArrayXd& base) {
  const SubcarrierMask mask = SubcarrierMask::vht80();
  Eigen::ArrayXd amp(base.size());
  for (Eigen::Index p = 0; p < base.size(); ++p) {
    const double k = logical_subcarrier(p);
    double factor = 1.0;
    for (const Bump& b : bumps) factor += b.height * std::exp(-(k - b.center) * (k - b.center) / (2 * b.width * b.width));
    amp(p) = std::max(0.05, base(p) * factor);
  }
  for (const int k : mask.null_indices) amp(subcarrier_position(k)) = 0.01;
  return amp;
}

struct SignatureParts {
  std::vector<Bump> bumps;
  Eigen::ArrayXd base;
  Eigen::ArrayXd phase;
};

SignatureParts signature_parts(const SynthConfig& cfg, int user_id, Hand hand) {
  Rng rng(mix_seed(cfg.seed, user_stream(user_id, hand)));
  SignatureParts parts;
  parts.base = environment_baseline(cfg);
  parts.bumps = user_bumps(cfg, rng);
  parts.phase.resize(static_cast<Eigen::Index>(kSubcarriers));
  parts.phase.setZero();
  for (int j = 0; j < 2; ++j) {
    const double amplitude = rng.uniform(0.1, 0.4);
    const double period = rng.uniform(40, 160);
    const double shift = rng.uniform(0, kTwoPi);
    for (Eigen::Index p = 0; p < parts.phase.size(); ++p) {
      parts.phase(p) += amplitude * std::sin(kTwoPi * logical_subcarrier(p) / period + shift);
    }
  }
  return parts;
}

std::int16_t quantize(double v) {
  const double r = std::round(v);
  return static_cast<std::int16_t>(std::clamp(r, static_cast<double>(std::numeric_limits<std::int16_t>::min()),
                                              static_cast<double>(std::numeric_limits<std::int16_t>::max())));
}

nlohmann::json config_to_json(const SynthConfig& c) {
  return {{"users", c.users},
          {"captures_per_user", c.captures_per_user},
          {"frames_per_capture", c.frames_per_capture},
          {"packets_per_second", c.packets_per_second},
          {"noise_sigma", c.noise_sigma},
          {"bump_count", c.bump_count},
          {"ramp_range", c.ramp_range},
          {"offset_range", c.offset_range},
          {"gain_jitter", c.gain_jitter},
          {"placement_jitter", c.placement_jitter},
          {"amplitude_scale", c.amplitude_scale},
          {"interference_rate", c.interference_rate},
          {"interference_gain", c.interference_gain},
          {"both_hands", c.both_hands},
          {"seed", c.seed}};
}

SynthConfig config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  c.users = j.value("users", c.users);
  c.captures_per_user = j.value("captures_per_user", c.captures_per_user);
  c.frames_per_capture = j.value("frames_per_capture", c.frames_per_capture);
  c.packets_per_second = j.value("packets_per_second", c.packets_per_second);
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  c.bump_count = j.value("bump_count", c.bump_count);
  c.ramp_range = j.value("ramp_range", c.ramp_range);
  c.offset_range = j.value("offset_range", c.offset_range);
  c.gain_jitter = j.value("gain_jitter", c.gain_jitter);
  c.placement_jitter = j.value("placement_jitter", c.placement_jitter);
  c.amplitude_scale = j.value("amplitude_scale", c.amplitude_scale);
  c.interference_rate = j.value("interference_rate", c.interference_rate);
  c.interference_gain = j.value("interference_gain", c.interference_gain);
  c.both_hands = j.value("both_hands", c.both_hands);
  c.seed = j.value("seed", c.seed);
  return c;
}

std::string capture_relative_path(const CaptureMeta& meta) {
  char user[16];
  std::snprintf(user, sizeof(user), "%02d", meta.user_id);
  return std::string(user) + "/" + (meta.hand == Hand::Right ? "right" : "left") + "/" +
         std::to_string(meta.capture_number) + ".pcap";
}

}  // namespace

void SynthConfig::validate() const {
  if (users < 1 || captures_per_user < 1 || frames_per_capture < 1 || bump_count < 0) {
    throw std::invalid_argument("synthetic generator counts must be >= 1");
  }
  if (users > 20 || captures_per_user > 5) {
    throw std::invalid_argument("capture metadata allows at most 20 users and 5 captures");
  }
  if (!(packets_per_second > 0)) throw std::invalid_argument("packets_per_second must be positive");
  if (!(noise_sigma >= 0) || !(ramp_range >= 0) || !(offset_range >= 0) || !(gain_jitter >= 0) ||
      gain_jitter >= 1 || !(placement_jitter >= 0) || !(amplitude_scale > 0) || !(interference_rate >= 0) ||
      interference_rate > 1 || !(interference_gain >= 0.5)) {
    throw std::invalid_argument(
        "synthetic generator ranges out of bounds (gain_jitter < 1, interference_rate <= 1, interference_gain >= 0.5)");
  }
}

UserSignature user_signature(const SynthConfig& cfg, int user_id, Hand hand) {
  const SignatureParts parts = signature_parts(cfg, user_id, hand);
  return {bump_profile(parts.bumps, parts.base), parts.phase};
}

CaptureMeta synth_meta(const SynthConfig& cfg, int user_id, Hand hand, int capture) {
  const int men = (cfg.users + 1) / 2;
  return {capture, user_id <= men ? Gender::M : Gender::F, hand, user_id};
}

std::vector<CsiFrame> generate_capture_frames(const SynthConfig& cfg, int user_id, Hand hand, int capture) {
  cfg.validate();
  SignatureParts parts = signature_parts(cfg, user_id, hand);
  Rng rng(mix_seed(cfg.seed, capture_stream(user_id, hand, capture)));
  for (Bump& b : parts.bumps) b.height *= 1.0 + cfg.placement_jitter * rng.normal();
  const Eigen::ArrayXd amplitude = bump_profile(parts.bumps, parts.base) * cfg.amplitude_scale;
  const double noise = cfg.noise_sigma * cfg.amplitude_scale / std::numbers::sqrt2;

  std::vector<CsiFrame> frames(static_cast<std::size_t>(cfg.frames_per_capture));
  Eigen::VectorXcd logical(static_cast<Eigen::Index>(kSubcarriers));
  const double base_time = kEpoch + 3600.0 * user_id + 300.0 * capture + (hand == Hand::Left ? 60.0 : 0.0);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const double slope = rng.uniform(-cfg.ramp_range, cfg.ramp_range);
    const double offset = rng.uniform(-cfg.offset_range, cfg.offset_range);
    const double gain = rng.uniform(1 - cfg.gain_jitter, 1 + cfg.gain_jitter);
    double burst_lo = 1.0;
    double burst_hi = 0.0;
    double burst_gain = 1.0;
    if (rng.uniform() < cfg.interference_rate) {
      const double center = rng.uniform(kLowestSubcarrier, kHighestSubcarrier);
      const double half_width = rng.uniform(4, 20);
      burst_lo = center - half_width;
      burst_hi = center + half_width;
      burst_gain = rng.uniform(1.5, 1 + cfg.interference_gain);
    }
    for (Eigen::Index p = 0; p < logical.size(); ++p) {
      const double k = logical_subcarrier(p);
      const double angle = parts.phase(p) + slope * k + offset;
      const double level = k >= burst_lo && k <= burst_hi ? burst_gain : 1.0;
      const std::complex<double> clean = std::polar(amplitude(p) * gain * level, angle);
      const double nr = rng.normal();
      const double ni = rng.normal();
      logical(p) = clean + std::complex<double>(noise * nr, noise * ni);
    }
    const Eigen::VectorXcd hardware = fft_shift(logical);

    CsiFrame& f = frames[t];
    f.rssi = static_cast<std::int8_t>(std::lround(-55.0 + 3.0 * rng.normal()));
    f.frame_control = 0x08;
    f.source_mac = {0x02, 0x00, 0x5E, 0x00, static_cast<std::uint8_t>(hand == Hand::Left),
                    static_cast<std::uint8_t>(user_id)};
    f.sequence_number = static_cast<std::uint16_t>(t & 0xFFFF);
    f.core_spatial = 0;
    f.chanspec = 0xE02A;
    f.chip_version = 0x4345;
    for (std::size_t k = 0; k < kSubcarriers; ++k) {
      const auto z = hardware(static_cast<Eigen::Index>(k));
      f.csi[k] = {quantize(z.real()), quantize(z.imag())};
    }
    const double ts = base_time + static_cast<double>(t) / cfg.packets_per_second;
    f.capture_timestamp.seconds = static_cast<std::uint32_t>(ts);
    f.capture_timestamp.microseconds =
        static_cast<std::uint32_t>(std::lround((ts - std::floor(ts)) * 1e6)) % 1000000u;
  }
  return frames;
}

Manifest generate(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoFailure("cannot create " + out_dir.string() + ": " + ec.message());

  Manifest manifest;
  manifest.config = cfg;
  std::vector<Hand> hands{Hand::Right};
  if (cfg.both_hands) hands.push_back(Hand::Left);
  for (int user = 1; user <= cfg.users; ++user) {
    for (const Hand hand : hands) {
      for (int capture = 1; capture <= cfg.captures_per_user; ++capture) {
        CaptureEntry entry;
        entry.meta = synth_meta(cfg, user, hand, capture);
        entry.path = capture_relative_path(entry.meta);
        const fs::path full = out_dir / entry.path;
        fs::create_directories(full.parent_path(), ec);
        if (ec) throw IoFailure("cannot create " + full.parent_path().string() + ": " + ec.message());
        const auto frames = generate_capture_frames(cfg, user, hand, capture);
        write_capture(frames, full);
        entry.frames = frames.size();
        manifest.captures.push_back(std::move(entry));
      }
    }
  }
  write_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  nlohmann::json captures = nlohmann::json::array();
  for (const CaptureEntry& e : manifest.captures) {
    captures.push_back({{"path", e.path.generic_string()},
                        {"user_id", e.meta.user_id},
                        {"gender", std::string(to_string(e.meta.gender))},
                        {"hand", std::string(to_string(e.meta.hand))},
                        {"capture", e.meta.capture_number},
                        {"frames", e.frames}});
  }
  const nlohmann::json doc = {{"schema", "handpass.manifest"},
                              {"version", 1},
                              {"generator", config_to_json(manifest.config)},
                              {"captures", captures}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoFailure("cannot create " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoFailure("write error on " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open " + path.string());
  Manifest manifest;
  try {
    const auto doc = nlohmann::json::parse(in);
    manifest.config = config_from_json(doc.at("generator"));
    for (const auto& c : doc.at("captures")) {
      CaptureEntry e;
      e.path = c.at("path").get<std::string>();
      e.meta.user_id = c.at("user_id").get<int>();
      e.meta.capture_number = c.at("capture").get<int>();
      const auto gender = parse_gender(c.at("gender").get<std::string>());
      const auto hand = parse_hand(c.at("hand").get<std::string>());
      if (!gender || !hand) throw InvalidMeta("manifest entry has bad gender/hand");
      e.meta.gender = *gender;
      e.meta.hand = *hand;
      e.frames = c.at("frames").get<std::size_t>();
      manifest.captures.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw InvalidMeta("malformed manifest " + path.string() + ": " + ex.what());
  }
  return manifest;
}

std::vector<int> oracle_labels(const Manifest& manifest) {
  std::vector<int> labels;
  for (const CaptureEntry& e : manifest.captures) labels.insert(labels.end(), e.frames, e.meta.user_id);
  return labels;
}

}  // namespace handpass
