#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace handpass {

inline constexpr std::size_t kSubcarriers = 256;
inline constexpr std::uint16_t kCsiMagic = 0x1111;
inline constexpr std::uint16_t kCsiPort = 5500;
inline constexpr std::size_t kCsiHeaderBytes = 18;
inline constexpr std::size_t kCsiPayloadBytes = kCsiHeaderBytes + kSubcarriers * 4;

template <typename T>
struct ComplexSample {
  T re{};
  T im{};

  friend bool operator==(const ComplexSample&, const ComplexSample&) = default;
};

using RawSample = ComplexSample<std::int16_t>;

struct CaptureTimestamp {
  std::uint32_t seconds = 0;
  std::uint32_t microseconds = 0;

  friend bool operator==(const CaptureTimestamp&, const CaptureTimestamp&) = default;
};

/// One Nexmon CSI record. `csi` is in hardware order (DC bin first); the
/// logical -128..127 order is produced by fft_shift in the dsp layer.
struct CsiFrame {
  std::uint16_t magic = kCsiMagic;
  std::int8_t rssi = 0;
  std::uint8_t frame_control = 0;
  std::array<std::uint8_t, 6> source_mac{};
  std::uint16_t sequence_number = 0;
  std::uint16_t core_spatial = 0;  ///< core in bits 0-2, spatial stream in bits 3-5
  std::uint16_t chanspec = 0;
  std::uint16_t chip_version = 0;
  std::array<RawSample, kSubcarriers> csi{};
  CaptureTimestamp capture_timestamp;

  friend bool operator==(const CsiFrame&, const CsiFrame&) = default;
};

struct CaptureFile {
  std::vector<CsiFrame> frames;
  std::string source_path;
  std::uint32_t link_type = 0;
  std::size_t skipped_packets = 0;  ///< records that are not CSI traffic at all
  std::size_t bad_payloads = 0;     ///< CSI-looking records rejected by the decoder
};

struct ReadOptions {
  std::uint16_t magic = kCsiMagic;
  /// UDP packets to this port that fail to decode count as bad payloads
  /// rather than stray traffic. Zero disables the port filter.
  std::uint16_t filter_port = kCsiPort;
  bool strict = false;
};

/// Serializes the 18-byte little-endian header (u16 magic, i8 rssi, u8 frame
/// control, 6-byte MAC, u16 sequence, u16 core/stream, u16 chanspec, u16 chip) and 256 (re, im) int16 pairs.
std::vector<std::uint8_t> encode_payload(const CsiFrame& frame);

/// Inverse of encode_payload. Throws BadCsiPayload on a length or magic
/// mismatch. The capture timestamp is left zero.
CsiFrame decode_payload(std::span<const std::uint8_t> bytes, std::uint16_t magic = kCsiMagic);

/// Parses a classic PCAP image held in memory.
CaptureFile parse_capture(std::span<const std::uint8_t> bytes, const ReadOptions& options = {});

CaptureFile read_capture(const std::filesystem::path& path, const ReadOptions& options = {});

/// Emits a little-endian PCAP (Ethernet link type) with one IPv4/UDP packet
/// per frame, destined to kCsiPort.
std::vector<std::uint8_t> serialize_capture(std::span<const CsiFrame> frames);

void write_capture(std::span<const CsiFrame> frames, const std::filesystem::path& path);

std::string to_hex(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> from_hex(std::string_view hex);

}  // namespace handpass
