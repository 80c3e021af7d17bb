#include "handpass/csi_frame.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

#include "handpass/error.hpp"

namespace handpass {
namespace {

constexpr std::uint32_t kPcapMagic = 0xA1B2C3D4u;
constexpr std::uint32_t kPcapMagicSwapped = 0xD4C3B2A1u;
constexpr std::size_t kGlobalHeaderBytes = 24;
constexpr std::size_t kRecordHeaderBytes = 16;
constexpr std::uint32_t kLinkEthernet = 1;
constexpr std::uint32_t kLinkRaw = 101;
constexpr std::uint32_t kLinkIpv4 = 228;
constexpr std::uint32_t kSnapLen = 65535;
// Guards against absurd record lengths in corrupted files.
constexpr std::uint32_t kMaxRecordBytes = 1u << 24;

class ByteWriter {
 public:
  explicit ByteWriter(std::vector<std::uint8_t>& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void le16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void le32(std::uint32_t v) {
    le16(static_cast<std::uint16_t>(v));
    le16(static_cast<std::uint16_t>(v >> 16));
  }
  void be16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v >> 8));
    u8(static_cast<std::uint8_t>(v));
  }
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }

 private:
  std::vector<std::uint8_t>& out_;
};

std::uint16_t load_le16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t load_le32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t load_be16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}

std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xFF00u) | ((v << 8) & 0xFF0000u) | (v << 24);
}

struct UdpView {
  std::uint16_t dst_port = 0;
  std::span<const std::uint8_t> payload;
};

// Locates a UDP payload inside an IPv4 packet. Returns false for anything
// that is not IPv4/UDP or whose headers do not fit in the captured bytes.
bool find_udp_in_ipv4(std::span<const std::uint8_t> ip, UdpView& out) {
  if (ip.size() < 20 || (ip[0] >> 4) != 4) return false;
  const std::size_t ihl = static_cast<std::size_t>(ip[0] & 0x0F) * 4;
  if (ihl < 20 || ip.size() < ihl + 8 || ip[9] != 17) return false;
  const auto udp = ip.subspan(ihl);
  const std::size_t udp_len = load_be16(udp.data() + 4);
  if (udp_len < 8) return false;
  const std::size_t available = udp.size() - 8;
  out.dst_port = load_be16(udp.data() + 2);
  out.payload = udp.subspan(8, std::min(udp_len - 8, available));
  return true;
}

bool find_udp(std::uint32_t link_type, std::span<const std::uint8_t> packet, UdpView& out) {
  switch (link_type) {
    case kLinkEthernet: {
      if (packet.size() < 14) return false;
      std::size_t offset = 12;
      std::uint16_t ether_type = load_be16(packet.data() + offset);
      while (ether_type == 0x8100 || ether_type == 0x88A8) {
        offset += 4;
        if (packet.size() < offset + 2) return false;
        ether_type = load_be16(packet.data() + offset);
      }
      if (ether_type != 0x0800) return false;
      return find_udp_in_ipv4(packet.subspan(offset + 2), out);
    }
    case kLinkRaw:
    case kLinkIpv4:
      return find_udp_in_ipv4(packet, out);
    default:
      return false;
  }
}

std::uint16_t ipv4_checksum(std::span<const std::uint8_t> header) {
  std::uint32_t sum = 0;
  for (std::size_t i = 0; i + 1 < header.size(); i += 2) sum += load_be16(header.data() + i);
  while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
  return static_cast<std::uint16_t>(~sum);
}

}  // namespace

std::vector<std::uint8_t> encode_payload(const CsiFrame& frame) {
  std::vector<std::uint8_t> out;
  out.reserve(kCsiPayloadBytes);
  ByteWriter w(out);
  w.le16(frame.magic);
  w.u8(static_cast<std::uint8_t>(frame.rssi));
  w.u8(frame.frame_control);
  w.bytes(frame.source_mac);
  w.le16(frame.sequence_number);
  w.le16(frame.core_spatial);
  w.le16(frame.chanspec);
  w.le16(frame.chip_version);
  for (const auto& s : frame.csi) {
    w.le16(static_cast<std::uint16_t>(s.re));
    w.le16(static_cast<std::uint16_t>(s.im));
  }
  return out;
}

CsiFrame decode_payload(std::span<const std::uint8_t> bytes, std::uint16_t magic) {
  if (bytes.size() != kCsiPayloadBytes) {
    throw BadCsiPayload("CSI payload is " + std::to_string(bytes.size()) + " bytes, expected " +
                        std::to_string(kCsiPayloadBytes));
  }
  const std::uint8_t* p = bytes.data();
  CsiFrame frame;
  frame.magic = load_le16(p);
  if (frame.magic != magic) {
    std::ostringstream msg;
    msg << "CSI magic 0x" << std::hex << frame.magic << " does not match 0x" << magic;
    throw BadCsiPayload(msg.str());
  }
  frame.rssi = static_cast<std::int8_t>(p[2]);
  frame.frame_control = p[3];
  std::copy(p + 4, p + 10, frame.source_mac.begin());
  frame.sequence_number = load_le16(p + 10);
  frame.core_spatial = load_le16(p + 12);
  frame.chanspec = load_le16(p + 14);
  frame.chip_version = load_le16(p + 16);
  const std::uint8_t* csi = p + kCsiHeaderBytes;
  for (std::size_t k = 0; k < kSubcarriers; ++k) {
    frame.csi[k].re = static_cast<std::int16_t>(load_le16(csi + 4 * k));
    frame.csi[k].im = static_cast<std::int16_t>(load_le16(csi + 4 * k + 2));
  }
  return frame;
}

CaptureFile parse_capture(std::span<const std::uint8_t> bytes, const ReadOptions& options) {
  if (bytes.size() < kGlobalHeaderBytes) {
    throw MalformedPcapHeader("capture is " + std::to_string(bytes.size()) +
                              " bytes, shorter than a PCAP global header");
  }
  const std::uint32_t raw_magic = load_le32(bytes.data());
  bool swapped = false;
  if (raw_magic == kPcapMagic) {
    swapped = false;
  } else if (raw_magic == kPcapMagicSwapped) {
    swapped = true;
  } else {
    std::ostringstream msg;
    msg << "unrecognized PCAP magic 0x" << std::hex << raw_magic;
    throw MalformedPcapHeader(msg.str());
  }
  auto u32 = [swapped](const std::uint8_t* p) {
    const std::uint32_t v = load_le32(p);
    return swapped ? byteswap32(v) : v;
  };

  CaptureFile capture;
  capture.link_type = u32(bytes.data() + 20);

  std::size_t offset = kGlobalHeaderBytes;
  std::size_t record_index = 0;
  while (offset < bytes.size()) {
    if (bytes.size() - offset < kRecordHeaderBytes) {
      throw TruncatedRecord("record " + std::to_string(record_index) + " header is truncated");
    }
    const std::uint8_t* rec = bytes.data() + offset;
    const CaptureTimestamp ts{u32(rec), u32(rec + 4)};
    const std::uint32_t caplen = u32(rec + 8);
    offset += kRecordHeaderBytes;
    if (caplen > kMaxRecordBytes || caplen > bytes.size() - offset) {
      throw TruncatedRecord("record " + std::to_string(record_index) + " declares " +
                            std::to_string(caplen) + " bytes but only " +
                            std::to_string(bytes.size() - offset) + " remain");
    }
    const auto packet = bytes.subspan(offset, caplen);
    offset += caplen;
    ++record_index;

    UdpView udp;
    if (!find_udp(capture.link_type, packet, udp)) {
      ++capture.skipped_packets;
      continue;
    }
    const bool has_magic = udp.payload.size() >= 2 && load_le16(udp.payload.data()) == options.magic;
    const bool on_port = options.filter_port != 0 && udp.dst_port == options.filter_port;
    if (!has_magic && !on_port) {
      ++capture.skipped_packets;
      continue;
    }
    try {
      CsiFrame frame = decode_payload(udp.payload, options.magic);
      frame.capture_timestamp = ts;
      capture.frames.push_back(frame);
    } catch (const BadCsiPayload&) {
      if (options.strict) throw;
      ++capture.bad_payloads;
    }
  }
  return capture;
}

CaptureFile read_capture(const std::filesystem::path& path, const ReadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  if (in.bad()) throw IoFailure("read error on " + path.string());
  CaptureFile capture = parse_capture(bytes, options);
  capture.source_path = path.string();
  return capture;
}

std::vector<std::uint8_t> serialize_capture(std::span<const CsiFrame> frames) {
  constexpr std::size_t kIpBytes = 20;
  constexpr std::size_t kUdpBytes = 8;
  constexpr std::size_t kPacketBytes = 14 + kIpBytes + kUdpBytes + kCsiPayloadBytes;

  std::vector<std::uint8_t> out;
  out.reserve(kGlobalHeaderBytes + frames.size() * (kRecordHeaderBytes + kPacketBytes));
  ByteWriter w(out);
  w.le32(kPcapMagic);
  w.le16(2);
  w.le16(4);
  w.le32(0);  // thiszone
  w.le32(0);  // sigfigs
  w.le32(kSnapLen);
  w.le32(kLinkEthernet);

  for (const CsiFrame& frame : frames) {
    w.le32(frame.capture_timestamp.seconds);
    w.le32(frame.capture_timestamp.microseconds);
    w.le32(static_cast<std::uint32_t>(kPacketBytes));
    w.le32(static_cast<std::uint32_t>(kPacketBytes));

    // Ethernet: broadcast destination, frame's source MAC, IPv4.
    for (int i = 0; i < 6; ++i) w.u8(0xFF);
    w.bytes(frame.source_mac);
    w.be16(0x0800);

    std::array<std::uint8_t, kIpBytes> ip{};
    const auto ip_total = static_cast<std::uint16_t>(kIpBytes + kUdpBytes + kCsiPayloadBytes);
    ip[0] = 0x45;
    ip[2] = static_cast<std::uint8_t>(ip_total >> 8);
    ip[3] = static_cast<std::uint8_t>(ip_total);
    ip[8] = 1;   // ttl
    ip[9] = 17;  // udp
    const std::array<std::uint8_t, 4> src{10, 10, 10, 10};
    const std::array<std::uint8_t, 4> dst{255, 255, 255, 255};
    std::copy(src.begin(), src.end(), ip.begin() + 12);
    std::copy(dst.begin(), dst.end(), ip.begin() + 16);
    const std::uint16_t checksum = ipv4_checksum(ip);
    ip[10] = static_cast<std::uint8_t>(checksum >> 8);
    ip[11] = static_cast<std::uint8_t>(checksum);
    w.bytes(ip);

    w.be16(kCsiPort);
    w.be16(kCsiPort);
    w.be16(static_cast<std::uint16_t>(kUdpBytes + kCsiPayloadBytes));
    w.be16(0);
    w.bytes(encode_payload(frame));
  }
  return out;
}

void write_capture(std::span<const CsiFrame> frames, const std::filesystem::path& path) {
  const auto bytes = serialize_capture(frames);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoFailure("cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoFailure("write error on " + path.string());
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (const std::uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0x0F]);
  }
  return out;
}

std::vector<std::uint8_t> from_hex(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (hex.size() % 2 != 0) throw BadCsiPayload("hex payload has odd length");
  std::vector<std::uint8_t> out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int hi = nibble(hex[2 * i]);
    const int lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw BadCsiPayload("invalid hex digit in payload");
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

}  // namespace handpass
