/*
 * Copyright (c) The edgeguard authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Ethernet II / IPv4 / UDP / TCP frame model: parsing raw captured bytes into
// the fields the rate filter keys on, and building well-formed UDP frames for
// the scenario generator and test fixtures.

#include <arpa/inet.h>

#include <algorithm>

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "edgeguard/error.hpp"

namespace edgeguard {

class SizeError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// IPv4 address as a host-order integer. Comparison follows the numeric order
/// of the dotted quad.
struct Ipv4Addr {
  std::uint32_t value{0};

  constexpr Ipv4Addr() = default;
  constexpr explicit Ipv4Addr(std::uint32_t host_order) : value(host_order) {}
  constexpr Ipv4Addr(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d)
      : value((std::uint32_t{a} << 24) | (std::uint32_t{b} << 16) |
              (std::uint32_t{c} << 8) | std::uint32_t{d}) {}

  /// Strict dotted-quad parse; throws InputError on anything else.
  static Ipv4Addr parse(std::string_view text) {
    std::string buf(text);
    in_addr addr{};
    if (buf.empty() || inet_pton(AF_INET, buf.c_str(), &addr) != 1) {
      throw InputError("invalid IPv4 address '" + buf + "'");
    }
    return Ipv4Addr(ntohl(addr.s_addr));
  }

  static std::optional<Ipv4Addr> try_parse(std::string_view text) {
    try {
      return parse(text);
    } catch (const InputError&) {
      return std::nullopt;
    }
  }

  std::string to_string() const {
    return std::to_string(value >> 24) + '.' + std::to_string((value >> 16) & 0xff) + '.' +
           std::to_string((value >> 8) & 0xff) + '.' + std::to_string(value & 0xff);
  }

  friend constexpr auto operator<=>(Ipv4Addr, Ipv4Addr) = default;
};

struct RawFrame {
  std::vector<std::uint8_t> bytes;
  std::uint64_t ts_ns{0};

  friend bool operator==(const RawFrame&, const RawFrame&) = default;
};

struct PortPair {
  std::uint16_t src{0};
  std::uint16_t dst{0};

  friend constexpr bool operator==(PortPair, PortPair) = default;
};

struct ParsedPacket {
  Ipv4Addr src_ip;
  Ipv4Addr dst_ip;
  std::uint8_t ip_proto{0};
  // Present only for UDP/TCP first fragments whose first four transport
  // octets lie inside the IPv4 total length.
  std::optional<PortPair> ports;
  std::size_t frame_len{0};
  std::uint64_t ts_ns{0};
};

struct NonIpv4 {
  std::uint16_t ethertype{0};
};

enum class MalformedReason {
  TruncatedEthernet,
  TruncatedIpv4,
  BadVersion,
  BadIhl,
  BadTotalLength,
};

struct Malformed {
  MalformedReason reason;
};

using ParseResult = std::variant<ParsedPacket, NonIpv4, Malformed>;

inline constexpr std::size_t kEthernetHeaderLen = 14;
inline constexpr std::size_t kIpv4MinHeaderLen = 20;
inline constexpr std::size_t kUdpHeaderLen = 8;
inline constexpr std::size_t kMaxUdpPayload = 1500 - kEthernetHeaderLen - kIpv4MinHeaderLen - kUdpHeaderLen;
inline constexpr std::uint16_t kEthertypeIpv4 = 0x0800;
inline constexpr std::uint8_t kProtoTcp = 6;
inline constexpr std::uint8_t kProtoUdp = 17;

inline constexpr std::array<std::uint8_t, 6> kGeneratorDstMac{0x02, 0, 0, 0, 0, 0x01};
inline constexpr std::array<std::uint8_t, 6> kGeneratorSrcMac{0x02, 0, 0, 0, 0, 0x02};

namespace detail {

inline std::uint16_t load_be16(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint16_t>((b[off] << 8) | b[off + 1]);
}

inline std::uint32_t load_be32(std::span<const std::uint8_t> b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

inline void store_be16(std::span<std::uint8_t> b, std::size_t off, std::uint16_t v) {
  b[off] = static_cast<std::uint8_t>(v >> 8);
  b[off + 1] = static_cast<std::uint8_t>(v & 0xff);
}

inline void store_be32(std::span<std::uint8_t> b, std::size_t off, std::uint32_t v) {
  store_be16(b, off, static_cast<std::uint16_t>(v >> 16));
  store_be16(b, off + 2, static_cast<std::uint16_t>(v & 0xffff));
}

} // namespace detail

inline std::string_view to_string(MalformedReason r) {
  switch (r) {
    case MalformedReason::TruncatedEthernet: return "truncated_ethernet";
    case MalformedReason::TruncatedIpv4: return "truncated_ipv4";
    case MalformedReason::BadVersion: return "bad_version";
    case MalformedReason::BadIhl: return "bad_ihl";
    case MalformedReason::BadTotalLength: return "bad_total_length";
  }
  return "unknown";
}

/// RFC 1071 Internet checksum over an even-length byte sequence. The caller
/// zeroes the checksum field first; re-summing a header that already holds a
/// valid checksum yields 0.
inline std::uint16_t compute_ipv4_checksum(std::span<const std::uint8_t> header) {
  if (header.size() % 2 != 0) {
    throw ContractError("checksum input length must be even, got " +
                        std::to_string(header.size()));
  }
  std::uint32_t sum = 0;
  for (std::size_t i = 0; i < header.size(); i += 2) {
    sum += detail::load_be16(header, i);
    sum = (sum & 0xffff) + (sum >> 16);
  }
  return static_cast<std::uint16_t>(~sum & 0xffff);
}

/// Classifies a frame. Never throws: any byte sequence maps to exactly one of
/// Parsed, NonIpv4 or Malformed.
inline ParseResult parse_frame(std::span<const std::uint8_t> bytes, std::uint64_t ts_ns) {
  if (bytes.size() < kEthernetHeaderLen) {
    return Malformed{MalformedReason::TruncatedEthernet};
  }
  const std::uint16_t ethertype = detail::load_be16(bytes, 12);
  if (ethertype != kEthertypeIpv4) {
    return NonIpv4{ethertype};
  }

  const auto ip = bytes.subspan(kEthernetHeaderLen);
  if (ip.size() < kIpv4MinHeaderLen) {
    return Malformed{MalformedReason::TruncatedIpv4};
  }
  if ((ip[0] >> 4) != 4) {
    return Malformed{MalformedReason::BadVersion};
  }
  const std::size_t ihl_bytes = std::size_t{ip[0] & 0x0fu} * 4;
  if (ihl_bytes < kIpv4MinHeaderLen) {
    return Malformed{MalformedReason::BadIhl};
  }
  if (ip.size() < ihl_bytes) {
    return Malformed{MalformedReason::TruncatedIpv4};
  }
  const std::size_t total_len = detail::load_be16(ip, 2);
  if (total_len < ihl_bytes || total_len > ip.size()) {
    return Malformed{MalformedReason::BadTotalLength};
  }

  ParsedPacket pkt;
  pkt.ip_proto = ip[9];
  pkt.src_ip = Ipv4Addr(detail::load_be32(ip, 12));
  pkt.dst_ip = Ipv4Addr(detail::load_be32(ip, 16));
  pkt.frame_len = bytes.size();
  pkt.ts_ns = ts_ns;

  const bool first_fragment = (detail::load_be16(ip, 6) & 0x1fff) == 0;
  const bool has_ports = pkt.ip_proto == kProtoUdp || pkt.ip_proto == kProtoTcp;
  if (first_fragment && has_ports && total_len - ihl_bytes >= 4) {
    pkt.ports = PortPair{detail::load_be16(ip, ihl_bytes), detail::load_be16(ip, ihl_bytes + 2)};
  }
  return pkt;
}

inline ParseResult parse_frame(const RawFrame& frame) {
  return parse_frame(frame.bytes, frame.ts_ns);
}

/// Ethernet II + IPv4 (DF, TTL 64, no options) + UDP with a zero-filled
/// payload. UDP checksum is left at 0, which IPv4 permits.
inline RawFrame build_udp_frame(Ipv4Addr src_ip, Ipv4Addr dst_ip, std::uint16_t src_port,
                                std::uint16_t dst_port, std::size_t payload_len,
                                std::uint64_t ts_ns) {
  if (payload_len > kMaxUdpPayload) {
    throw SizeError("UDP payload of " + std::to_string(payload_len) +
                    " octets does not fit a 1500-octet frame (max " +
                    std::to_string(kMaxUdpPayload) + ")");
  }
  RawFrame frame;
  frame.ts_ns = ts_ns;
  frame.bytes.assign(kEthernetHeaderLen + kIpv4MinHeaderLen + kUdpHeaderLen + payload_len, 0);
  std::span<std::uint8_t> b(frame.bytes);

  std::copy(kGeneratorDstMac.begin(), kGeneratorDstMac.end(), b.begin());
  std::copy(kGeneratorSrcMac.begin(), kGeneratorSrcMac.end(), b.begin() + 6);
  detail::store_be16(b, 12, kEthertypeIpv4);

  auto ip = b.subspan(kEthernetHeaderLen, kIpv4MinHeaderLen);
  ip[0] = 0x45;
  detail::store_be16(ip, 2,
                     static_cast<std::uint16_t>(kIpv4MinHeaderLen + kUdpHeaderLen + payload_len));
  detail::store_be16(ip, 6, 0x4000);
  ip[8] = 64;
  ip[9] = kProtoUdp;
  detail::store_be32(ip, 12, src_ip.value);
  detail::store_be32(ip, 16, dst_ip.value);
  detail::store_be16(ip, 10, compute_ipv4_checksum(ip));

  auto udp = b.subspan(kEthernetHeaderLen + kIpv4MinHeaderLen);
  detail::store_be16(udp, 0, src_port);
  detail::store_be16(udp, 2, dst_port);
  detail::store_be16(udp, 4, static_cast<std::uint16_t>(kUdpHeaderLen + payload_len));
  return frame;
}

} // namespace edgeguard

template <>
struct std::hash<edgeguard::Ipv4Addr> {
  std::size_t operator()(edgeguard::Ipv4Addr a) const noexcept {
    return std::hash<std::uint32_t>{}(a.value);
  }
};
