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

// Classic libpcap capture files (not pcapng). Reads microsecond and
// nanosecond variants in either byte order. Writes nanosecond little-endian
// Ethernet captures.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "edgeguard/error.hpp"
#include "edgeguard/packet.hpp"

namespace edgeguard {

inline constexpr std::uint32_t kPcapMagicMicros = 0xa1b2c3d4;
inline constexpr std::uint32_t kPcapMagicNanos = 0xa1b23c4d;
inline constexpr std::uint32_t kLinkTypeEthernet = 1;
inline constexpr std::size_t kPcapGlobalHeaderLen = 24;
inline constexpr std::size_t kPcapRecordHeaderLen = 16;
inline constexpr std::uint32_t kPcapSnaplen = 262144;

namespace detail {

inline std::uint32_t load_u32(const std::uint8_t* p, bool big_endian) {
  if (big_endian) {
    return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
           std::uint32_t{p[3]};
  }
  return (std::uint32_t{p[3]} << 24) | (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[1]} << 8) |
         std::uint32_t{p[0]};
}

inline void append_le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void append_le16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

} // namespace detail

/// Decodes an in-memory capture. Throws FormatError (bad magic, truncated
/// header or record) or UnsupportedError (link type other than Ethernet).
inline std::vector<RawFrame> parse_pcap(std::span<const std::uint8_t> data) {
  if (data.size() < kPcapGlobalHeaderLen) {
    throw FormatError("pcap global header truncated (" + std::to_string(data.size()) + " bytes)");
  }
  bool big_endian = false;
  bool nanos = false;
  const std::uint32_t magic_le = detail::load_u32(data.data(), false);
  const std::uint32_t magic_be = detail::load_u32(data.data(), true);
  if (magic_le == kPcapMagicMicros || magic_le == kPcapMagicNanos) {
    nanos = magic_le == kPcapMagicNanos;
  } else if (magic_be == kPcapMagicMicros || magic_be == kPcapMagicNanos) {
    big_endian = true;
    nanos = magic_be == kPcapMagicNanos;
  } else {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08x", magic_le);
    throw FormatError(std::string("unrecognised pcap magic ") + buf);
  }
  const std::uint32_t linktype = detail::load_u32(data.data() + 20, big_endian);
  if (linktype != kLinkTypeEthernet) {
    throw UnsupportedError("unsupported pcap link type " + std::to_string(linktype) +
                           " (only EN10MB is supported)");
  }

  std::vector<RawFrame> frames;
  std::size_t off = kPcapGlobalHeaderLen;
  std::size_t index = 0;
  while (off < data.size()) {
    if (data.size() - off < kPcapRecordHeaderLen) {
      throw FormatError("pcap record " + std::to_string(index) + " header truncated");
    }
    const std::uint8_t* rec = data.data() + off;
    const std::uint64_t sec = detail::load_u32(rec, big_endian);
    const std::uint64_t frac = detail::load_u32(rec + 4, big_endian);
    const std::uint32_t incl_len = detail::load_u32(rec + 8, big_endian);
    off += kPcapRecordHeaderLen;
    if (data.size() - off < incl_len) {
      throw FormatError("pcap record " + std::to_string(index) + " data truncated (need " +
                        std::to_string(incl_len) + " bytes, have " +
                        std::to_string(data.size() - off) + ")");
    }
    RawFrame frame;
    frame.ts_ns = sec * 1'000'000'000ULL + (nanos ? frac : frac * 1000);
    frame.bytes.assign(data.begin() + static_cast<std::ptrdiff_t>(off),
                       data.begin() + static_cast<std::ptrdiff_t>(off + incl_len));
    frames.push_back(std::move(frame));
    off += incl_len;
    ++index;
  }
  return frames;
}

inline std::vector<RawFrame> read_pcap(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open pcap", path.string());
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("cannot read pcap", path.string());
  return parse_pcap(data);
}

inline std::vector<std::uint8_t> encode_pcap(std::span<const RawFrame> frames) {
  std::vector<std::uint8_t> out;
  out.reserve(kPcapGlobalHeaderLen);
  detail::append_le32(out, kPcapMagicNanos);
  detail::append_le16(out, 2);
  detail::append_le16(out, 4);
  detail::append_le32(out, 0);  // thiszone
  detail::append_le32(out, 0);  // sigfigs
  detail::append_le32(out, kPcapSnaplen);
  detail::append_le32(out, kLinkTypeEthernet);
  for (const auto& f : frames) {
    const auto len = static_cast<std::uint32_t>(f.bytes.size());
    detail::append_le32(out, static_cast<std::uint32_t>(f.ts_ns / 1'000'000'000ULL));
    detail::append_le32(out, static_cast<std::uint32_t>(f.ts_ns % 1'000'000'000ULL));
    detail::append_le32(out, len);
    detail::append_le32(out, len);
    out.insert(out.end(), f.bytes.begin(), f.bytes.end());
  }
  return out;
}

inline void write_pcap(const std::filesystem::path& path, std::span<const RawFrame> frames) {
  const auto data = encode_pcap(frames);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create pcap", path.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  out.flush();
  if (!out) throw IoError("cannot write pcap", path.string());
}

} // namespace edgeguard
