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

// Brute-force reference for the rate filter's verdicts. It deliberately
// shares nothing with datapath.hpp: every packet's count is recomputed by
// scanning all earlier packets of the same source in the same window.
// Quadratic; meant for verification runs, not production replay.
//
// Valid for streams with non-decreasing timestamps and a rate table large
// enough that no source is ever evicted.

#include <cstdint>
#include <span>
#include <string_view>
#include <unordered_set>
#include <variant>
#include <vector>

#include "edgeguard/packet.hpp"

namespace edgeguard::oracle {

enum class Verdict : std::uint8_t { Pass, DropRateExceeded, DropBlocklisted, DropMalformed };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::DropRateExceeded: return "drop(rate_exceeded)";
    case Verdict::DropBlocklisted: return "drop(blocklisted)";
    case Verdict::DropMalformed: return "drop(malformed)";
  }
  return "?";
}

inline std::vector<Verdict> oracle_verdicts(std::span<const RawFrame> stream,
                                            std::uint64_t threshold_pkts, std::uint64_t window_ms) {
  struct Seen {
    bool counted;
    std::uint32_t src;
    std::uint64_t window;
  };
  std::vector<Seen> seen;
  seen.reserve(stream.size());
  std::vector<Verdict> out;
  out.reserve(stream.size());
  std::unordered_set<std::uint32_t> blocked;
  const std::uint64_t window_ns = window_ms * 1'000'000ULL;

  for (const RawFrame& frame : stream) {
    const ParseResult parsed = parse_frame(frame);
    if (const auto* pkt = std::get_if<ParsedPacket>(&parsed)) {
      const std::uint32_t src = pkt->src_ip.value;
      const std::uint64_t window = frame.ts_ns / window_ns;
      if (blocked.count(src) != 0) {
        out.push_back(Verdict::DropBlocklisted);
        seen.push_back({false, src, window});
        continue;
      }
      std::uint64_t count = 1;
      for (const Seen& s : seen) {
        if (s.counted && s.src == src && s.window == window) ++count;
      }
      seen.push_back({true, src, window});
      if (count > threshold_pkts) {
        blocked.insert(src);
        out.push_back(Verdict::DropRateExceeded);
      } else {
        out.push_back(Verdict::Pass);
      }
    } else if (std::holds_alternative<NonIpv4>(parsed)) {
      out.push_back(Verdict::Pass);
      seen.push_back({false, 0, 0});
    } else {
      out.push_back(Verdict::DropMalformed);
      seen.push_back({false, 0, 0});
    }
  }
  return out;
}

} // namespace edgeguard::oracle
