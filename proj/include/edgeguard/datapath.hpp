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

// Per-source tumbling-window rate filter. A source that sends more than
// threshold_pkts frames inside one epoch-aligned window is blocklisted, and
// the crossing frame yields one AlertEvent for the controller.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "edgeguard/error.hpp"
#include "edgeguard/packet.hpp"

namespace edgeguard {

struct FilterConfig {
  // Threshold value that can never be crossed; used for the unfiltered baseline.
  static constexpr std::uint64_t kUnlimited = std::numeric_limits<std::uint64_t>::max();

  std::uint64_t threshold_pkts{800};
  std::uint64_t window_ms{1000};
  std::size_t table_capacity{65536};

  bool unlimited() const noexcept { return threshold_pkts == kUnlimited; }

  void validate() const {
    if (threshold_pkts < 1) throw ConfigError("threshold_pkts must be >= 1");
    if (window_ms < 1) throw ConfigError("window_ms must be >= 1");
    if (table_capacity < 1) throw ConfigError("table_capacity must be >= 1");
  }

  friend bool operator==(const FilterConfig&, const FilterConfig&) = default;
};

struct RateEntry {
  std::uint64_t window_id{0};
  std::uint64_t count{0};
};

enum class DropReason { RateExceeded, Blocklisted, Malformed };

class Verdict {
 public:
  static constexpr Verdict pass() noexcept { return Verdict{}; }
  static constexpr Verdict drop(DropReason reason) noexcept { return Verdict{reason}; }

  constexpr bool is_pass() const noexcept { return !reason_.has_value(); }
  constexpr bool is_drop() const noexcept { return reason_.has_value(); }
  constexpr std::optional<DropReason> drop_reason() const noexcept { return reason_; }

  friend constexpr bool operator==(Verdict, Verdict) = default;

 private:
  constexpr Verdict() = default;
  constexpr explicit Verdict(DropReason r) : reason_(r) {}

  std::optional<DropReason> reason_;
};

inline std::string to_string(Verdict v) {
  if (v.is_pass()) return "pass";
  switch (*v.drop_reason()) {
    case DropReason::RateExceeded: return "drop(rate_exceeded)";
    case DropReason::Blocklisted: return "drop(blocklisted)";
    case DropReason::Malformed: return "drop(malformed)";
  }
  return "drop";
}

struct AlertEvent {
  Ipv4Addr src_ip;
  std::uint64_t observed_count{0};
  std::uint64_t window_id{0};
  std::uint64_t ts_ns{0};

  friend bool operator==(const AlertEvent&, const AlertEvent&) = default;
};

/// Trace-pipe style alert line, without the trailing newline.
inline std::string format_alert_line(const AlertEvent& a) {
  return "ALERT ts_ns=" + std::to_string(a.ts_ns) + " src=" + a.src_ip.to_string() +
         " count=" + std::to_string(a.observed_count) + " window=" + std::to_string(a.window_id);
}

struct VerdictCounters {
  std::uint64_t total{0};
  std::uint64_t passed{0};
  std::uint64_t passed_non_ipv4{0};
  std::uint64_t dropped_rate{0};
  std::uint64_t dropped_blocklist{0};
  std::uint64_t dropped_malformed{0};
  std::uint64_t alerts_emitted{0};

  bool conserved() const noexcept {
    return total == passed + passed_non_ipv4 + dropped_rate + dropped_blocklist + dropped_malformed;
  }

  friend bool operator==(const VerdictCounters&, const VerdictCounters&) = default;
};

/// Index of the epoch-aligned tumbling window containing ts_ns.
constexpr std::uint64_t window_id(std::uint64_t ts_ns, std::uint64_t window_ms) noexcept {
  return ts_ns / (window_ms * 1'000'000ULL);
}

struct PacketOutcome {
  Verdict verdict = Verdict::pass();
  std::optional<AlertEvent> alert;
  // IPv4 source the verdict was attributed to; absent for non-IPv4 and malformed frames.
  std::optional<Ipv4Addr> src;
};

/// Rate table, blocklist and verdict counters for one datapath. Single owner:
/// exactly one thread calls process_packet on a given instance.
class FilterState {
 public:
  explicit FilterState(FilterConfig config = {}) : config_(config) { config_.validate(); }

  const FilterConfig& config() const noexcept { return config_; }

  PacketOutcome process_packet(const RawFrame& frame) {
    return process_packet(frame.bytes, frame.ts_ns);
  }

  PacketOutcome process_packet(std::span<const std::uint8_t> bytes, std::uint64_t ts_ns) {
    ++counters_.total;
    const ParseResult parsed = parse_frame(bytes, ts_ns);
    if (std::holds_alternative<NonIpv4>(parsed)) {
      ++counters_.passed_non_ipv4;
      return {Verdict::pass(), std::nullopt, std::nullopt};
    }
    if (std::holds_alternative<Malformed>(parsed)) {
      ++counters_.dropped_malformed;
      return {Verdict::drop(DropReason::Malformed), std::nullopt, std::nullopt};
    }

    const Ipv4Addr src = std::get<ParsedPacket>(parsed).src_ip;
    if (blocklist_.contains(src)) {
      ++counters_.dropped_blocklist;
      return {Verdict::drop(DropReason::Blocklisted), std::nullopt, src};
    }

    const std::uint64_t window = window_id(ts_ns, config_.window_ms);
    RateEntry& entry = touch(src, window);
    if (entry.count <= config_.threshold_pkts) {
      ++counters_.passed;
      return {Verdict::pass(), std::nullopt, src};
    }

    // count == threshold + 1: the source was not blocklisted before this
    // packet, so every earlier packet in the window passed.
    blocklist_.emplace(src, ts_ns);
    ++counters_.dropped_rate;
    ++counters_.alerts_emitted;
    return {Verdict::drop(DropReason::RateExceeded), AlertEvent{src, entry.count, window, ts_ns}, src};
  }

  /// Installs a block without emitting an alert (e.g. rules restored from disk).
  void block(Ipv4Addr src, std::uint64_t blocked_at_ns) { blocklist_.try_emplace(src, blocked_at_ns); }

  /// Removes src from the blocklist and forgets its rate entry so that it is
  /// counted afresh. Returns whether src was blocked.
  bool unblock(Ipv4Addr src) {
    if (blocklist_.erase(src) == 0) {
      return false;
    }
    erase_entry(src);
    return true;
  }

  bool unblock(std::string_view src) { return unblock(Ipv4Addr::parse(src)); }

  bool is_blocked(Ipv4Addr src) const { return blocklist_.contains(src); }

  const std::unordered_map<Ipv4Addr, std::uint64_t>& blocklist() const noexcept {
    return blocklist_;
  }

  std::optional<RateEntry> rate_entry(Ipv4Addr src) const {
    if (auto it = table_.find(src); it != table_.end()) return it->second;
    return std::nullopt;
  }

  std::size_t rate_table_size() const noexcept { return table_.size(); }

  VerdictCounters snapshot_counters() const noexcept { return counters_; }

 private:
  // Returns the entry for src after accounting for this packet.
  RateEntry& touch(Ipv4Addr src, std::uint64_t window) {
    auto it = table_.find(src);
    if (it == table_.end()) {
      if (table_.size() >= config_.table_capacity) {
        evict_one();
      }
      it = table_.emplace(src, RateEntry{window, 1}).first;
      age_index_.emplace(window, src.value);
      return it->second;
    }
    RateEntry& entry = it->second;
    if (entry.window_id != window) {
      age_index_.erase({entry.window_id, src.value});
      age_index_.emplace(window, src.value);
      entry = RateEntry{window, 1};
    } else {
      ++entry.count;
    }
    return entry;
  }

  // Oldest stored window first, smallest address on ties.
  void evict_one() {
    const auto victim = age_index_.begin();
    table_.erase(Ipv4Addr(victim->second));
    age_index_.erase(victim);
  }

  void erase_entry(Ipv4Addr src) {
    if (auto it = table_.find(src); it != table_.end()) {
      age_index_.erase({it->second.window_id, src.value});
      table_.erase(it);
    }
  }

  FilterConfig config_;
  std::unordered_map<Ipv4Addr, RateEntry> table_;
  std::set<std::pair<std::uint64_t, std::uint32_t>> age_index_;
  std::unordered_map<Ipv4Addr, std::uint64_t> blocklist_;
  VerdictCounters counters_;
};

} // namespace edgeguard
