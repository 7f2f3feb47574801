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

// Deterministic flood/benign traffic on a virtual clock. Each flow emits
// uniformly spaced UDP frames; flows are merged into one stream ordered by
// timestamp, then source address, then per-flow sequence number.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "edgeguard/error.hpp"
#include "edgeguard/packet.hpp"

namespace edgeguard {

enum class FlowRole { Attacker, Benign };

inline std::string_view to_string(FlowRole r) {
  return r == FlowRole::Attacker ? "attacker" : "benign";
}

inline FlowRole parse_flow_role(std::string_view s) {
  if (s == "attacker" || s == "Attacker") return FlowRole::Attacker;
  if (s == "benign" || s == "Benign") return FlowRole::Benign;
  throw InputError("unknown flow role '" + std::string(s) + "'");
}

struct FlowSpec {
  Ipv4Addr src_ip;
  Ipv4Addr dst_ip;
  std::uint64_t rate_pps{1};
  std::uint64_t start_ms{0};
  std::uint64_t duration_ms{1};
  std::size_t payload_len{18};
  FlowRole role{FlowRole::Benign};

  std::uint64_t packet_count() const noexcept { return rate_pps * duration_ms / 1000; }

  friend bool operator==(const FlowSpec&, const FlowSpec&) = default;
};

struct ScenarioConfig {
  std::string label;
  std::vector<FlowSpec> flows;

  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

inline constexpr std::uint16_t kGeneratorSrcPort = 40000;
inline constexpr std::uint16_t kGeneratorDstPort = 9999;

inline void validate(const ScenarioConfig& config) {
  if (config.flows.empty()) {
    throw ConfigError("scenario '" + config.label + "' has no flows");
  }
  for (const auto& f : config.flows) {
    if (f.rate_pps < 1) throw ConfigError("flow rate_pps must be >= 1");
    if (f.duration_ms < 1) throw ConfigError("flow duration_ms must be >= 1");
    if (f.payload_len > kMaxUdpPayload) {
      throw ConfigError("flow payload_len " + std::to_string(f.payload_len) + " exceeds MTU");
    }
  }
}

/// Timestamp of packet `seq` of a flow, floored to whole nanoseconds.
inline std::uint64_t flow_packet_ts_ns(const FlowSpec& flow, std::uint64_t seq) {
  const auto offset = static_cast<unsigned __int128>(seq) * 1'000'000'000ULL / flow.rate_pps;
  return flow.start_ms * 1'000'000ULL + static_cast<std::uint64_t>(offset);
}

inline std::vector<RawFrame> generate_scenario(const ScenarioConfig& config) {
  validate(config);

  struct Slot {
    std::uint64_t ts;
    std::uint32_t src;
    std::uint64_t seq;
    std::size_t flow;
  };
  std::size_t total = 0;
  for (const auto& f : config.flows) total += f.packet_count();

  std::vector<Slot> slots;
  slots.reserve(total);
  for (std::size_t fi = 0; fi < config.flows.size(); ++fi) {
    const auto& f = config.flows[fi];
    for (std::uint64_t i = 0, n = f.packet_count(); i < n; ++i) {
      slots.push_back({flow_packet_ts_ns(f, i), f.src_ip.value, i, fi});
    }
  }
  std::sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) {
    return std::tie(a.ts, a.src, a.seq, a.flow) < std::tie(b.ts, b.src, b.seq, b.flow);
  });

  std::vector<RawFrame> frames;
  frames.reserve(total);
  for (const auto& s : slots) {
    const auto& f = config.flows[s.flow];
    frames.push_back(build_udp_frame(f.src_ip, f.dst_ip, kGeneratorSrcPort, kGeneratorDstPort,
                                     f.payload_len, s.ts));
  }
  return frames;
}

/// Source address to role. A source listed as attacker in any flow is an attacker.
inline std::map<Ipv4Addr, FlowRole> scenario_roles(const ScenarioConfig& config) {
  std::map<Ipv4Addr, FlowRole> roles;
  for (const auto& f : config.flows) {
    auto [it, inserted] = roles.emplace(f.src_ip, f.role);
    if (!inserted && f.role == FlowRole::Attacker) it->second = FlowRole::Attacker;
  }
  return roles;
}

// Built-in scenarios. Attackers flood 10.0.0.1 for 10 s; the benign client
// sends 100 pkt/s, well under the default 800 pkt/s threshold.
inline const Ipv4Addr kVictimIp{10, 0, 0, 1};
inline const Ipv4Addr kBenignIp{10, 0, 0, 2};
inline const Ipv4Addr kAttackerIp{10, 0, 0, 9};

inline std::map<std::string, ScenarioConfig> builtin_scenarios() {
  const FlowSpec benign{kBenignIp, kVictimIp, 100, 0, 10'000, 18, FlowRole::Benign};
  const FlowSpec pi_attacker{kAttackerIp, kVictimIp, 30'000, 0, 10'000, 18, FlowRole::Attacker};
  const FlowSpec docker_attacker{kAttackerIp, kVictimIp, 100'000, 0, 10'000, 18, FlowRole::Attacker};
  return {
      {"pi-flood", {"pi-flood", {pi_attacker, benign}}},
      {"docker-flood", {"docker-flood", {docker_attacker, benign}}},
      {"benign-only", {"benign-only", {benign}}},
  };
}

// --- JSON scenario files ----------------------------------------------------

inline nlohmann::ordered_json to_json(const ScenarioConfig& config) {
  nlohmann::ordered_json doc;
  doc["label"] = config.label;
  doc["flows"] = nlohmann::ordered_json::array();
  for (const auto& f : config.flows) {
    nlohmann::ordered_json j;
    j["src_ip"] = f.src_ip.to_string();
    j["dst_ip"] = f.dst_ip.to_string();
    j["rate_pps"] = f.rate_pps;
    j["start_ms"] = f.start_ms;
    j["duration_ms"] = f.duration_ms;
    j["payload_len"] = f.payload_len;
    j["role"] = std::string(to_string(f.role));
    doc["flows"].push_back(std::move(j));
  }
  return doc;
}

inline ScenarioConfig scenario_from_json(const nlohmann::json& doc) {
  try {
    ScenarioConfig config;
    config.label = doc.value("label", std::string{});
    for (const auto& j : doc.at("flows")) {
      FlowSpec f;
      f.src_ip = Ipv4Addr::parse(j.at("src_ip").get<std::string>());
      f.dst_ip = Ipv4Addr::parse(j.at("dst_ip").get<std::string>());
      f.rate_pps = j.at("rate_pps").get<std::uint64_t>();
      f.start_ms = j.value("start_ms", std::uint64_t{0});
      f.duration_ms = j.at("duration_ms").get<std::uint64_t>();
      f.payload_len = j.value("payload_len", std::size_t{18});
      f.role = parse_flow_role(j.at("role").get<std::string>());
      config.flows.push_back(f);
    }
    validate(config);
    return config;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid scenario document: ") + e.what());
  }
}

inline ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read scenario", path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("invalid scenario JSON in " + path.string() + ": " + e.what());
  }
  return scenario_from_json(doc);
}

} // namespace edgeguard
