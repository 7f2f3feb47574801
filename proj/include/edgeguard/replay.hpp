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

// Replays a frame stream through the rate filter and aggregates the run into
// a Report. Alerts are handed to a controller as they are raised.
//
// Virtual-time metrics (detection latency) come from frame timestamps.
// Wall-clock metrics (processing cost, controller latency) come from the
// host's steady clock.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "edgeguard/bounded_queue.hpp"
#include "edgeguard/controller.hpp"
#include "edgeguard/datapath.hpp"
#include "edgeguard/error.hpp"
#include "edgeguard/oracle.hpp"
#include "edgeguard/packet.hpp"
#include "edgeguard/traffic_gen.hpp"

namespace edgeguard {

inline constexpr std::string_view kInvalidSourceKey = "invalid";
inline constexpr std::string_view kNonIpv4SourceKey = "non_ipv4";

struct SourceStats {
  std::string src_ip;
  std::uint64_t sent{0};
  std::uint64_t passed{0};
  std::uint64_t dropped{0};

  friend bool operator==(const SourceStats&, const SourceStats&) = default;
};

struct Report {
  std::string label;
  FilterConfig config;
  VerdictCounters counters;
  // IPv4 sources in numeric order, then "invalid" (malformed IPv4) and
  // "non_ipv4" when such frames were seen.
  std::vector<SourceStats> per_source;
  std::optional<double> detection_latency_ms;
  double drop_ratio_attackers{0.0};
  std::uint64_t benign_drop_count{0};
  double mean_processing_ns{0.0};
  bool input_resorted{false};
  std::uint64_t alerts_handled{0};
  std::uint64_t alert_queue_overflow{0};
};

struct EngineOptions {
  std::string label;
  FilterConfig filter;
  std::map<Ipv4Addr, FlowRole> roles;
  // Rules restored from disk; installed into the blocklist before replay.
  std::vector<BlockRule> preinstalled;
  // Called on the replay thread for each alert as it is raised.
  std::function<void(const AlertEvent&)> on_alert;
  // Drained between packets; each address is unblocked in the datapath.
  BoundedQueue<Ipv4Addr>* unblock_requests = nullptr;
};

/// Stable-sorts by timestamp if needed. Returns whether anything moved.
inline bool sort_by_timestamp(std::vector<RawFrame>& frames) {
  const auto by_ts = [](const RawFrame& a, const RawFrame& b) { return a.ts_ns < b.ts_ns; };
  if (std::is_sorted(frames.begin(), frames.end(), by_ts)) return false;
  std::stable_sort(frames.begin(), frames.end(), by_ts);
  return true;
}

namespace detail {

struct SourceTally {
  std::uint64_t sent{0};
  std::uint64_t passed{0};
  std::uint64_t dropped{0};
  std::uint64_t first_ts{0};

  void add(const Verdict& v, std::uint64_t ts) {
    if (sent == 0) first_ts = ts;
    ++sent;
    if (v.is_pass()) ++passed; else ++dropped;
  }
};

inline Report replay_sorted(std::span<const RawFrame> stream, const EngineOptions& options,
                            Controller* controller) {
  FilterState state(options.filter);
  install_rules(state, options.preinstalled);

  std::unordered_map<Ipv4Addr, SourceTally> tallies;
  SourceTally invalid;
  SourceTally non_ipv4;
  std::optional<AlertEvent> first_attacker_alert;
  std::optional<AlertEvent> first_alert;

  const auto role_of = [&](Ipv4Addr ip) -> std::optional<FlowRole> {
    if (auto it = options.roles.find(ip); it != options.roles.end()) return it->second;
    return std::nullopt;
  };

  const auto started = std::chrono::steady_clock::now();
  for (const RawFrame& frame : stream) {
    if (options.unblock_requests) {
      while (auto ip = options.unblock_requests->try_pop()) state.unblock(*ip);
    }
    const PacketOutcome out = state.process_packet(frame);
    if (out.src) {
      tallies[*out.src].add(out.verdict, frame.ts_ns);
    } else if (out.verdict.is_drop()) {
      invalid.add(out.verdict, frame.ts_ns);
    } else {
      non_ipv4.add(out.verdict, frame.ts_ns);
    }
    if (out.alert) {
      if (!first_alert) first_alert = out.alert;
      if (!first_attacker_alert && role_of(out.alert->src_ip) == FlowRole::Attacker) {
        first_attacker_alert = out.alert;
      }
      if (options.on_alert) options.on_alert(*out.alert);
      if (controller) controller->enqueue(*out.alert);
    }
  }
  const auto elapsed = std::chrono::steady_clock::now() - started;

  Report report;
  report.label = options.label;
  report.config = options.filter;
  report.counters = state.snapshot_counters();
  if (!stream.empty()) {
    report.mean_processing_ns =
        static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(elapsed).count()) /
        static_cast<double>(stream.size());
  }

  std::vector<std::pair<Ipv4Addr, SourceTally>> ordered(tallies.begin(), tallies.end());
  std::sort(ordered.begin(), ordered.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  std::uint64_t attacker_sent = 0;
  std::uint64_t attacker_dropped = 0;
  std::optional<std::uint64_t> first_attacker_ts;
  for (const auto& [ip, t] : ordered) {
    report.per_source.push_back({ip.to_string(), t.sent, t.passed, t.dropped});
    const auto role = role_of(ip);
    if (role == FlowRole::Attacker) {
      attacker_sent += t.sent;
      attacker_dropped += t.dropped;
      if (!first_attacker_ts || t.first_ts < *first_attacker_ts) first_attacker_ts = t.first_ts;
    } else if (role == FlowRole::Benign) {
      report.benign_drop_count += t.dropped;
    }
  }
  if (invalid.sent > 0) {
    report.per_source.push_back({std::string(kInvalidSourceKey), invalid.sent, invalid.passed, invalid.dropped});
  }
  if (non_ipv4.sent > 0) {
    report.per_source.push_back({std::string(kNonIpv4SourceKey), non_ipv4.sent, non_ipv4.passed, non_ipv4.dropped});
  }
  if (attacker_sent > 0) {
    report.drop_ratio_attackers =
        static_cast<double>(attacker_dropped) / static_cast<double>(attacker_sent);
  }

  // With roles: first attacker alert relative to the first attacker frame.
  // Without any attacker role: first alert relative to its own source's first frame.
  std::optional<std::uint64_t> latency_ns;
  if (first_attacker_ts && first_attacker_alert) {
    latency_ns = first_attacker_alert->ts_ns - *first_attacker_ts;
  } else if (!first_attacker_ts && first_alert) {
    latency_ns = first_alert->ts_ns - tallies.at(first_alert->src_ip).first_ts;
  }
  if (latency_ns) report.detection_latency_ms = static_cast<double>(*latency_ns) / 1e6;
  return report;
}

} // namespace detail

/// Replays `stream` (re-sorted by timestamp if needed) through a fresh
/// FilterState. Alerts are enqueued on `controller` when one is given; the
/// caller owns its lifetime and stops it before reading handled alerts.
inline Report run_engine(std::span<const RawFrame> stream, const EngineOptions& options,
                         Controller* controller = nullptr) {
  const auto by_ts = [](const RawFrame& a, const RawFrame& b) { return a.ts_ns < b.ts_ns; };
  Report report;
  if (std::is_sorted(stream.begin(), stream.end(), by_ts)) {
    report = detail::replay_sorted(stream, options, controller);
  } else {
    std::vector<RawFrame> sorted(stream.begin(), stream.end());
    sort_by_timestamp(sorted);
    report = detail::replay_sorted(sorted, options, controller);
    report.input_resorted = true;
  }
  return report;
}

/// Runs the replay with an in-process controller (mock firewall, mock
/// notifier, memory-only store) and waits for it to drain.
inline Report run_engine_with_mock_controller(std::span<const RawFrame> stream,
                                              const EngineOptions& options) {
  BlocklistStore store;
  MockFirewallExecutor executor;
  MockNotifier notifier;
  AlertLog log;
  Controller controller(ResponseContext{store, executor, notifier, log});
  controller.start();
  Report report = run_engine(stream, options, &controller);
  controller.stop();
  report.alerts_handled = controller.handled().size();
  report.alert_queue_overflow = controller.overflow_count();
  return report;
}

// --- datapath vs. oracle -----------------------------------------------------

inline oracle::Verdict to_oracle_verdict(Verdict v) {
  if (v.is_pass()) return oracle::Verdict::Pass;
  switch (*v.drop_reason()) {
    case DropReason::RateExceeded: return oracle::Verdict::DropRateExceeded;
    case DropReason::Blocklisted: return oracle::Verdict::DropBlocklisted;
    case DropReason::Malformed: return oracle::Verdict::DropMalformed;
  }
  return oracle::Verdict::DropMalformed;
}

/// Verdict sequence from a fresh FilterState.
inline std::vector<Verdict> engine_verdicts(std::span<const RawFrame> stream, const FilterConfig& config) {
  FilterState state(config);
  std::vector<Verdict> out;
  out.reserve(stream.size());
  for (const auto& f : stream) out.push_back(state.process_packet(f).verdict);
  return out;
}

inline std::vector<oracle::Verdict> oracle_verdicts(std::span<const RawFrame> stream,
                                                    const FilterConfig& config) {
  return oracle::oracle_verdicts(stream, config.threshold_pkts, config.window_ms);
}

struct OracleComparison {
  std::size_t frames{0};
  // Index of the first differing verdict (or of the shorter sequence's end).
  std::optional<std::size_t> first_divergence;
  std::optional<Verdict> engine_verdict;
  std::optional<oracle::Verdict> oracle_verdict;

  bool equivalent() const noexcept { return !first_divergence.has_value(); }
};

inline OracleComparison compare_verdicts(std::span<const Verdict> engine,
                                         std::span<const oracle::Verdict> reference) {
  OracleComparison cmp;
  cmp.frames = reference.size();
  const std::size_t n = std::min(engine.size(), reference.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (to_oracle_verdict(engine[i]) != reference[i]) {
      cmp.first_divergence = i;
      cmp.engine_verdict = engine[i];
      cmp.oracle_verdict = reference[i];
      return cmp;
    }
  }
  if (engine.size() != reference.size()) cmp.first_divergence = n;
  return cmp;
}

using VerdictEngine = std::function<std::vector<Verdict>(std::span<const RawFrame>, const FilterConfig&)>;

inline OracleComparison check_against_oracle(std::span<const RawFrame> stream, const FilterConfig& config,
                                             const VerdictEngine& engine = engine_verdicts) {
  const auto ours = engine(stream, config);
  const auto reference = oracle_verdicts(stream, config);
  return compare_verdicts(ours, reference);
}

// --- report output -----------------------------------------------------------

inline nlohmann::ordered_json to_json(const Report& r) {
  nlohmann::ordered_json j;
  j["label"] = r.label;
  nlohmann::ordered_json cfg;
  if (r.config.unlimited()) {
    cfg["threshold_pkts"] = nullptr;
  } else {
    cfg["threshold_pkts"] = r.config.threshold_pkts;
  }
  cfg["window_ms"] = r.config.window_ms;
  cfg["table_capacity"] = r.config.table_capacity;
  j["config"] = std::move(cfg);

  const auto& c = r.counters;
  j["counters"] = {
      {"total", c.total},
      {"passed", c.passed},
      {"passed_non_ipv4", c.passed_non_ipv4},
      {"dropped_rate", c.dropped_rate},
      {"dropped_blocklist", c.dropped_blocklist},
      {"dropped_malformed", c.dropped_malformed},
      {"alerts_emitted", c.alerts_emitted},
  };
  j["per_source"] = nlohmann::ordered_json::array();
  for (const auto& s : r.per_source) {
    j["per_source"].push_back(
        {{"src_ip", s.src_ip}, {"sent", s.sent}, {"passed", s.passed}, {"dropped", s.dropped}});
  }
  if (r.detection_latency_ms) {
    j["detection_latency_ms"] = *r.detection_latency_ms;
  } else {
    j["detection_latency_ms"] = nullptr;
  }
  j["drop_ratio_attackers"] = r.drop_ratio_attackers;
  j["benign_drop_count"] = r.benign_drop_count;
  j["mean_processing_ns"] = r.mean_processing_ns;
  j["input_resorted"] = r.input_resorted;
  j["alerts_handled"] = r.alerts_handled;
  j["alert_queue_overflow"] = r.alert_queue_overflow;
  return j;
}

inline Report report_from_json(const nlohmann::json& j) {
  try {
    Report r;
    r.label = j.at("label").get<std::string>();
    const auto& cfg = j.at("config");
    r.config.threshold_pkts = cfg.at("threshold_pkts").is_null()
                                  ? FilterConfig::kUnlimited
                                  : cfg.at("threshold_pkts").get<std::uint64_t>();
    r.config.window_ms = cfg.at("window_ms").get<std::uint64_t>();
    r.config.table_capacity = cfg.at("table_capacity").get<std::size_t>();
    const auto& c = j.at("counters");
    r.counters.total = c.at("total").get<std::uint64_t>();
    r.counters.passed = c.at("passed").get<std::uint64_t>();
    r.counters.passed_non_ipv4 = c.at("passed_non_ipv4").get<std::uint64_t>();
    r.counters.dropped_rate = c.at("dropped_rate").get<std::uint64_t>();
    r.counters.dropped_blocklist = c.at("dropped_blocklist").get<std::uint64_t>();
    r.counters.dropped_malformed = c.at("dropped_malformed").get<std::uint64_t>();
    r.counters.alerts_emitted = c.at("alerts_emitted").get<std::uint64_t>();
    for (const auto& s : j.at("per_source")) {
      r.per_source.push_back({s.at("src_ip").get<std::string>(), s.at("sent").get<std::uint64_t>(),
                              s.at("passed").get<std::uint64_t>(), s.at("dropped").get<std::uint64_t>()});
    }
    if (!j.at("detection_latency_ms").is_null()) {
      r.detection_latency_ms = j.at("detection_latency_ms").get<double>();
    }
    r.drop_ratio_attackers = j.at("drop_ratio_attackers").get<double>();
    r.benign_drop_count = j.at("benign_drop_count").get<std::uint64_t>();
    r.mean_processing_ns = j.at("mean_processing_ns").get<double>();
    r.input_resorted = j.value("input_resorted", false);
    r.alerts_handled = j.value("alerts_handled", std::uint64_t{0});
    r.alert_queue_overflow = j.value("alert_queue_overflow", std::uint64_t{0});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid report document: ") + e.what());
  }
}

inline std::string report_to_csv(const Report& r) {
  std::ostringstream out;
  out << "src_ip,sent,passed,dropped\n";
  SourceStats totals{"_totals", 0, 0, 0};
  for (const auto& s : r.per_source) {
    out << s.src_ip << ',' << s.sent << ',' << s.passed << ',' << s.dropped << '\n';
    totals.sent += s.sent;
    totals.passed += s.passed;
    totals.dropped += s.dropped;
  }
  out << totals.src_ip << ',' << totals.sent << ',' << totals.passed << ',' << totals.dropped << '\n';
  return out.str();
}

enum class ReportFormat { Json, Csv };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "json") return ReportFormat::Json;
  if (s == "csv") return ReportFormat::Csv;
  throw InputError("unknown report format '" + std::string(s) + "' (expected json or csv)");
}

inline std::string render_report(const Report& r, ReportFormat format) {
  if (format == ReportFormat::Csv) return report_to_csv(r);
  return to_json(r).dump(2) + "\n";
}

inline void write_report(const Report& r, ReportFormat format, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create report", path.string());
  out << render_report(r, format);
  out.flush();
  if (!out) throw IoError("cannot write report", path.string());
}

} // namespace edgeguard
