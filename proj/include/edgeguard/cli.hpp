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

// Command-line front end: simulate, replay, oracle and report subcommands.
// Exit codes: 0 success, 1 oracle divergence, 2 usage or format error,
// 3 I/O error.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "edgeguard/controller.hpp"
#include "edgeguard/datapath.hpp"
#include "edgeguard/error.hpp"
#include "edgeguard/pcap.hpp"
#include "edgeguard/replay.hpp"
#include "edgeguard/traffic_gen.hpp"

namespace edgeguard::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitDivergence = 1,
  kExitUsage = 2,
  kExitIo = 3,
};

enum class FirewallMode { Mock, Exec };

struct CliConfig {
  std::uint64_t threshold_pkts{800};
  std::uint64_t window_ms{1000};
  std::size_t table_capacity{65536};
  std::string blocklist_path{"./blocklist.csv"};
  FirewallMode firewall_mode{FirewallMode::Mock};
  std::optional<std::string> webhook_url;
  std::string chat_id{"edgeguard-admin"};
  std::optional<std::string> alert_log_path;
  std::optional<std::string> output_path;
  ReportFormat format{ReportFormat::Json};
  bool no_filter{false};
  bool have_privileges{false};

  FilterConfig filter() const {
    FilterConfig f{threshold_pkts, window_ms, table_capacity};
    if (no_filter) f.threshold_pkts = FilterConfig::kUnlimited;
    return f;
  }
};

inline FirewallMode parse_firewall_mode(std::string_view s) {
  if (s == "mock") return FirewallMode::Mock;
  if (s == "exec") return FirewallMode::Exec;
  throw InputError("unknown firewall mode '" + std::string(s) + "' (expected mock or exec)");
}

// Raw flag values; unset flags fall back to the config file, then defaults.
struct FlagValues {
  std::optional<std::uint64_t> threshold;
  std::optional<std::uint64_t> window_ms;
  std::optional<std::size_t> capacity;
  std::optional<std::string> blocklist;
  std::optional<std::string> firewall_mode;
  std::optional<std::string> webhook_url;
  std::optional<std::string> chat_id;
  std::optional<std::string> alert_log;
  std::optional<std::string> output;
  std::optional<std::string> format;
  std::optional<std::string> config_path;
  bool no_filter{false};
  bool have_privileges{false};
};

/// Applies config-file keys, then flags, over the defaults.
inline CliConfig resolve_config(const FlagValues& flags) {
  CliConfig cfg;
  if (flags.config_path) {
    std::ifstream in(*flags.config_path);
    if (!in) throw IoError("cannot read config", *flags.config_path);
    nlohmann::json doc;
    try {
      in >> doc;
      if (doc.contains("threshold_pkts")) cfg.threshold_pkts = doc["threshold_pkts"].get<std::uint64_t>();
      if (doc.contains("window_ms")) cfg.window_ms = doc["window_ms"].get<std::uint64_t>();
      if (doc.contains("table_capacity")) cfg.table_capacity = doc["table_capacity"].get<std::size_t>();
      if (doc.contains("blocklist_path")) cfg.blocklist_path = doc["blocklist_path"].get<std::string>();
      if (doc.contains("firewall_mode")) {
        cfg.firewall_mode = parse_firewall_mode(doc["firewall_mode"].get<std::string>());
      }
      if (doc.contains("webhook_url")) cfg.webhook_url = doc["webhook_url"].get<std::string>();
      if (doc.contains("chat_id")) cfg.chat_id = doc["chat_id"].get<std::string>();
      if (doc.contains("alert_log_path")) cfg.alert_log_path = doc["alert_log_path"].get<std::string>();
      if (doc.contains("output_path")) cfg.output_path = doc["output_path"].get<std::string>();
      if (doc.contains("format")) cfg.format = parse_report_format(doc["format"].get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("invalid config file " + *flags.config_path + ": " + e.what());
    }
  }
  if (flags.threshold) cfg.threshold_pkts = *flags.threshold;
  if (flags.window_ms) cfg.window_ms = *flags.window_ms;
  if (flags.capacity) cfg.table_capacity = *flags.capacity;
  if (flags.blocklist) cfg.blocklist_path = *flags.blocklist;
  if (flags.firewall_mode) cfg.firewall_mode = parse_firewall_mode(*flags.firewall_mode);
  if (flags.webhook_url) cfg.webhook_url = *flags.webhook_url;
  if (flags.chat_id) cfg.chat_id = *flags.chat_id;
  if (flags.alert_log) cfg.alert_log_path = *flags.alert_log;
  if (flags.output) cfg.output_path = *flags.output;
  if (flags.format) cfg.format = parse_report_format(*flags.format);
  cfg.no_filter = flags.no_filter;
  cfg.have_privileges = flags.have_privileges;

  cfg.filter().validate();
  if (cfg.firewall_mode == FirewallMode::Exec && !cfg.have_privileges) {
    throw ConfigError("--firewall-mode exec also requires --i-have-privileges");
  }
  return cfg;
}

struct Io {
  std::ostream& out;
  std::ostream& err;
};

class UnknownScenario : public InputError {
 public:
  using InputError::InputError;
};

inline ScenarioConfig resolve_scenario(const std::string& name_or_path) {
  const auto builtins = builtin_scenarios();
  if (auto it = builtins.find(name_or_path); it != builtins.end()) return it->second;
  std::error_code ec;
  if (std::filesystem::is_regular_file(name_or_path, ec)) return load_scenario(name_or_path);
  std::string known;
  for (const auto& [name, _] : builtins) known += (known.empty() ? "" : ", ") + name;
  throw UnknownScenario("unknown scenario '" + name_or_path + "' (built-ins: " + known +
                        "; or a path to a scenario JSON file)");
}

inline void emit_report(const Report& report, const CliConfig& cfg, Io io) {
  if (cfg.output_path) {
    write_report(report, cfg.format, *cfg.output_path);
  } else {
    io.out << render_report(report, cfg.format);
  }
}

/// Runs frames through the datapath and a controller built from cfg.
inline Report replay_with_controller(std::span<const RawFrame> frames, std::string label,
                                     std::map<Ipv4Addr, FlowRole> roles, const CliConfig& cfg, Io io) {
  BlocklistStore store(cfg.blocklist_path);

  std::unique_ptr<FirewallExecutor> executor;
  if (cfg.firewall_mode == FirewallMode::Exec) {
    executor = std::make_unique<ShellFirewallExecutor>();
  } else {
    executor = std::make_unique<MockFirewallExecutor>();
  }
  std::unique_ptr<Notifier> notifier;
  if (cfg.webhook_url) {
    NotifierConfig nc;
    nc.url = *cfg.webhook_url;
    nc.chat_id = cfg.chat_id;
    notifier = std::make_unique<WebhookNotifier>(nc);
  } else {
    notifier = std::make_unique<MockNotifier>();
  }
  AlertLog log = cfg.alert_log_path ? AlertLog(*cfg.alert_log_path) : AlertLog();

  EngineOptions options;
  options.label = std::move(label);
  options.filter = cfg.filter();
  options.roles = std::move(roles);
  // The unfiltered baseline ignores persisted blocks as well.
  if (!cfg.no_filter) options.preinstalled = store.rules();
  options.on_alert = [&io](const AlertEvent& a) { io.err << format_alert_line(a) << '\n' << std::flush; };

  Controller controller(ResponseContext{store, *executor, *notifier, log});
  controller.start();
  Report report = run_engine(frames, options, &controller);
  controller.stop();

  const auto handled = controller.handled();
  report.alerts_handled = handled.size();
  report.alert_queue_overflow = controller.overflow_count();
  for (const auto& h : handled) {
    if (h.error) io.err << "controller: " << *h.error << '\n';
    for (const auto& rec : h.records) {
      if (!rec.outcome.ok()) {
        io.err << "controller: " << to_string(rec.kind) << " failed for "
               << h.alert.src_ip.to_string() << ": " << *rec.outcome.failure << '\n';
      }
    }
  }
  return report;
}

inline int cmd_simulate(const std::string& scenario_name, const CliConfig& cfg, Io io) {
  const ScenarioConfig scenario = resolve_scenario(scenario_name);
  const auto frames = generate_scenario(scenario);
  Report report = replay_with_controller(frames, scenario.label, scenario_roles(scenario), cfg, io);
  emit_report(report, cfg, io);
  return kExitOk;
}

inline int cmd_replay(const std::string& pcap_path, const CliConfig& cfg, Io io) {
  const auto frames = read_pcap(pcap_path);
  Report report = replay_with_controller(frames, std::filesystem::path(pcap_path).filename().string(),
                                         {}, cfg, io);
  emit_report(report, cfg, io);
  return kExitOk;
}

inline std::vector<RawFrame> load_oracle_input(const std::string& input) {
  const auto builtins = builtin_scenarios();
  if (builtins.contains(input) || std::filesystem::path(input).extension() == ".json") {
    return generate_scenario(resolve_scenario(input));
  }
  std::error_code ec;
  if (!std::filesystem::exists(input, ec)) {
    throw UnknownScenario("'" + input + "' is neither a built-in scenario nor an existing file");
  }
  auto frames = read_pcap(input);
  sort_by_timestamp(frames);
  return frames;
}

inline int cmd_oracle(const std::string& input, const CliConfig& cfg, Io io,
                      const VerdictEngine& engine = engine_verdicts) {
  const auto frames = load_oracle_input(input);
  const auto cmp = check_against_oracle(frames, cfg.filter(), engine);
  if (cmp.equivalent()) {
    io.out << "oracle: " << cmp.frames << " verdicts identical\n";
    return kExitOk;
  }
  io.out << "oracle: divergence at index " << *cmp.first_divergence;
  if (cmp.engine_verdict && cmp.oracle_verdict) {
    io.out << " (engine " << to_string(*cmp.engine_verdict) << ", oracle "
           << oracle::to_string(*cmp.oracle_verdict) << ")";
  }
  io.out << '\n';
  return kExitDivergence;
}

inline int cmd_report(const std::string& path, Io io) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read report", path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("invalid report JSON in " + path + ": " + e.what());
  }
  const Report r = report_from_json(doc);
  const auto& c = r.counters;
  auto& o = io.out;
  o << "run:                  " << r.label << '\n';
  o << "threshold:            "
    << (r.config.unlimited() ? std::string("none (filter disabled)")
                             : std::to_string(r.config.threshold_pkts) + " pkts / " +
                                   std::to_string(r.config.window_ms) + " ms")
    << '\n';
  o << "frames:               " << c.total << " (passed " << c.passed << ", non-ipv4 " << c.passed_non_ipv4
    << ", rate drops " << c.dropped_rate << ", blocklist drops " << c.dropped_blocklist
    << ", malformed " << c.dropped_malformed << ")\n";
  o << "alerts:               " << c.alerts_emitted << '\n';
  o << std::fixed << std::setprecision(4);
  o << "attacker drop ratio:  " << r.drop_ratio_attackers * 100.0 << " %\n";
  o << "benign drops:         " << r.benign_drop_count << '\n';
  o << std::setprecision(3);
  o << "detection latency:    ";
  if (r.detection_latency_ms) o << *r.detection_latency_ms << " ms\n"; else o << "n/a\n";
  o << std::setprecision(1);
  o << "mean cost per packet: " << r.mean_processing_ns << " ns\n";
  o << '\n' << std::left << std::setw(18) << "source" << std::right << std::setw(12) << "sent"
    << std::setw(12) << "passed" << std::setw(12) << "dropped" << '\n';
  for (const auto& s : r.per_source) {
    o << std::left << std::setw(18) << s.src_ip << std::right << std::setw(12) << s.sent << std::setw(12)
      << s.passed << std::setw(12) << s.dropped << '\n';
  }
  return kExitOk;
}

/// Entry point shared by the binary and the tests. `engine` replaces the
/// datapath in the oracle subcommand (used to check the checker).
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err,
               const VerdictEngine& engine = engine_verdicts) {
  CLI::App app{"edgeguard: per-source rate-limiting DDoS filter simulator"};
  app.require_subcommand(1);

  FlagValues flags;
  auto add_common = [&flags](CLI::App* sub) {
    sub->add_option("--threshold", flags.threshold, "Packets per window before a source is blocked");
    sub->add_option("--window-ms", flags.window_ms, "Tumbling window length in milliseconds");
    sub->add_option("--capacity", flags.capacity, "Maximum number of tracked sources");
    sub->add_option("--blocklist", flags.blocklist, "Blocklist file (default ./blocklist.csv)");
    sub->add_option("--firewall-mode", flags.firewall_mode, "mock (default) or exec");
    sub->add_option("--webhook-url", flags.webhook_url, "http:// endpoint for alert notifications");
    sub->add_option("--chat-id", flags.chat_id, "chat_id field of the notification body");
    sub->add_option("--alert-log", flags.alert_log, "File the controller appends alert lines to");
    sub->add_option("--output", flags.output, "Report path (default stdout)");
    sub->add_option("--format", flags.format, "json (default) or csv");
    sub->add_flag("--no-filter", flags.no_filter, "Disable the threshold (unmitigated baseline)");
    sub->add_option("--config", flags.config_path, "JSON config file; flags override it");
    sub->add_flag("--i-have-privileges", flags.have_privileges, "Allow --firewall-mode exec");
  };

  std::string target;
  auto* simulate = app.add_subcommand("simulate", "Generate a scenario and replay it");
  simulate->add_option("scenario", target, "Built-in name (pi-flood, docker-flood, benign-only) or JSON file")
      ->required();
  add_common(simulate);

  auto* replay = app.add_subcommand("replay", "Replay a classic pcap file");
  replay->add_option("pcap", target, "Capture file")->required();
  add_common(replay);

  auto* oracle_cmd = app.add_subcommand("oracle", "Compare datapath verdicts with the brute-force oracle");
  oracle_cmd->add_option("input", target, "Built-in scenario, scenario JSON or pcap file")->required();
  add_common(oracle_cmd);

  auto* report = app.add_subcommand("report", "Pretty-print a JSON report");
  report->add_option("report", target, "Report JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "edgeguard: " << e.what() << '\n';
    return kExitUsage;
  }

  const Io io{out, err};
  try {
    if (report->parsed()) return cmd_report(target, io);
    const CliConfig cfg = resolve_config(flags);
    if (simulate->parsed()) return cmd_simulate(target, cfg, io);
    if (replay->parsed()) return cmd_replay(target, cfg, io);
    if (oracle_cmd->parsed()) return cmd_oracle(target, cfg, io, engine);
  } catch (const IoError& e) {
    err << "edgeguard: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    err << "edgeguard: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

} // namespace edgeguard::cli
