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

// User-space response pipeline: consumes AlertEvents from the datapath,
// renders and runs a firewall block, persists the blocklist, notifies an
// operator over a webhook and appends the alert to a log file.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <unordered_set>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "edgeguard/bounded_queue.hpp"
#include "edgeguard/datapath.hpp"
#include "edgeguard/error.hpp"
#include "edgeguard/packet.hpp"

namespace edgeguard {

inline std::int64_t unix_now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

enum class RuleOrigin { AlertTriggered, LoadedFromDisk };

struct BlockRule {
  Ipv4Addr src_ip;
  std::int64_t created_at_ms{0};
  RuleOrigin origin{RuleOrigin::AlertTriggered};

  friend bool operator==(const BlockRule&, const BlockRule&) = default;
};

enum class ActionKind { FirewallBlock, Notify, Log };

inline std::string_view to_string(ActionKind k) {
  switch (k) {
    case ActionKind::FirewallBlock: return "firewall_block";
    case ActionKind::Notify: return "notify";
    case ActionKind::Log: return "log";
  }
  return "unknown";
}

struct ActionOutcome {
  // Empty reason means Done.
  std::optional<std::string> failure;

  static ActionOutcome done() { return {}; }
  static ActionOutcome failed(std::string reason) { return {std::move(reason)}; }

  bool ok() const noexcept { return !failure.has_value(); }
};

struct ActionRecord {
  ActionKind kind{ActionKind::Log};
  std::string payload;
  ActionOutcome outcome;
  std::int64_t at_ms{0};
};

/// Raised when the blocklist file cannot be written. Carries the action
/// records produced before the failure (the firewall block already ran).
class PersistenceError : public IoError {
 public:
  PersistenceError(const std::string& what, std::string path, std::vector<ActionRecord> records = {})
      : IoError(what, std::move(path)), records_(std::move(records)) {}

  const std::vector<ActionRecord>& records() const noexcept { return records_; }

 private:
  std::vector<ActionRecord> records_;
};

// ---------------------------------------------------------------------------
// Firewall

inline std::string render_firewall_command(Ipv4Addr src) {
  return "iptables -A INPUT -s " + src.to_string() + " -j DROP";
}

inline std::string render_firewall_command(std::string_view src) {
  return render_firewall_command(Ipv4Addr::parse(src));
}

class FirewallExecutor {
 public:
  virtual ~FirewallExecutor() = default;
  virtual ActionOutcome execute(const std::string& command) = 0;
};

/// Records commands instead of running them.
class MockFirewallExecutor final : public FirewallExecutor {
 public:
  ActionOutcome execute(const std::string& command) override {
    std::lock_guard lock(mu_);
    commands_.push_back(command);
    if (fail_reason_) return ActionOutcome::failed(*fail_reason_);
    return ActionOutcome::done();
  }

  void fail_with(std::string reason) {
    std::lock_guard lock(mu_);
    fail_reason_ = std::move(reason);
  }

  std::vector<std::string> commands() const {
    std::lock_guard lock(mu_);
    return commands_;
  }

 private:
  mutable std::mutex mu_;
  std::vector<std::string> commands_;
  std::optional<std::string> fail_reason_;
};

/// Runs the command through the host shell. Needs CAP_NET_ADMIN.
class ShellFirewallExecutor final : public FirewallExecutor {
 public:
  ActionOutcome execute(const std::string& command) override {
    const int rc = std::system(command.c_str());
    if (rc == 0) return ActionOutcome::done();
    return ActionOutcome::failed("command exited with status " + std::to_string(rc));
  }
};

// ---------------------------------------------------------------------------
// Blocklist persistence
//
// One rule per line: "<dotted-quad>,<created_at_ms>\n", insertion order.

inline void persist_blocklist(const std::filesystem::path& path, std::span<const BlockRule> rules) {
  namespace fs = std::filesystem;
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw PersistenceError("cannot write blocklist", path.string());
    }
    for (const auto& rule : rules) {
      out << rule.src_ip.to_string() << ',' << rule.created_at_ms << '\n';
    }
    out.flush();
    if (!out) {
      std::error_code ignored;
      fs::remove(tmp, ignored);
      throw PersistenceError("cannot write blocklist", path.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw PersistenceError("cannot replace blocklist", path.string());
  }
}

inline std::vector<BlockRule> load_blocklist(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return {};
    throw IoError("cannot read blocklist", path.string());
  }
  std::vector<BlockRule> rules;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fail = [&] {
      return FormatError("malformed blocklist record at " + path.string() + ":" +
                         std::to_string(line_no) + ": '" + line + "'");
    };
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw fail();
    const auto ip = Ipv4Addr::try_parse(std::string_view(line).substr(0, comma));
    if (!ip) throw fail();
    const std::string ts = line.substr(comma + 1);
    if (ts.empty() || ts.find_first_not_of("0123456789") != std::string::npos) throw fail();
    std::int64_t created = 0;
    try {
      created = std::stoll(ts);
    } catch (const std::exception&) {
      throw fail();
    }
    rules.push_back(BlockRule{*ip, created, RuleOrigin::LoadedFromDisk});
  }
  return rules;
}

/// In-memory view of the blocklist file; every add rewrites the file. A
/// default-constructed store is memory-only.
class BlocklistStore {
 public:
  BlocklistStore() = default;

  explicit BlocklistStore(std::filesystem::path path)
      : path_(std::move(path)), rules_(load_blocklist(*path_)) {
    for (const auto& r : rules_) index_.insert(r.src_ip);
  }

  bool contains(Ipv4Addr ip) const {
    std::lock_guard lock(mu_);
    return index_.contains(ip);
  }

  // Throws PersistenceError and leaves the store unchanged on write failure.
  void add(const BlockRule& rule) {
    std::lock_guard lock(mu_);
    if (index_.contains(rule.src_ip)) return;
    rules_.push_back(rule);
    if (path_) {
      try {
        persist_blocklist(*path_, rules_);
      } catch (...) {
        rules_.pop_back();
        throw;
      }
    }
    index_.insert(rule.src_ip);
  }

  std::vector<BlockRule> rules() const {
    std::lock_guard lock(mu_);
    return rules_;
  }

  const std::optional<std::filesystem::path>& path() const noexcept { return path_; }

 private:
  std::optional<std::filesystem::path> path_;
  mutable std::mutex mu_;
  std::vector<BlockRule> rules_;
  std::unordered_set<Ipv4Addr> index_;
};

inline void install_rules(FilterState& state, std::span<const BlockRule> rules) {
  for (const auto& r : rules) {
    state.block(r.src_ip, static_cast<std::uint64_t>(r.created_at_ms) * 1'000'000ULL);
  }
}

// ---------------------------------------------------------------------------
// Notification

struct NotifierConfig {
  static constexpr int kAttempts = 3;
  static constexpr std::chrono::milliseconds kBackoff{200};

  std::string url;
  std::string chat_id{"edgeguard-admin"};
  std::chrono::milliseconds connect_timeout{250};
  std::chrono::milliseconds io_timeout{250};
};

inline std::string notification_text(const AlertEvent& alert) {
  return "DDoS alert: blocked " + alert.src_ip.to_string() + " after " +
         std::to_string(alert.observed_count) + " pkts in window " + std::to_string(alert.window_id);
}

/// Telegram sendMessage-compatible body.
inline std::string render_notification_body(const std::string& chat_id, const AlertEvent& alert) {
  nlohmann::ordered_json body;
  body["chat_id"] = chat_id;
  body["text"] = notification_text(alert);
  return body.dump();
}

namespace detail {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

inline std::optional<SplitUrl> split_url(const std::string& url) {
  static const std::regex re(R"(^(http://[^/?#]+)([/?].*)?$)", std::regex::icase);
  std::smatch m;
  if (!std::regex_match(url, m, re)) return std::nullopt;
  SplitUrl out{m[1].str(), m[2].matched ? m[2].str() : "/"};
  return out;
}

inline void to_timeval(std::chrono::milliseconds ms, time_t& sec, time_t& usec) {
  sec = static_cast<time_t>(ms.count() / 1000);
  usec = static_cast<time_t>((ms.count() % 1000) * 1000);
}

} // namespace detail

/// POSTs the alert to config.url. Up to three attempts with a fixed 200 ms
/// pause between them; Done iff some attempt got a 2xx. Never throws.
inline ActionOutcome send_notification(const NotifierConfig& config, const AlertEvent& alert,
                                       int* attempts_made = nullptr) {
  if (attempts_made) *attempts_made = 0;
  const auto split = detail::split_url(config.url);
  if (!split) {
    return ActionOutcome::failed("transport: unsupported webhook url '" + config.url + "'");
  }
  const std::string body = render_notification_body(config.chat_id, alert);

  std::string last_failure;
  for (int attempt = 1; attempt <= NotifierConfig::kAttempts; ++attempt) {
    if (attempt > 1) std::this_thread::sleep_for(NotifierConfig::kBackoff);
    if (attempts_made) *attempts_made = attempt;

    httplib::Client client(split->origin);
    time_t sec = 0, usec = 0;
    detail::to_timeval(config.connect_timeout, sec, usec);
    client.set_connection_timeout(sec, usec);
    detail::to_timeval(config.io_timeout, sec, usec);
    client.set_read_timeout(sec, usec);
    client.set_write_timeout(sec, usec);

    auto res = client.Post(split->path, body, "application/json");
    if (!res) {
      last_failure = "transport: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 200 && res->status < 300) {
      return ActionOutcome::done();
    }
    last_failure = "http status " + std::to_string(res->status);
  }
  return ActionOutcome::failed(last_failure);
}

class Notifier {
 public:
  virtual ~Notifier() = default;
  // Returns the outcome; payload receives the message body that was sent.
  virtual ActionOutcome notify(const AlertEvent& alert, std::string& payload) = 0;
};

class WebhookNotifier final : public Notifier {
 public:
  explicit WebhookNotifier(NotifierConfig config) : config_(std::move(config)) {}

  ActionOutcome notify(const AlertEvent& alert, std::string& payload) override {
    payload = render_notification_body(config_.chat_id, alert);
    return send_notification(config_, alert);
  }

 private:
  NotifierConfig config_;
};

/// Records alerts in memory; used when no webhook is configured.
class MockNotifier final : public Notifier {
 public:
  ActionOutcome notify(const AlertEvent& alert, std::string& payload) override {
    payload = render_notification_body("mock", alert);
    std::lock_guard lock(mu_);
    sent_.push_back(alert);
    if (fail_reason_) return ActionOutcome::failed(*fail_reason_);
    return ActionOutcome::done();
  }

  void fail_with(std::string reason) {
    std::lock_guard lock(mu_);
    fail_reason_ = std::move(reason);
  }

  std::vector<AlertEvent> sent() const {
    std::lock_guard lock(mu_);
    return sent_;
  }

 private:
  mutable std::mutex mu_;
  std::vector<AlertEvent> sent_;
  std::optional<std::string> fail_reason_;
};

// ---------------------------------------------------------------------------
// Alert log

class AlertLog {
 public:
  AlertLog() = default;
  explicit AlertLog(std::filesystem::path path) : path_(std::move(path)) {}

  ActionOutcome append(const std::string& line) {
    if (!path_) return ActionOutcome::done();
    std::lock_guard lock(mu_);
    std::ofstream out(*path_, std::ios::app | std::ios::binary);
    out << line << '\n';
    out.flush();
    if (!out) return ActionOutcome::failed("cannot append to " + path_->string());
    return ActionOutcome::done();
  }

  const std::optional<std::filesystem::path>& path() const noexcept { return path_; }

 private:
  std::optional<std::filesystem::path> path_;
  std::mutex mu_;
};

// ---------------------------------------------------------------------------

struct ResponseContext {
  BlocklistStore& store;
  FirewallExecutor& executor;
  Notifier& notifier;
  AlertLog& log;
  std::function<std::int64_t()> clock = unix_now_ms;
};

/// Block, persist, notify, log. Returns no records for an address the store
/// already holds. A failed firewall command stops the sequence; a failed
/// notification does not undo the block.
inline std::vector<ActionRecord> handle_alert(const AlertEvent& alert, ResponseContext& ctx) {
  std::vector<ActionRecord> records;
  if (ctx.store.contains(alert.src_ip)) {
    return records;
  }

  const std::string command = render_firewall_command(alert.src_ip);
  ActionOutcome fw = ctx.executor.execute(command);
  records.push_back({ActionKind::FirewallBlock, command, fw, ctx.clock()});
  if (!fw.ok()) {
    return records;
  }

  try {
    ctx.store.add(BlockRule{alert.src_ip, ctx.clock(), RuleOrigin::AlertTriggered});
  } catch (const PersistenceError& e) {
    throw PersistenceError("cannot persist block rule", e.path(), records);
  }

  std::string message;
  ActionOutcome sent = ctx.notifier.notify(alert, message);
  records.push_back({ActionKind::Notify, std::move(message), std::move(sent), ctx.clock()});

  const std::string line = format_alert_line(alert);
  records.push_back({ActionKind::Log, line, ctx.log.append(line), ctx.clock()});
  return records;
}

struct HandledAlert {
  AlertEvent alert;
  std::vector<ActionRecord> records;
  // Enqueue to completion of the last action, host monotonic clock.
  std::chrono::nanoseconds latency{0};
  std::optional<std::string> error;
};

/// Drains a bounded alert queue on its own thread, one alert at a time.
class Controller {
 public:
  static constexpr std::size_t kQueueCapacity = 1024;

  explicit Controller(ResponseContext ctx, std::size_t queue_capacity = kQueueCapacity)
      : ctx_(std::move(ctx)), queue_(queue_capacity) {}

  ~Controller() { stop(); }

  Controller(const Controller&) = delete;
  Controller& operator=(const Controller&) = delete;

  void start() {
    if (worker_.joinable()) return;
    worker_ = std::thread([this] { run(); });
  }

  // Returns false when the queue is full (the alert is dropped and counted).
  bool enqueue(const AlertEvent& alert) {
    return queue_.try_push(Queued{alert, std::chrono::steady_clock::now()});
  }

  // Processes everything already queued, then joins the worker.
  void stop() {
    queue_.close();
    if (worker_.joinable()) worker_.join();
  }

  std::size_t overflow_count() const { return queue_.overflow_count(); }

  std::vector<HandledAlert> handled() const {
    std::lock_guard lock(mu_);
    return handled_;
  }

 private:
  struct Queued {
    AlertEvent alert;
    std::chrono::steady_clock::time_point enqueued;
  };

  void run() {
    while (auto item = queue_.pop()) {
      HandledAlert h{item->alert, {}, {}, std::nullopt};
      try {
        h.records = handle_alert(item->alert, ctx_);
      } catch (const PersistenceError& e) {
        h.records = e.records();
        h.error = e.what();
      } catch (const std::exception& e) {
        h.error = e.what();
      }
      h.latency = std::chrono::steady_clock::now() - item->enqueued;
      std::lock_guard lock(mu_);
      handled_.push_back(std::move(h));
    }
  }

  ResponseContext ctx_;
  BoundedQueue<Queued> queue_;
  mutable std::mutex mu_;
  std::vector<HandledAlert> handled_;
  std::thread worker_;
};

} // namespace edgeguard
