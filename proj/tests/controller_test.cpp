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

#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "edgeguard/controller.hpp"
#include "mock_webhook.hpp"
#include "test_util.hpp"

namespace edgeguard {
namespace {

using testing::MockWebhook;
using testing::TempDir;

const AlertEvent kAlert{Ipv4Addr{10, 0, 0, 9}, 801, 0, 26'666'666};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(RenderFirewallCommandTest, Template) {
  EXPECT_EQ(render_firewall_command(Ipv4Addr(10, 0, 0, 9)), "iptables -A INPUT -s 10.0.0.9 -j DROP");
  EXPECT_EQ(render_firewall_command("192.168.1.200"), "iptables -A INPUT -s 192.168.1.200 -j DROP");
  EXPECT_THROW(render_firewall_command("10.0.0"), InputError);
}

TEST(PersistBlocklistTest, WritesOneRecordPerLine) {
  TempDir dir;
  const auto path = dir / "blocklist.csv";
  const std::vector<BlockRule> rules{{Ipv4Addr(10, 0, 0, 9), 1'700'000'000'000, RuleOrigin::AlertTriggered}};
  persist_blocklist(path, rules);
  EXPECT_EQ(slurp(path), "10.0.0.9,1700000000000\n");
  EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));

  persist_blocklist(path, {});
  EXPECT_TRUE(std::filesystem::exists(path));
  EXPECT_EQ(slurp(path), "");
}

TEST(PersistBlocklistTest, UnwritablePathNamesThePath) {
  TempDir dir;
  const auto path = dir / "no-such-dir" / "blocklist.csv";
  try {
    persist_blocklist(path, {});
    FAIL() << "expected PersistenceError";
  } catch (const PersistenceError& e) {
    EXPECT_EQ(e.path(), path.string());
    EXPECT_NE(std::string(e.what()).find(path.string()), std::string::npos);
  }
}

TEST(LoadBlocklistTest, RoundTripAndMissingFile) {
  TempDir dir;
  const auto path = dir / "blocklist.csv";
  EXPECT_TRUE(load_blocklist(path).empty());

  persist_blocklist(path, std::vector<BlockRule>{{Ipv4Addr(10, 0, 0, 9), 1'700'000'000'000, RuleOrigin::AlertTriggered}});
  const auto rules = load_blocklist(path);
  ASSERT_EQ(rules.size(), 1u);
  EXPECT_EQ(rules[0].src_ip, Ipv4Addr(10, 0, 0, 9));
  EXPECT_EQ(rules[0].created_at_ms, 1'700'000'000'000);
  EXPECT_EQ(rules[0].origin, RuleOrigin::LoadedFromDisk);
}

TEST(LoadBlocklistTest, MalformedLineCitesLineNumber) {
  TempDir dir;
  const auto path = dir / "blocklist.csv";
  {
    std::ofstream(path) << "banana,12\n";
  }
  try {
    load_blocklist(path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find(":1:"), std::string::npos) << e.what();
  }
  {
    std::ofstream(path) << "10.0.0.1,5\n10.0.0.2,x\n";
  }
  try {
    load_blocklist(path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
  {
    std::ofstream(path) << "10.0.0.1\n";
  }
  EXPECT_THROW(load_blocklist(path), FormatError);
}

TEST(BlocklistProperty, FileRoundTrip) {
  std::mt19937_64 rng(99);
  TempDir dir;
  const auto path = dir / "bl.csv";
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<BlockRule> rules(rng() % 40);
    for (auto& r : rules) {
      r.src_ip = Ipv4Addr(static_cast<std::uint32_t>(rng()));
      r.created_at_ms = static_cast<std::int64_t>(rng() >> 20);
    }
    persist_blocklist(path, rules);
    const auto loaded = load_blocklist(path);
    ASSERT_EQ(loaded.size(), rules.size());
    for (std::size_t i = 0; i < rules.size(); ++i) {
      ASSERT_EQ(loaded[i].src_ip, rules[i].src_ip);
      ASSERT_EQ(loaded[i].created_at_ms, rules[i].created_at_ms);
    }
  }
}

TEST(BlocklistStoreTest, FailedWriteLeavesStoreUnchanged) {
  TempDir dir;
  BlocklistStore store(dir / "missing" / "bl.csv");
  EXPECT_THROW(store.add({Ipv4Addr(1, 2, 3, 4), 1, RuleOrigin::AlertTriggered}), PersistenceError);
  EXPECT_FALSE(store.contains(Ipv4Addr(1, 2, 3, 4)));
  EXPECT_TRUE(store.rules().empty());
}

TEST(SendNotificationTest, PostsTelegramShapedJson) {
  MockWebhook hook(200);
  NotifierConfig cfg;
  cfg.url = hook.url();
  cfg.chat_id = "12345";
  int attempts = 0;
  const auto outcome = send_notification(cfg, kAlert, &attempts);
  EXPECT_TRUE(outcome.ok());
  EXPECT_EQ(attempts, 1);
  ASSERT_EQ(hook.request_count(), 1u);
  EXPECT_EQ(hook.content_types()[0], "application/json");
  EXPECT_EQ(hook.paths()[0], "/bot/sendMessage");
  const auto body = nlohmann::json::parse(hook.bodies()[0]);
  EXPECT_EQ(body["chat_id"], "12345");
  EXPECT_EQ(body["text"], "DDoS alert: blocked 10.0.0.9 after 801 pkts in window 0");
}

TEST(SendNotificationTest, ServerErrorRetriesExactlyThreeTimes) {
  MockWebhook hook(500);
  NotifierConfig cfg;
  cfg.url = hook.url();
  int attempts = 0;
  const auto start = std::chrono::steady_clock::now();
  const auto outcome = send_notification(cfg, kAlert, &attempts);
  const auto elapsed = std::chrono::steady_clock::now() - start;
  EXPECT_FALSE(outcome.ok());
  EXPECT_NE(outcome.failure->find("500"), std::string::npos);
  EXPECT_EQ(attempts, 3);
  EXPECT_EQ(hook.request_count(), 3u);
  // Two 200 ms pauses between the three attempts.
  EXPECT_GE(elapsed, std::chrono::milliseconds(400));
}

TEST(SendNotificationTest, Non2xxThenRecovers) {
  MockWebhook hook(404);
  NotifierConfig cfg;
  cfg.url = hook.url();
  std::thread flip([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    hook.set_status(204);
  });
  int attempts = 0;
  const auto outcome = send_notification(cfg, kAlert, &attempts);
  flip.join();
  EXPECT_TRUE(outcome.ok());
  EXPECT_EQ(attempts, 2);
}

TEST(SendNotificationTest, UnresolvableHostIsTransportFailure) {
  NotifierConfig cfg;
  cfg.url = "http://edgeguard-does-not-exist.invalid/hook";
  const auto outcome = send_notification(cfg, kAlert);
  ASSERT_FALSE(outcome.ok());
  EXPECT_EQ(outcome.failure->rfind("transport", 0), 0u) << *outcome.failure;
}

TEST(SendNotificationTest, ConnectionRefusedIsTransportFailure) {
  NotifierConfig cfg;
  cfg.url = "http://127.0.0.1:" + std::to_string(testing::closed_port()) + "/hook";
  int attempts = 0;
  const auto outcome = send_notification(cfg, kAlert, &attempts);
  ASSERT_FALSE(outcome.ok());
  EXPECT_EQ(outcome.failure->rfind("transport", 0), 0u);
  EXPECT_EQ(attempts, 3);
}

TEST(SendNotificationTest, UnsupportedUrlFailsWithoutAttempt) {
  NotifierConfig cfg;
  cfg.url = "ftp://example.org/x";
  int attempts = -1;
  const auto outcome = send_notification(cfg, kAlert, &attempts);
  EXPECT_FALSE(outcome.ok());
  EXPECT_EQ(attempts, 0);
}

struct Harness {
  TempDir dir;
  BlocklistStore store{dir / "blocklist.csv"};
  MockFirewallExecutor executor;
  MockNotifier notifier;
  AlertLog log{dir / "alerts.log"};
  ResponseContext ctx{store, executor, notifier, log, [] { return std::int64_t{1'700'000'000'000}; }};
};

TEST(HandleAlertTest, BlockNotifyLogInOrder) {
  Harness h;
  const auto records = handle_alert(kAlert, h.ctx);
  ASSERT_EQ(records.size(), 3u);
  EXPECT_EQ(records[0].kind, ActionKind::FirewallBlock);
  EXPECT_EQ(records[0].payload, "iptables -A INPUT -s 10.0.0.9 -j DROP");
  EXPECT_TRUE(records[0].outcome.ok());
  EXPECT_EQ(records[1].kind, ActionKind::Notify);
  EXPECT_TRUE(records[1].outcome.ok());
  EXPECT_NE(records[1].payload.find("10.0.0.9"), std::string::npos);
  EXPECT_EQ(records[2].kind, ActionKind::Log);
  EXPECT_TRUE(records[2].outcome.ok());

  EXPECT_TRUE(h.store.contains(kAlert.src_ip));
  EXPECT_EQ(slurp(h.dir / "blocklist.csv"), "10.0.0.9,1700000000000\n");
  EXPECT_EQ(slurp(h.dir / "alerts.log"), "ALERT ts_ns=26666666 src=10.0.0.9 count=801 window=0\n");
  EXPECT_EQ(h.executor.commands(), std::vector<std::string>{"iptables -A INPUT -s 10.0.0.9 -j DROP"});
  EXPECT_EQ(h.notifier.sent().size(), 1u);
}

TEST(HandleAlertTest, DuplicateAlertIsIgnored) {
  Harness h;
  ASSERT_EQ(handle_alert(kAlert, h.ctx).size(), 3u);
  EXPECT_TRUE(handle_alert(kAlert, h.ctx).empty());
  EXPECT_EQ(h.executor.commands().size(), 1u);
  EXPECT_EQ(h.notifier.sent().size(), 1u);
}

TEST(HandleAlertTest, DedupSurvivesRestart) {
  TempDir dir;
  {
    BlocklistStore store(dir / "bl.csv");
    MockFirewallExecutor ex;
    MockNotifier nt;
    AlertLog log;
    ResponseContext ctx{store, ex, nt, log};
    handle_alert(kAlert, ctx);
  }
  BlocklistStore store(dir / "bl.csv");
  MockFirewallExecutor ex;
  MockNotifier nt;
  AlertLog log;
  ResponseContext ctx{store, ex, nt, log};
  EXPECT_TRUE(handle_alert(kAlert, ctx).empty());
  EXPECT_TRUE(ex.commands().empty());
  EXPECT_EQ(store.rules()[0].origin, RuleOrigin::LoadedFromDisk);
}

TEST(HandleAlertTest, UnreachableNotifierKeepsBlock) {
  TempDir dir;
  BlocklistStore store(dir / "bl.csv");
  MockFirewallExecutor executor;
  NotifierConfig cfg;
  cfg.url = "http://127.0.0.1:" + std::to_string(testing::closed_port()) + "/hook";
  WebhookNotifier notifier(cfg);
  AlertLog log;
  ResponseContext ctx{store, executor, notifier, log};

  const auto records = handle_alert(kAlert, ctx);
  ASSERT_EQ(records.size(), 3u);
  EXPECT_TRUE(records[0].outcome.ok());
  EXPECT_EQ(records[1].kind, ActionKind::Notify);
  EXPECT_FALSE(records[1].outcome.ok());
  EXPECT_TRUE(records[2].outcome.ok());
  EXPECT_TRUE(store.contains(kAlert.src_ip));
  EXPECT_EQ(load_blocklist(dir / "bl.csv").size(), 1u);
}

TEST(HandleAlertTest, FirewallFailureAbortsPersistence) {
  Harness h;
  h.executor.fail_with("permission denied");
  const auto records = handle_alert(kAlert, h.ctx);
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].kind, ActionKind::FirewallBlock);
  EXPECT_FALSE(records[0].outcome.ok());
  EXPECT_FALSE(h.store.contains(kAlert.src_ip));
  EXPECT_TRUE(h.notifier.sent().empty());
  EXPECT_FALSE(std::filesystem::exists(h.dir / "blocklist.csv"));
}

TEST(HandleAlertTest, StoreWriteFailureRaisesAfterBlock) {
  TempDir dir;
  BlocklistStore store(dir / "gone" / "bl.csv");
  MockFirewallExecutor executor;
  MockNotifier notifier;
  AlertLog log;
  ResponseContext ctx{store, executor, notifier, log};
  try {
    handle_alert(kAlert, ctx);
    FAIL() << "expected PersistenceError";
  } catch (const PersistenceError& e) {
    ASSERT_EQ(e.records().size(), 1u);
    EXPECT_EQ(e.records()[0].kind, ActionKind::FirewallBlock);
    EXPECT_TRUE(e.records()[0].outcome.ok());
  }
  EXPECT_TRUE(notifier.sent().empty());
}

TEST(HandleAlertTest, LogWriteFailureIsRecorded) {
  TempDir dir;
  BlocklistStore store;
  MockFirewallExecutor executor;
  MockNotifier notifier;
  AlertLog log(dir / "missing" / "alerts.log");
  ResponseContext ctx{store, executor, notifier, log};
  const auto records = handle_alert(kAlert, ctx);
  ASSERT_EQ(records.size(), 3u);
  EXPECT_FALSE(records[2].outcome.ok());
  EXPECT_TRUE(store.contains(kAlert.src_ip));
}

TEST(ControllerTest, DrainsQueueInOrder) {
  Harness h;
  Controller controller(h.ctx);
  controller.start();
  for (std::uint8_t i = 1; i <= 20; ++i) {
    ASSERT_TRUE(controller.enqueue(AlertEvent{Ipv4Addr(10, 1, 0, i), 801, 0, i}));
  }
  controller.enqueue(AlertEvent{Ipv4Addr(10, 1, 0, 1), 801, 5, 99});  // duplicate
  controller.stop();
  const auto handled = controller.handled();
  ASSERT_EQ(handled.size(), 21u);
  for (std::uint8_t i = 0; i < 20; ++i) {
    EXPECT_EQ(handled[i].alert.src_ip, Ipv4Addr(10, 1, 0, static_cast<std::uint8_t>(i + 1)));
    EXPECT_EQ(handled[i].records.size(), 3u);
  }
  EXPECT_TRUE(handled[20].records.empty());
  EXPECT_EQ(h.store.rules().size(), 20u);
  EXPECT_EQ(controller.overflow_count(), 0u);
}

TEST(ControllerTest, OverflowDropsNewestAndCounts) {
  Harness h;
  Controller controller(h.ctx, 4);
  // Not started: nothing drains, so the fifth and sixth pushes overflow.
  for (std::uint8_t i = 1; i <= 6; ++i) controller.enqueue(AlertEvent{Ipv4Addr(10, 2, 0, i), 2, 0, i});
  EXPECT_EQ(controller.overflow_count(), 2u);
  controller.start();
  controller.stop();
  const auto handled = controller.handled();
  ASSERT_EQ(handled.size(), 4u);
  EXPECT_EQ(handled.back().alert.src_ip, Ipv4Addr(10, 2, 0, 4));
}

TEST(ControllerTest, DefaultQueueCapacity) { EXPECT_EQ(Controller::kQueueCapacity, 1024u); }

} // namespace
} // namespace edgeguard
