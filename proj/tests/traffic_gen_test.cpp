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

#include <algorithm>
#include <fstream>
#include <random>

#include "edgeguard/traffic_gen.hpp"
#include "test_util.hpp"

namespace edgeguard {
namespace {

const Ipv4Addr kVictim{10, 0, 0, 1};

Ipv4Addr src_of(const RawFrame& f) { return std::get<ParsedPacket>(parse_frame(f)).src_ip; }

TEST(GenerateScenarioTest, UniformSpacing) {
  const ScenarioConfig cfg{"one", {{Ipv4Addr(10, 0, 0, 7), kVictim, 10, 0, 1000, 0, FlowRole::Benign}}};
  const auto frames = generate_scenario(cfg);
  ASSERT_EQ(frames.size(), 10u);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    EXPECT_EQ(frames[i].ts_ns, i * 100'000'000ULL);
    EXPECT_EQ(frames[i].bytes.size(), 42u);
  }
}

TEST(GenerateScenarioTest, StartOffsetAndFlooredSpacing) {
  const ScenarioConfig cfg{"x", {{Ipv4Addr(1, 1, 1, 1), kVictim, 3, 250, 1000, 0, FlowRole::Benign}}};
  const auto frames = generate_scenario(cfg);
  ASSERT_EQ(frames.size(), 3u);
  EXPECT_EQ(frames[0].ts_ns, 250'000'000u);
  EXPECT_EQ(frames[1].ts_ns, 250'000'000u + 333'333'333u);
  EXPECT_EQ(frames[2].ts_ns, 250'000'000u + 666'666'666u);
}

TEST(GenerateScenarioTest, TiesOrderedBySourceAddress) {
  const ScenarioConfig cfg{"tie",
                           {{Ipv4Addr(10, 0, 0, 9), kVictim, 1, 0, 1000, 0, FlowRole::Attacker},
                            {Ipv4Addr(10, 0, 0, 2), kVictim, 1, 0, 1000, 0, FlowRole::Benign}}};
  const auto frames = generate_scenario(cfg);
  ASSERT_EQ(frames.size(), 2u);
  EXPECT_EQ(src_of(frames[0]), Ipv4Addr(10, 0, 0, 2));
  EXPECT_EQ(src_of(frames[1]), Ipv4Addr(10, 0, 0, 9));
}

TEST(GenerateScenarioTest, ThirtyThousandPpsForOneSecond) {
  const ScenarioConfig cfg{"flood", {{Ipv4Addr(10, 0, 0, 9), kVictim, 30'000, 0, 1000, 18, FlowRole::Attacker}}};
  const auto frames = generate_scenario(cfg);
  EXPECT_EQ(frames.size(), 30'000u);
  EXPECT_EQ(frames[800].ts_ns, 26'666'666u);
}

TEST(GenerateScenarioTest, EmptyFlowListIsConfigError) {
  EXPECT_THROW(generate_scenario(ScenarioConfig{"empty", {}}), ConfigError);
}

TEST(GenerateScenarioTest, InvalidFlowIsConfigError) {
  EXPECT_THROW(generate_scenario({"z", {{Ipv4Addr(1, 1, 1, 1), kVictim, 0, 0, 1000, 0, FlowRole::Benign}}}),
               ConfigError);
  EXPECT_THROW(generate_scenario({"z", {{Ipv4Addr(1, 1, 1, 1), kVictim, 1, 0, 0, 0, FlowRole::Benign}}}),
               ConfigError);
  EXPECT_THROW(generate_scenario({"z", {{Ipv4Addr(1, 1, 1, 1), kVictim, 1, 0, 10, 5000, FlowRole::Benign}}}),
               ConfigError);
}

TEST(BuiltinScenariosTest, BuiltIns) {
  const auto all = builtin_scenarios();
  ASSERT_EQ(all.size(), 3u);

  const auto& pi = all.at("pi-flood");
  std::uint64_t attacker_frames = 0;
  for (const auto& f : pi.flows) {
    if (f.role == FlowRole::Attacker) attacker_frames += f.packet_count();
  }
  EXPECT_EQ(attacker_frames, 300'000u);

  const auto& docker = all.at("docker-flood");
  const auto attacker = std::find_if(docker.flows.begin(), docker.flows.end(),
                                     [](const FlowSpec& f) { return f.role == FlowRole::Attacker; });
  ASSERT_NE(attacker, docker.flows.end());
  EXPECT_EQ(attacker->rate_pps, 100'000u);
  EXPECT_EQ(attacker->duration_ms, 10'000u);

  const auto& benign = all.at("benign-only");
  EXPECT_TRUE(std::none_of(benign.flows.begin(), benign.flows.end(),
                           [](const FlowSpec& f) { return f.role == FlowRole::Attacker; }));
  EXPECT_EQ(benign.flows.at(0).rate_pps, 100u);
}

TEST(ScenarioRolesTest, AttackerWinsOnSharedSource) {
  const ScenarioConfig cfg{"s",
                           {{Ipv4Addr(1, 1, 1, 1), kVictim, 1, 0, 1000, 0, FlowRole::Benign},
                            {Ipv4Addr(1, 1, 1, 1), kVictim, 1, 0, 1000, 0, FlowRole::Attacker},
                            {Ipv4Addr(2, 2, 2, 2), kVictim, 1, 0, 1000, 0, FlowRole::Benign}}};
  const auto roles = scenario_roles(cfg);
  EXPECT_EQ(roles.at(Ipv4Addr(1, 1, 1, 1)), FlowRole::Attacker);
  EXPECT_EQ(roles.at(Ipv4Addr(2, 2, 2, 2)), FlowRole::Benign);
}

TEST(ScenarioJsonTest, RoundTripThroughFile) {
  testing::TempDir dir;
  const auto original = builtin_scenarios().at("pi-flood");
  {
    std::ofstream(dir / "s.json") << to_json(original).dump(2);
  }
  EXPECT_EQ(load_scenario(dir / "s.json"), original);
}

TEST(ScenarioJsonTest, BadDocuments) {
  EXPECT_THROW(scenario_from_json(nlohmann::json::parse(R"({"label":"x"})")), FormatError);
  EXPECT_THROW(scenario_from_json(nlohmann::json::parse(
                   R"({"flows":[{"src_ip":"10.0.0","dst_ip":"1.1.1.1","rate_pps":1,"duration_ms":1,"role":"benign"}]})")),
               InputError);
  EXPECT_THROW(scenario_from_json(nlohmann::json::parse(
                   R"({"flows":[{"src_ip":"1.1.1.2","dst_ip":"1.1.1.1","rate_pps":1,"duration_ms":1,"role":"villain"}]})")),
               InputError);
  EXPECT_THROW(scenario_from_json(nlohmann::json::parse(R"({"flows":[]})")), ConfigError);
  EXPECT_THROW(load_scenario("/nonexistent/edgeguard.json"), IoError);
}

TEST(GenerateScenarioProperty, DeterministicOrderedAndExactCounts) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    ScenarioConfig cfg{"rand", {}};
    const std::size_t flows = 1 + rng() % 5;
    for (std::size_t i = 0; i < flows; ++i) {
      cfg.flows.push_back({Ipv4Addr(10, 0, 0, static_cast<std::uint8_t>(1 + rng() % 4)), kVictim,
                           1 + rng() % 3000, rng() % 2000, 1 + rng() % 1500, rng() % 64,
                           rng() % 2 ? FlowRole::Attacker : FlowRole::Benign});
    }
    const auto a = generate_scenario(cfg);
    const auto b = generate_scenario(cfg);
    ASSERT_EQ(a, b);

    std::size_t expected = 0;
    for (const auto& f : cfg.flows) expected += f.rate_pps * f.duration_ms / 1000;
    ASSERT_EQ(a.size(), expected);
    ASSERT_TRUE(std::is_sorted(a.begin(), a.end(),
                               [](const RawFrame& x, const RawFrame& y) { return x.ts_ns < y.ts_ns; }));
    for (std::size_t i = 1; i < a.size(); ++i) {
      if (a[i].ts_ns == a[i - 1].ts_ns) {
        ASSERT_LE(src_of(a[i - 1]), src_of(a[i]));
      }
    }
  }
}

} // namespace
} // namespace edgeguard
