#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "iwast/energy_model.hpp"
#include "iwast/error.hpp"
#include "oracles.hpp"

using namespace iwast;
using namespace iwast::energy;

TEST(Profile, TableValues) {
  const PowerProfile p;
  EXPECT_DOUBLE_EQ(p.motherboard.active_charge_uC(), 25400.0 * 7.0);
  EXPECT_DOUBLE_EQ(p.button.active_charge_uC(), 14600.0);
  EXPECT_DOUBLE_EQ(p.microphone.active_charge_uC(), 2000.0);
  EXPECT_DOUBLE_EQ(p.power_light.active_charge_uC(), 112.0);
  EXPECT_NEAR(p.env_fine.cycle_charge_uC(), 26844.5, 1e-9);
  EXPECT_FALSE(p.environmental.sleep_uA);
}

TEST(Ledger, ChainsAndLabels) {
  EnergyLedger l;
  const auto ch = l.add_channel("mb", 55.0, "sleep");
  l.transition(ch, 10.0, 25400.0, "uplink");
  l.transition(ch, 17.0, 55.0, "sleep");
  l.close(20.0);
  const auto ivs = l.intervals(ch);
  ASSERT_EQ(ivs.size(), 3u);
  for (std::size_t i = 1; i < ivs.size(); ++i) EXPECT_DOUBLE_EQ(ivs[i - 1].t1, ivs[i].t0);
  EXPECT_DOUBLE_EQ(l.charge_by_label(ch).at("uplink"), 25400.0 * 7.0);
  EXPECT_DOUBLE_EQ(l.charge_by_label(ch).at("sleep"), 55.0 * 13.0);
  EXPECT_THROW(l.transition(ch, 21.0, 0.0, "x"), std::exception);
}

TEST(Ledger, RejectsBackwardsTransition) {
  EnergyLedger l;
  const auto ch = l.add_channel("a", 1.0, "idle");
  l.transition(ch, 5.0, 2.0, "busy");
  EXPECT_THROW(l.transition(ch, 4.0, 1.0, "idle"), std::exception);
}

TEST(Integrate, ExactOverlap) {
  EnergyLedger l;
  const auto a = l.add_channel("a", 100.0, "x");
  const auto b = l.add_channel("b", 10.0, "y");
  l.transition(a, 2.0, 300.0, "z");
  l.transition(b, 1.5, 0.0, "off");
  l.close(4.0);
  const auto full = integrate(l, 0.0, 4.0);
  EXPECT_NEAR(full.per_board.at("a").uAh * 3600.0, 100.0 * 2 + 300.0 * 2, 1e-9);
  EXPECT_NEAR(full.per_board.at("b").uAh * 3600.0, 15.0, 1e-9);
  const auto part = integrate(l, 1.0, 3.0);
  EXPECT_NEAR(part.total.uAh * 3600.0, 100.0 + 300.0 + 5.0, 1e-9);
  EXPECT_NEAR(part.total.mJ, 405.0 * 3.3 / 1000.0, 1e-12);
  EXPECT_THROW(integrate(l, -1.0, 2.0), Error);
  EXPECT_THROW(integrate(l, 0.0, 5.0), Error);
}

TEST(Integrate, MatchesMillisecondRiemannSum) {
  std::mt19937 rng(9);
  for (int trial = 0; trial < 3; ++trial) {
    EnergyLedger l;
    std::vector<ChannelId> chans;
    for (int c = 0; c < 4; ++c) chans.push_back(l.add_channel("c" + std::to_string(c), 55.0, "base"));
    const double horizon = 2 * 3600.0;
    for (auto ch : chans) {
      double t = 0.0;
      std::uniform_real_distribution<double> gap(5.0, 120.0), dur(0.028, 7.0), cur(100.0, 26000.0);
      while (true) {
        t += gap(rng);
        const double end = t + dur(rng);
        if (end >= horizon) break;
        l.transition(ch, t, cur(rng), "active");
        l.transition(ch, end, 55.0, "base");
        t = end;
      }
    }
    l.close(horizon);
    const double exact = integrate(l, 0.0, horizon).total.uAh * 3600.0;
    const double brute = oracle::riemann_uAs(l, 0.0, horizon);
    EXPECT_NEAR(exact, brute, exact * 1e-4) << "trial " << trial;
  }
}

TEST(Battery, DepletionOffsetAndLifetimeQuotient) {
  Battery b;
  const double draw = 55.0 + 3.2;
  const double hours = 500000.0 / draw;
  EXPECT_NEAR(hours, 8591.07, 0.01);
  auto off = b.advance(draw, 0.0, 8000 * 3600.0);
  EXPECT_FALSE(off);
  off = b.advance(draw, 0.0, 1000 * 3600.0);
  ASSERT_TRUE(off);
  EXPECT_NEAR((8000 * 3600.0 + *off) / 3600.0, hours, 1e-6);
  EXPECT_TRUE(b.depleted());
  EXPECT_DOUBLE_EQ(b.voltage_mV(), 3300.0);
}

TEST(Battery, HarvestClampsAtCapacity) {
  Battery b(1000.0, 999.0);
  EXPECT_FALSE(b.advance(0.0, 3600.0, 1.0));
  EXPECT_DOUBLE_EQ(b.charge_uAh(), 1000.0);
  EXPECT_NEAR(b.spilled_uAh(), 0.0, 1e-12);
  b.advance(0.0, 3600.0, 1.0);
  EXPECT_NEAR(b.spilled_uAh(), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(b.voltage_mV(), 4200.0);
}

TEST(Harvest, LinearAndCapped) {
  HarvestModel m;
  EXPECT_DOUBLE_EQ(m.current_uA(0.0), 0.0);
  EXPECT_DOUBLE_EQ(m.current_uA(100.0), 8.0);
  EXPECT_DOUBLE_EQ(m.current_uA(1e9), 4000.0);
  EXPECT_DOUBLE_EQ(harvest(100.0, 3600.0), 8.0);
}

TEST(Report, BreakdownAndComparisonOrder) {
  EnergyLedger l;
  const auto mb = l.add_channel("motherboard", 55.0, "sleep");
  l.transition(mb, 100.0, 25400.0, "uplink");
  l.transition(mb, 107.0, 55.0, "sleep");
  l.close(3600.0);
  auto r = power_report(l, {{"scenario", "t"}});
  ASSERT_EQ(r.boards.size(), 1u);
  const double expected_uAs = 55.0 * 3593.0 + 25400.0 * 7.0;
  EXPECT_NEAR(r.total_uAh * 3600.0, expected_uAs, 1e-6);
  ASSERT_TRUE(r.projected_lifetime_h);
  EXPECT_NEAR(*r.projected_lifetime_h, 500000.0 / (expected_uAs / 3600.0), 1e-6);
  double shares = 0.0;
  for (const auto& s : r.boards[0].labels) shares += s.share;
  EXPECT_NEAR(shares, 1.0, 1e-12);

  attach_comparison(r, {{"busy", 900.0, 900.0, 555.0}, {"idle", 60.0, 60.0, 8333.0}});
  ASSERT_EQ(r.comparison.size(), 2u);
  EXPECT_EQ(r.comparison[0].name, "idle");
  const auto j = to_json(r);
  EXPECT_EQ(j.at("report_version"), 1);
  EXPECT_EQ(j.at("comparison")[0].at("name"), "idle");
  EXPECT_NE(to_table(r).find("motherboard"), std::string::npos);
}
