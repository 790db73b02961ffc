#include <gtest/gtest.h>

#include <random>

#include "sna/analysis.hpp"

namespace sna {
namespace {

TEST(Improvement, ExactValues) {
  EXPECT_DOUBLE_EQ(*improvement(0.01, 0.03).improvement_pct, 200.0);
  EXPECT_DOUBLE_EQ(*improvement(0.2, 0.3).improvement_pct, 50.0);
  EXPECT_DOUBLE_EQ(*improvement(0.5, 0.25).improvement_pct, -50.0);
  EXPECT_DOUBLE_EQ(*improvement(0.4, 0.4).improvement_pct, 0.0);
}

TEST(Improvement, DecimalInputsGiveExactPercentages) {
  EXPECT_EQ(*improvement(0.02, 0.06).improvement_pct, 200.0);
  EXPECT_EQ(*improvement(0.08, 0.12).improvement_pct, 50.0);
  EXPECT_EQ(*improvement(0.2, 0.3).improvement_pct, 50.0);
  // (0.11 - 0.1) / 0.1 is 9.999999999999995 before rounding; the strict threshold still excludes it
  EXPECT_EQ(*improvement(0.1, 0.11).improvement_pct, 10.0);
  EXPECT_FALSE(in_golden_zone(improvement(0.1, 0.11)));
  EXPECT_TRUE(in_golden_zone(improvement(0.1, 0.1100001)));
}

TEST(Improvement, UndefinedAtZeroBaseline) {
  const auto r = improvement(0.0, 0.2);
  EXPECT_FALSE(r.improvement_pct);
  EXPECT_TRUE(nlohmann::json(r).at("improvement_pct").is_null());
  EXPECT_EQ(nlohmann::json(r).get<ImprovementRecord>(), r);
}

TEST(Improvement, RejectsOutOfRange) {
  EXPECT_THROW(improvement(-0.1, 0.2), InputError);
  EXPECT_THROW(improvement(0.1, 1.2), InputError);
  EXPECT_THROW(improvement(std::nan(""), 0.2), InputError);
}

TEST(Improvement, MonotoneInPostAndScaleInvariant) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.001, 0.5);
  for (int i = 0; i < 200; ++i) {
    const double b = u(rng), p1 = u(rng), p2 = u(rng), s = 1.0 + u(rng);
    const double i1 = *improvement(b, p1).improvement_pct, i2 = *improvement(b, p2).improvement_pct;
    EXPECT_EQ(p1 < p2, i1 < i2);
    EXPECT_NEAR(*improvement(b * s, p1 * s).improvement_pct, i1, 1e-9 * std::max(1.0, std::abs(i1)));
  }
}

TEST(Margin, Values) {
  EXPECT_DOUBLE_EQ(*margin(0.8, 0.2).margin, 0.6);
  EXPECT_DOUBLE_EQ(*margin(0.2, 0.8).margin, 0.6);
  EXPECT_DOUBLE_EQ(*margin(0.3, 0.3).margin, 0.0);
  EXPECT_FALSE(margin(0.0, 0.0).margin);
  EXPECT_THROW(margin(-0.1, 0.2), InputError);
  // scale invariant: only the ratio matters
  EXPECT_NEAR(*margin(0.008, 0.002).margin, 0.6, 1e-12);
}

TEST(Zones, BoundariesAreClosedOnTheMiddleZone) {
  EXPECT_EQ(classify_zone(0.0).zone, 1);
  EXPECT_EQ(classify_zone(0.0699).zone, 1);
  EXPECT_EQ(classify_zone(0.07).zone, 2);
  EXPECT_EQ(classify_zone(0.085).zone, 2);
  EXPECT_EQ(classify_zone(0.10).zone, 2);
  EXPECT_EQ(classify_zone(0.1001).zone, 3);
  EXPECT_EQ(classify_zone(0.9).zone, 3);
}

TEST(Zones, MarginDefaults) {
  const auto t = ZoneThresholds::margin_defaults();
  EXPECT_EQ(classify_zone(0.29, t).zone, 1);
  EXPECT_EQ(classify_zone(0.30, t).zone, 2);
  EXPECT_EQ(classify_zone(0.60, t).zone, 2);
  EXPECT_EQ(classify_zone(0.61, t).zone, 3);
}

TEST(Zones, CustomThresholdsAndInterpretation) {
  const ZoneThresholds t{0.2, 0.5, MetricKind::absolute_probability};
  const auto z = classify_zone(0.15, t);
  EXPECT_EQ(z.zone, 1);
  EXPECT_EQ(z.thresholds, t);
  EXPECT_FALSE(z.interpretation.empty());
  EXPECT_NE(classify_zone(0.3, t).interpretation, z.interpretation);
  EXPECT_THROW(classify_zone(0.1, {0.5, 0.2, MetricKind::absolute_probability}), InputError);
  EXPECT_THROW(classify_zone(-0.1), InputError);
}

TEST(Zones, ThresholdJson) {
  const auto t = nlohmann::json::parse(R"({"metric":"margin"})").get<ZoneThresholds>();
  EXPECT_EQ(t, ZoneThresholds::margin_defaults());
  const auto u = nlohmann::json::parse(R"({"t_low":0.05})").get<ZoneThresholds>();
  EXPECT_EQ(u.t_low, 0.05);
  EXPECT_EQ(u.t_high, 0.10);
  EXPECT_EQ(nlohmann::json(t).get<ZoneThresholds>(), t);
  EXPECT_THROW(nlohmann::json::parse(R"({"metric":"auc"})").get<ZoneThresholds>(), InputError);
}

TEST(Aggregates, SuccessRateAndGoldenZone) {
  const std::vector<ImprovementRecord> r{improvement(0.1, 0.2), improvement(0.1, 0.105), improvement(0.1, 0.05),
                                         improvement(0.0, 0.3)};
  EXPECT_EQ(undefined_count(r), 1u);
  EXPECT_DOUBLE_EQ(success_rate(r), 2.0 / 3.0);
  EXPECT_EQ(golden_zone_count(r), 1u);
  // exactly 10% is not golden
  const std::vector<ImprovementRecord> edge{{0.5, 0.55, 10.0}};
  EXPECT_EQ(golden_zone_count(edge), 0u);
  EXPECT_THROW(success_rate(std::vector<ImprovementRecord>{}), InputError);
  EXPECT_THROW(success_rate(std::vector<ImprovementRecord>{improvement(0.0, 0.1)}), InputError);
}

}  // namespace
}  // namespace sna
