#pragma once

// Zone classification and the per-configuration evaluation metrics.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sna/error.hpp"

namespace sna {

enum class MetricKind { absolute_probability, confidence_margin };

inline const char* to_string(MetricKind k) {
  return k == MetricKind::absolute_probability ? "absolute_probability" : "confidence_margin";
}

inline MetricKind metric_kind_from_string(const std::string& s) {
  if (s == "absolute_probability" || s == "prob") return MetricKind::absolute_probability;
  if (s == "confidence_margin" || s == "margin") return MetricKind::confidence_margin;
  throw InputError("unknown metric kind '" + s + "' (expected prob or margin)", "metric");
}

struct ZoneThresholds {
  double t_low = 0.07;
  double t_high = 0.10;
  MetricKind metric = MetricKind::absolute_probability;

  static ZoneThresholds absolute_defaults() { return {0.07, 0.10, MetricKind::absolute_probability}; }
  static ZoneThresholds margin_defaults() { return {0.30, 0.60, MetricKind::confidence_margin}; }
  static ZoneThresholds defaults_for(MetricKind k) {
    return k == MetricKind::absolute_probability ? absolute_defaults() : margin_defaults();
  }

  void validate() const {
    if (!(t_low > 0.0 && t_low < t_high && t_high < 1.0)) {
      throw InputError("zone thresholds must satisfy 0 < t_low < t_high < 1", "thresholds");
    }
  }

  bool operator==(const ZoneThresholds&) const = default;
};

inline void to_json(nlohmann::json& j, const ZoneThresholds& t) {
  j = nlohmann::json{{"t_low", t.t_low}, {"t_high", t.t_high}, {"metric", to_string(t.metric)}};
}

inline void from_json(const nlohmann::json& j, ZoneThresholds& t) {
  const MetricKind kind =
      j.contains("metric") ? metric_kind_from_string(j.at("metric").get<std::string>()) : MetricKind::absolute_probability;
  t = ZoneThresholds::defaults_for(kind);
  if (j.contains("t_low")) t.t_low = j.at("t_low").get<double>();
  if (j.contains("t_high")) t.t_high = j.at("t_high").get<double>();
  t.validate();
}

struct ZoneAssignment {
  int zone = 1;
  double value = 0.0;
  ZoneThresholds thresholds;
  std::string interpretation;
};

inline const char* zone_interpretation(int zone) {
  switch (zone) {
    case 1:
      return "large gains likely (observed mean 27.85%)";
    case 2:
      return "transition region, outcome unstable";
    default:
      return "saturated, gains rarely exceed ~7%";
  }
}

inline void to_json(nlohmann::json& j, const ZoneAssignment& z) {
  j = nlohmann::json{{"zone", z.zone}, {"value", z.value}, {"thresholds", z.thresholds},
                     {"interpretation", z.interpretation}};
}

inline void from_json(const nlohmann::json& j, ZoneAssignment& z) {
  z.zone = j.at("zone").get<int>();
  z.value = j.at("value").get<double>();
  z.thresholds = j.at("thresholds").get<ZoneThresholds>();
  z.interpretation = j.at("interpretation").get<std::string>();
}

// Zone 1 below t_low, zone 2 on the closed interval [t_low, t_high], zone 3 above.
inline ZoneAssignment classify_zone(double value, const ZoneThresholds& t = ZoneThresholds::absolute_defaults()) {
  t.validate();
  if (!(value >= 0.0)) throw InputError("zone value must be non-negative", "value");
  const int zone = value < t.t_low ? 1 : (value <= t.t_high ? 2 : 3);
  return {zone, value, t, zone_interpretation(zone)};
}

struct ImprovementRecord {
  double p_base = 0.0;
  double p_post = 0.0;
  std::optional<double> improvement_pct;  // empty when p_base == 0

  bool operator==(const ImprovementRecord&) const = default;
};

inline void to_json(nlohmann::json& j, const ImprovementRecord& r) {
  j = nlohmann::json{{"p_base", r.p_base}, {"p_post", r.p_post}, {"improvement_pct", nullptr}};
  if (r.improvement_pct) j["improvement_pct"] = *r.improvement_pct;
}

inline void from_json(const nlohmann::json& j, ImprovementRecord& r) {
  r.p_base = j.at("p_base").get<double>();
  r.p_post = j.at("p_post").get<double>();
  r.improvement_pct.reset();
  if (!j.at("improvement_pct").is_null()) r.improvement_pct = j.at("improvement_pct").get<double>();
}

namespace detail {

// Rounds to 12 significant digits. Probabilities written as short decimals then give
// their decimal percentages exactly (0.02 -> 0.06 is 200, not 199.99999999999994).
inline double round_significant(double x) {
  if (x == 0.0 || !std::isfinite(x)) return x;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return std::strtod(buf, nullptr);
}

}  // namespace detail

inline ImprovementRecord improvement(double p_base, double p_post) {
  auto unit = [](double p, const char* field) {
    if (!(p >= 0.0 && p <= 1.0)) throw InputError(std::string(field) + " must lie in [0, 1]", field);
  };
  unit(p_base, "p_base");
  unit(p_post, "p_post");
  ImprovementRecord r{p_base, p_post, std::nullopt};
  if (p_base > 0.0) r.improvement_pct = detail::round_significant((p_post - p_base) / p_base * 100.0);
  return r;
}

struct MarginRecord {
  double p_pos = 0.0;
  double p_neg = 0.0;
  std::optional<double> margin;  // empty when both probabilities are 0
};

inline void to_json(nlohmann::json& j, const MarginRecord& r) {
  j = nlohmann::json{{"p_pos", r.p_pos}, {"p_neg", r.p_neg}, {"margin", nullptr}};
  if (r.margin) j["margin"] = *r.margin;
}

inline MarginRecord margin(double p_pos, double p_neg) {
  if (!(p_pos >= 0.0)) throw InputError("p_pos must be non-negative", "p_pos");
  if (!(p_neg >= 0.0)) throw InputError("p_neg must be non-negative", "p_neg");
  MarginRecord r{p_pos, p_neg, std::nullopt};
  const double denom = p_pos + p_neg;
  if (denom > 0.0) r.margin = std::abs(p_pos - p_neg) / denom;
  return r;
}

inline constexpr double kGoldenZoneThresholdPct = 10.0;

inline bool in_golden_zone(const ImprovementRecord& r, double threshold_pct = kGoldenZoneThresholdPct) {
  return r.improvement_pct && *r.improvement_pct > threshold_pct;
}

namespace detail {

inline std::size_t count_defined(std::span<const ImprovementRecord> records) {
  if (records.empty()) throw InputError("no improvement records", "improvements");
  std::size_t n = 0;
  for (const auto& r : records) n += r.improvement_pct.has_value();
  return n;
}

}  // namespace detail

inline std::size_t undefined_count(std::span<const ImprovementRecord> records) {
  return records.size() - detail::count_defined(records);
}

// Fraction of defined records with strictly positive improvement.
inline double success_rate(std::span<const ImprovementRecord> records) {
  const std::size_t defined = detail::count_defined(records);
  if (defined == 0) throw InputError("every improvement record is undefined (zero baseline)", "improvements");
  std::size_t positive = 0;
  for (const auto& r : records) positive += r.improvement_pct && *r.improvement_pct > 0.0;
  return static_cast<double>(positive) / static_cast<double>(defined);
}

// Records with improvement strictly above 10%.
inline std::size_t golden_zone_count(std::span<const ImprovementRecord> records,
                                     double threshold_pct = kGoldenZoneThresholdPct) {
  detail::count_defined(records);
  std::size_t n = 0;
  for (const auto& r : records) n += in_golden_zone(r, threshold_pct);
  return n;
}

}  // namespace sna
