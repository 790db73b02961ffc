#pragma once

// Pearson / Spearman correlation with seeded permutation p-values and a
// percentile bootstrap interval on Pearson r.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sna/error.hpp"
#include "sna/thread_pool.hpp"

namespace sna {

struct CorrelationReport {
  std::size_t n = 0;
  std::optional<double> pearson_r;
  std::optional<double> spearman_rho;
  std::optional<double> rho_squared;
  std::optional<double> p_pearson;
  std::optional<double> p_spearman;
  std::optional<std::pair<double, double>> bootstrap_ci;  // 95% percentile interval on pearson_r
  std::size_t n_resamples = 0;
  std::size_t n_degenerate_resamples = 0;  // resamples with zero variance, excluded from the interval
  std::size_t n_permutations = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

inline void to_json(nlohmann::json& j, const CorrelationReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  j = nlohmann::json{{"n", r.n},
                     {"pearson_r", opt(r.pearson_r)},
                     {"spearman_rho", opt(r.spearman_rho)},
                     {"rho_squared", opt(r.rho_squared)},
                     {"p_pearson", opt(r.p_pearson)},
                     {"p_spearman", opt(r.p_spearman)},
                     {"bootstrap_ci", nullptr},
                     {"n_resamples", r.n_resamples},
                     {"n_degenerate_resamples", r.n_degenerate_resamples},
                     {"n_permutations", r.n_permutations},
                     {"seed", r.seed},
                     {"warnings", r.warnings}};
  if (r.bootstrap_ci) j["bootstrap_ci"] = {r.bootstrap_ci->first, r.bootstrap_ci->second};
}

// Pearson r; empty when either coordinate has zero variance.
inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n != y.size() || n < 2) return std::nullopt;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// 1-based ranks; tied values share the mean of the ranks they span.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  const auto rx = average_ranks(x), ry = average_ranks(y);
  return pearson(rx, ry);
}

namespace detail {

// Independent generator per (seed, stream, purpose) so resamples can run in any order.
inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream, std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), purpose};
  return std::mt19937_64(seq);
}

// Uniform draw in [0, n) by 128-bit multiply-shift.
inline std::size_t bounded(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

// Linear-interpolated quantile of sorted data.
inline double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

struct CorrelateOptions {
  std::size_t n_resamples = 10000;
  std::size_t n_permutations = 10000;
  std::uint64_t seed = 42;
  std::size_t threads = 1;
};

// pairs are (baseline, improvement). Output is identical for any thread count.
inline CorrelationReport correlate(std::span<const std::pair<double, double>> pairs, const CorrelateOptions& opt = {}) {
  if (pairs.size() < 3) throw InputError("correlation needs at least 3 pairs", "pairs");
  const std::size_t n = pairs.size();
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = pairs[i].first;
    y[i] = pairs[i].second;
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw InputError("pairs must be finite", "pairs");
  }

  CorrelationReport rep;
  rep.n = n;
  rep.n_resamples = opt.n_resamples;
  rep.n_permutations = opt.n_permutations;
  rep.seed = opt.seed;
  rep.pearson_r = pearson(x, y);
  const auto rx = average_ranks(x), ry = average_ranks(y);
  rep.spearman_rho = pearson(rx, ry);
  if (rep.spearman_rho) rep.rho_squared = *rep.spearman_rho * *rep.spearman_rho;
  if (!rep.pearson_r) rep.warnings.push_back("pearson_r undefined: zero variance in a coordinate");
  if (!rep.spearman_rho) rep.warnings.push_back("spearman_rho undefined: zero variance in a coordinate");

  if (opt.n_permutations > 0 && (rep.pearson_r || rep.spearman_rho)) {
    std::vector<std::pair<bool, bool>> extreme(opt.n_permutations);
    parallel_for(opt.n_permutations, opt.threads, [&](std::size_t i) {
      auto rng = detail::stream_rng(opt.seed, i, 1);
      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      for (std::size_t k = n - 1; k > 0; --k) std::swap(perm[k], perm[detail::bounded(rng, k + 1)]);
      std::vector<double> py(n), pry(n);
      for (std::size_t k = 0; k < n; ++k) {
        py[k] = y[perm[k]];
        pry[k] = ry[perm[k]];
      }
      constexpr double kTol = 1e-12;
      if (rep.pearson_r) {
        const auto r = pearson(x, py);
        extreme[i].first = r && std::abs(*r) >= std::abs(*rep.pearson_r) - kTol;
      }
      if (rep.spearman_rho) {
        const auto r = pearson(rx, pry);
        extreme[i].second = r && std::abs(*r) >= std::abs(*rep.spearman_rho) - kTol;
      }
    });
    std::size_t cp = 0, cs = 0;
    for (const auto& [a, b] : extreme) {
      cp += a;
      cs += b;
    }
    const double denom = static_cast<double>(opt.n_permutations + 1);
    if (rep.pearson_r) rep.p_pearson = static_cast<double>(cp + 1) / denom;
    if (rep.spearman_rho) rep.p_spearman = static_cast<double>(cs + 1) / denom;
  }

  if (opt.n_resamples > 0 && rep.pearson_r) {
    std::vector<std::optional<double>> boot(opt.n_resamples);
    parallel_for(opt.n_resamples, opt.threads, [&](std::size_t i) {
      auto rng = detail::stream_rng(opt.seed, i, 2);
      std::vector<double> bx(n), by(n);
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = detail::bounded(rng, n);
        bx[k] = x[j];
        by[k] = y[j];
      }
      boot[i] = pearson(bx, by);
    });
    std::vector<double> values;
    values.reserve(boot.size());
    for (const auto& b : boot) {
      if (b) values.push_back(*b);
    }
    rep.n_degenerate_resamples = boot.size() - values.size();
    if (!values.empty()) {
      std::sort(values.begin(), values.end());
      rep.bootstrap_ci = {detail::quantile(values, 0.025), detail::quantile(values, 0.975)};
      if (*rep.pearson_r < rep.bootstrap_ci->first || *rep.pearson_r > rep.bootstrap_ci->second) {
        rep.warnings.push_back("pearson_r lies outside its bootstrap interval");
      }
    } else {
      rep.warnings.push_back("bootstrap interval undefined: every resample had zero variance");
    }
  }
  return rep;
}

}  // namespace sna
