#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <json.hpp>

#include "roadsense/error.hpp"
#include "roadsense/graph.hpp"

namespace roadsense {

struct Metrics {
  double mse = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
  double mape_pct = 0.0;
  std::size_t mape_excluded = 0;  // indices with y < floor
  std::size_t count = 0;

  bool operator==(const Metrics&) const = default;
};

inline nlohmann::json to_json(const Metrics& m) {
  return {{"mse", m.mse},           {"rmse", m.rmse},
          {"mae", m.mae},           {"mape_pct", m.mape_pct},
          {"mape_excluded", m.mape_excluded}, {"count", m.count}};
}

/// MAPE skips targets below `mape_floor` and reports how many it skipped.
inline Metrics compute_metrics(const std::vector<double>& y, const std::vector<double>& y_hat, double mape_floor = 1.0) {
  if (y.size() != y_hat.size()) fail(ErrorCode::LengthMismatch, "y and y_hat differ in length");
  if (y.empty()) fail(ErrorCode::LengthMismatch, "metrics need at least one value");
  Metrics m;
  m.count = y.size();
  double se = 0.0, ae = 0.0, pe = 0.0;
  std::size_t kept = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y_hat[i] - y[i];
    se += e * e;
    ae += std::abs(e);
    if (y[i] >= mape_floor) {
      pe += std::abs(e) / std::abs(y[i]);
      ++kept;
    }
  }
  if (kept == 0) fail(ErrorCode::AllExcludedFromMAPE, "every target is below the MAPE floor");
  const auto n = static_cast<double>(y.size());
  m.mse = se / n;
  m.rmse = std::sqrt(m.mse);
  m.mae = ae / n;
  m.mape_pct = 100.0 * pe / static_cast<double>(kept);
  m.mape_excluded = y.size() - kept;
  if (!std::isfinite(m.mse) || !std::isfinite(m.mae)) fail(ErrorCode::NonFiniteValue, "non-finite metric");
  return m;
}

/// Metrics restricted to `nodes`.
inline Metrics compute_metrics(const std::vector<double>& y, const std::vector<double>& y_hat,
                               const std::vector<NodeId>& nodes, double mape_floor = 1.0) {
  std::vector<double> a, b;
  for (NodeId i : nodes) {
    a.push_back(y.at(i));
    b.push_back(y_hat.at(i));
  }
  return compute_metrics(a, b, mape_floor);
}

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
  std::size_t n = 0;
};

inline Summary summarize(const std::vector<double>& v) {
  Summary s;
  s.n = v.size();
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool excludes_zero() const { return lo > 0.0 || hi < 0.0; }
};

/// Percentile bootstrap interval for the mean of `v`.
inline Interval bootstrap_mean_ci(const std::vector<double>& v, double level = 0.95, std::size_t resamples = 10000,
                                  std::uint64_t seed = 0) {
  if (v.empty()) fail(ErrorCode::LengthMismatch, "bootstrap needs at least one value");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, v.size() - 1);
  std::vector<double> means(resamples);
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += v[pick(rng)];
    m = s / static_cast<double>(v.size());
  }
  std::sort(means.begin(), means.end());
  const double tail = (1.0 - level) / 2.0;
  auto at = [&](double q) {
    const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(resamples - 1)));
    return means[std::min(idx, resamples - 1)];
  };
  return {at(tail), at(1.0 - tail)};
}

}  // namespace roadsense
