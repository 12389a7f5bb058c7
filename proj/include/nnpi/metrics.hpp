#pragma once

// Hard prediction-interval quality metrics and reporting statistics.

#include "nnpi/core.hpp"
#include "nnpi/data.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace nnpi {

struct PIQuality {
  double picp = 0.0;
  double mpiw = 0.0;
  double nmpiw = 0.0;
  double crossing_rate = 0.0;
};

namespace detail {

inline void check_batch(const Vector& y, const IntervalBatch& iv) {
  if (y.size() == 0) throw EmptyInputError("metric over an empty batch");
  if (iv.lower.size() != y.size() || iv.upper.size() != y.size())
    throw ShapeError("labels and interval bounds differ in length");
}

}  // namespace detail

/// k_i = 1 iff L_i <= y_i <= U_i. Crossed intervals never cover.
inline Vector capture_mask(const Vector& y, const IntervalBatch& iv) {
  detail::check_batch(y, iv);
  return ((iv.lower.array() <= y.array()) && (y.array() <= iv.upper.array())).cast<double>();
}

inline double picp(const Vector& y, const IntervalBatch& iv) {
  return capture_mask(y, iv).mean();
}

/// Mean of U - L over all rows. Crossed bounds contribute negative widths.
inline double mpiw(const IntervalBatch& iv) {
  if (iv.size() == 0) throw EmptyInputError("mpiw of an empty batch");
  if (iv.upper.size() != iv.lower.size()) throw ShapeError("bound vectors differ in length");
  return (iv.upper - iv.lower).mean();
}

inline double nmpiw(double mpiw_value, double range) {
  if (!(range > 0.0)) throw ConfigError("target range R must be positive");
  return mpiw_value / range;
}

inline double crossing_rate(const IntervalBatch& iv) {
  if (iv.size() == 0) throw EmptyInputError("crossing_rate of an empty batch");
  return (iv.lower.array() > iv.upper.array()).cast<double>().mean();
}

inline PIQuality assess(const Vector& y, const IntervalBatch& iv, double range) {
  PIQuality q;
  q.picp = picp(y, iv);
  q.mpiw = mpiw(iv);
  q.nmpiw = nmpiw(q.mpiw, range);
  q.crossing_rate = crossing_rate(iv);
  return q;
}

inline PIQuality mean_quality(const std::vector<PIQuality>& qs) {
  if (qs.empty()) throw EmptyInputError("mean of no quality records");
  PIQuality m;
  for (const auto& q : qs) {
    m.picp += q.picp;
    m.mpiw += q.mpiw;
    m.nmpiw += q.nmpiw;
    m.crossing_rate += q.crossing_rate;
  }
  const double n = static_cast<double>(qs.size());
  m.picp /= n;
  m.mpiw /= n;
  m.nmpiw /= n;
  m.crossing_rate /= n;
  return m;
}

// ---------------------------------------------------------------------------

struct LevelBounds {
  double level = 0.0;
  double mean_lower = 0.0;
  double mean_upper = 0.0;
  std::size_t count = 0;
};

struct LevelTable {
  std::vector<LevelBounds> rows;
  std::vector<std::string> warnings;
};

/// Mean lower/upper bound per target level. Labels are binned to the nearest
/// level (exact for integer-level targets); empty levels are omitted.
inline LevelTable per_level_bounds(const Vector& y, const IntervalBatch& iv,
                                   const std::vector<double>& levels) {
  detail::check_batch(y, iv);
  if (levels.empty()) throw ConfigError("per_level_bounds needs at least one level");
  std::vector<LevelBounds> acc(levels.size());
  for (std::size_t l = 0; l < levels.size(); ++l) acc[l].level = levels[l];
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    auto& a = acc[nearest_level(y[i], levels)];
    a.mean_lower += iv.lower[i];
    a.mean_upper += iv.upper[i];
    ++a.count;
  }
  LevelTable table;
  for (auto& a : acc) {
    if (a.count == 0) {
      table.warnings.push_back("no observations at level " + format_double(a.level));
      continue;
    }
    a.mean_lower /= static_cast<double>(a.count);
    a.mean_upper /= static_cast<double>(a.count);
    table.rows.push_back(a);
  }
  return table;
}

// ---------------------------------------------------------------------------

struct DistanceStats {
  std::vector<double> distances;  // (0,1), (0,2), ..., (m-2, m-1)
  double mean = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  std::size_t outliers = 0;  // beyond 1.5 IQR from the quartiles
};

/// Quantile with linear interpolation between order statistics.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw EmptyInputError("quantile of empty sample");
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline DistanceStats pairwise_distance_stats(const std::vector<SubjectProfile>& profiles) {
  if (profiles.size() < 2) throw EmptyInputError("pairwise distances need at least 2 profiles");
  DistanceStats s;
  for (std::size_t a = 0; a < profiles.size(); ++a)
    for (std::size_t b = a + 1; b < profiles.size(); ++b) {
      const auto& u = profiles[a].values;
      const auto& v = profiles[b].values;
      if (u.size() != v.size()) throw ShapeError("profiles differ in length");
      double sq = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) sq += (u[i] - v[i]) * (u[i] - v[i]);
      s.distances.push_back(std::sqrt(sq));
    }
  std::vector<double> sorted = s.distances;
  std::sort(sorted.begin(), sorted.end());
  double total = 0.0;
  for (double d : sorted) total += d;
  s.mean = total / static_cast<double>(sorted.size());
  s.q1 = quantile_sorted(sorted, 0.25);
  s.median = quantile_sorted(sorted, 0.5);
  s.q3 = quantile_sorted(sorted, 0.75);
  const double iqr = s.q3 - s.q1;
  for (double d : sorted)
    if (d < s.q1 - 1.5 * iqr || d > s.q3 + 1.5 * iqr) ++s.outliers;
  return s;
}

}  // namespace nnpi
