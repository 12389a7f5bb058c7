#pragma once

// Lloyd's k-means with k-means++ seeding, used to stratify subjects by
// their feature profiles.

#include "nnpi/core.hpp"
#include "nnpi/data.hpp"

#include <limits>
#include <random>
#include <vector>

namespace nnpi {

struct KMeansResult {
  Matrix centroids;                      // k x dim
  std::vector<std::size_t> assignments;  // one per point
  std::vector<double> objective;         // within-cluster SS after each assignment step
  std::size_t iterations = 0;
};

inline double squared_distance(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

/// Nearest centroid; ties go to the lowest cluster index.
inline std::size_t nearest_centroid(const Matrix& centroids, const Eigen::RowVectorXd& point) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c) - point).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::size_t>(c);
    }
  }
  return best;
}

inline KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed,
                           std::size_t max_iter = 100) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (k < 1) throw ConfigError("k-means requires k >= 1");
  if (k > n) throw ConfigError("k-means requires at least k points (k=" + std::to_string(k) +
                               ", points=" + std::to_string(n) + ")");
  std::mt19937_64 rng(seed);
  KMeansResult r;
  r.centroids.resize(static_cast<Eigen::Index>(k), points.cols());

  // k-means++ seeding
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  r.centroids.row(0) = points.row(static_cast<Eigen::Index>(first(rng)));
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(points, static_cast<Eigen::Index>(i), r.centroids,
                                               static_cast<Eigen::Index>(c - 1)));
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      for (pick = 0; pick + 1 < n; ++pick) {
        target -= d2[pick];
        if (target < 0.0) break;
      }
    } else {
      pick = first(rng);
    }
    r.centroids.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(pick));
  }

  r.assignments.assign(n, 0);
  for (std::size_t iter = 0; iter < std::max<std::size_t>(max_iter, 1); ++iter) {
    bool changed = iter == 0;
    double wcss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const std::size_t c = nearest_centroid(r.centroids, points.row(row));
      if (c != r.assignments[i]) changed = true;
      r.assignments[i] = c;
      wcss += (points.row(row) - r.centroids.row(static_cast<Eigen::Index>(c))).squaredNorm();
    }
    r.objective.push_back(wcss);
    r.iterations = iter + 1;
    if (!changed) break;

    Matrix sums = Matrix::Zero(static_cast<Eigen::Index>(k), points.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(static_cast<Eigen::Index>(r.assignments[i])) += points.row(static_cast<Eigen::Index>(i));
      ++counts[r.assignments[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      const auto cr = static_cast<Eigen::Index>(c);
      if (counts[c] > 0) {
        r.centroids.row(cr) = sums.row(cr) / static_cast<double>(counts[c]);
        continue;
      }
      // Empty cluster: move it onto the point farthest from its centroid.
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = squared_distance(points, static_cast<Eigen::Index>(i), r.centroids,
                                          static_cast<Eigen::Index>(r.assignments[i]));
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      r.centroids.row(cr) = points.row(static_cast<Eigen::Index>(far));
      r.assignments[far] = c;
    }
  }
  return r;
}

inline Matrix profile_matrix(const std::vector<SubjectProfile>& profiles) {
  if (profiles.empty()) throw EmptyInputError("no profiles");
  Matrix m(static_cast<Eigen::Index>(profiles.size()),
           static_cast<Eigen::Index>(profiles.front().values.size()));
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    if (profiles[i].values.size() != static_cast<std::size_t>(m.cols()))
      throw ShapeError("profiles differ in length");
    m.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::RowVectorXd>(profiles[i].values.data(), m.cols());
  }
  return m;
}

inline KMeansResult kmeans(const std::vector<SubjectProfile>& profiles, std::size_t k,
                           std::uint64_t seed, std::size_t max_iter = 100) {
  return kmeans(profile_matrix(profiles), k, seed, max_iter);
}

}  // namespace nnpi
