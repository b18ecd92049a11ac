#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Eigenvalues>

#include "flowreg/geometry.hpp"
#include "flowreg/spatial_index.hpp"

namespace flowreg {

/// Nearest neighbor in `index` for every query point.
inline std::vector<Neighbor> nearest_neighbors(std::span<const Point3> queries, const KdTree& index) {
  std::vector<Neighbor> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(index.nearest(q));
  return out;
}

inline double mean_sq_dist(const std::vector<Neighbor>& matches) {
  double sum = 0.0;
  for (const auto& m : matches) sum += m.sq_dist;
  return sum / static_cast<double>(matches.size());
}

/// Symmetric Chamfer distance with prebuilt indices:
/// mean_a min_b |a-b|^2 + mean_b min_a |a-b|^2.
inline double chamfer_distance(const KdTree& a, const KdTree& b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::EmptyGeometry, "Chamfer distance of an empty cloud");
  return mean_sq_dist(nearest_neighbors(a.points(), b)) + mean_sq_dist(nearest_neighbors(b.points(), a));
}

inline double chamfer_distance(std::span<const Point3> a, std::span<const Point3> b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::EmptyGeometry, "Chamfer distance of an empty cloud");
  return chamfer_distance(KdTree(a), KdTree(b));
}

/// Greedy max-min subsampling starting from `seed_index`. Ties go to the
/// lowest index.
inline std::vector<std::size_t> farthest_point_sample(std::span<const Point3> cloud, std::size_t k,
                                                      std::size_t seed_index = 0) {
  const std::size_t n = cloud.size();
  if (k < 1 || k > n) throw Error(ErrorCode::InvalidArgument, "FPS sample count must lie in [1, |cloud|]");
  if (seed_index >= n) throw Error(ErrorCode::InvalidArgument, "FPS seed index out of range");

  std::vector<std::size_t> selected;
  selected.reserve(k);
  std::vector<double> min_sq(n, std::numeric_limits<double>::infinity());
  std::vector<char> taken(n, 0);
  std::size_t current = seed_index;
  for (;;) {
    selected.push_back(current);
    taken[current] = 1;
    if (selected.size() == k) break;
    std::size_t best = n;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      min_sq[i] = std::min(min_sq[i], squared_distance(cloud[i], cloud[current]));
      if (min_sq[i] > best_d) {
        best_d = min_sq[i];
        best = i;
      }
    }
    current = best;
  }
  return selected;
}

inline PointCloud gather(std::span<const Point3> cloud, std::span<const std::size_t> indices) {
  PointCloud out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(cloud[i]);
  return out;
}

/// Distance from every point to its nearest other point.
inline std::vector<double> nn_distances(std::span<const Point3> cloud) {
  if (cloud.size() < 2) throw Error(ErrorCode::InsufficientPoints, "need at least two points");
  const KdTree index(cloud);
  std::vector<double> d(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) d[i] = std::sqrt(index.nearest_excluding(cloud[i], i).sq_dist);
  return d;
}

inline double median(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorCode::InsufficientPoints, "median of an empty set");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

inline double median_nn_distance(std::span<const Point3> cloud) { return median(nn_distances(cloud)); }

/// Drops points whose nearest-neighbor distance exceeds multiplier x the
/// median nearest-neighbor distance. Survivors keep their order.
inline PointCloud remove_outliers(std::span<const Point3> cloud, double multiplier = 3.0) {
  if (cloud.size() < 2) throw Error(ErrorCode::InsufficientPoints, "outlier removal needs at least two points");
  if (!(multiplier > 0.0)) throw Error(ErrorCode::InvalidArgument, "outlier multiplier must be positive");
  const std::vector<double> d = nn_distances(cloud);
  const double threshold = multiplier * median(d);
  PointCloud out;
  out.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (d[i] <= threshold) out.push_back(cloud[i]);
  }
  return out;
}

/// Unoriented unit normals from the smallest principal axis of each point's
/// k-neighborhood (the point included).
inline std::vector<Point3> estimate_normals(std::span<const Point3> cloud, std::size_t k = 8) {
  std::vector<Point3> normals(cloud.size(), Point3::UnitZ());
  if (cloud.size() < 3) return normals;
  const KdTree index(cloud);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto nbs = index.knn(cloud[i], k + 1);
    Point3 mean = Point3::Zero();
    for (const auto& nb : nbs) mean += cloud[nb.index];
    mean /= static_cast<double>(nbs.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& nb : nbs) {
      const Point3 d = cloud[nb.index] - mean;
      cov += d * d.transpose();
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    normals[i] = eig.eigenvectors().col(0).normalized();
  }
  return normals;
}

}  // namespace flowreg
