#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "flowreg/geometry.hpp"
#include "flowreg/spatial_index.hpp"

namespace flowreg {

/// Symmetric, loop-free adjacency with uniform weights.
struct NeighborGraph {
  std::vector<std::vector<std::size_t>> neighbors;

  std::size_t size() const { return neighbors.size(); }

  static NeighborGraph from_mesh(const TriMesh& mesh) {
    validate_mesh(mesh);
    NeighborGraph g;
    g.neighbors.resize(mesh.vertices.size());
    for (const auto& [i, j] : mesh_edges(mesh)) {
      g.neighbors[i].push_back(j);
      g.neighbors[j].push_back(i);
    }
    for (auto& n : g.neighbors) std::sort(n.begin(), n.end());
    return g;
  }

  /// k nearest neighbors per point, symmetrized (union).
  static NeighborGraph from_knn(std::span<const Point3> cloud, std::size_t k = 6) {
    NeighborGraph g;
    g.neighbors.resize(cloud.size());
    if (cloud.size() < 2) return g;
    const KdTree index(cloud);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      for (const auto& nb : index.knn(cloud[i], k, i)) {
        g.neighbors[i].push_back(nb.index);
        g.neighbors[nb.index].push_back(i);
      }
    }
    for (auto& n : g.neighbors) {
      std::sort(n.begin(), n.end());
      n.erase(std::unique(n.begin(), n.end()), n.end());
    }
    return g;
  }

  /// Mesh edges when the shape has faces, otherwise k-NN.
  static NeighborGraph for_shape(const TriMesh& shape, std::size_t k = 6) {
    return shape.has_faces() ? from_mesh(shape) : from_knn(shape.vertices, k);
  }

  /// Number of ordered pairs (i, j) with j in N(i).
  std::size_t directed_edge_count() const {
    std::size_t n = 0;
    for (const auto& nb : neighbors) n += nb.size();
    return n;
  }

  void validate() const {
    for (std::size_t i = 0; i < neighbors.size(); ++i) {
      for (std::size_t j : neighbors[i]) {
        if (j >= neighbors.size() || j == i) throw Error(ErrorCode::InvalidArgument, "neighbor graph has a bad edge");
        if (!std::binary_search(neighbors[j].begin(), neighbors[j].end(), i)) {
          throw Error(ErrorCode::InvalidArgument, "neighbor graph is not symmetric");
        }
      }
    }
  }
};

/// Best rotation aligning the rest neighborhood of each vertex with its
/// deformed neighborhood (Kabsch with reflection correction).
inline std::vector<Eigen::Matrix3d> fit_rotations(std::span<const Point3> rest, std::span<const Point3> deformed,
                                                  const NeighborGraph& graph) {
  std::vector<Eigen::Matrix3d> rotations(graph.size(), Eigen::Matrix3d::Identity());
  for (std::size_t i = 0; i < graph.size(); ++i) {
    if (graph.neighbors[i].empty()) continue;
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (std::size_t j : graph.neighbors[i]) cov += (rest[i] - rest[j]) * (deformed[i] - deformed[j]).transpose();
    const Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d u = svd.matrixU();
    const Eigen::Matrix3d& v = svd.matrixV();
    Eigen::Matrix3d r = v * u.transpose();
    if (r.determinant() < 0.0) {
      u.col(2) *= -1.0;  // smallest singular value
      r = v * u.transpose();
    }
    rotations[i] = r;
  }
  return rotations;
}

inline void check_arap_sizes(std::span<const Point3> rest, std::span<const Point3> deformed, const NeighborGraph& graph) {
  if (rest.size() != deformed.size() || rest.size() != graph.size()) {
    throw Error(ErrorCode::InvalidArgument, "ARAP inputs disagree in vertex count");
  }
}

/// Sum_i Sum_{j in N(i)} |(d_i - d_j) - R_i (r_i - r_j)|^2 for fixed rotations.
/// When `grad` is non-null it receives dE/d(deformed) (3 x N).
inline double arap_energy_fixed(std::span<const Point3> rest, std::span<const Point3> deformed, const NeighborGraph& graph,
                                const std::vector<Eigen::Matrix3d>& rotations, Eigen::Matrix3Xd* grad = nullptr) {
  if (grad) grad->setZero(3, static_cast<Eigen::Index>(deformed.size()));
  double energy = 0.0;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    for (std::size_t j : graph.neighbors[i]) {
      const Eigen::Vector3d e = (deformed[i] - deformed[j]) - rotations[i] * (rest[i] - rest[j]);
      energy += e.squaredNorm();
      if (grad) {
        grad->col(static_cast<Eigen::Index>(i)) += 2.0 * e;
        grad->col(static_cast<Eigen::Index>(j)) -= 2.0 * e;
      }
    }
  }
  return energy;
}

inline double arap_energy(std::span<const Point3> rest, std::span<const Point3> deformed, const NeighborGraph& graph) {
  check_arap_sizes(rest, deformed, graph);
  return arap_energy_fixed(rest, deformed, graph, fit_rotations(rest, deformed, graph));
}

/// Energy with optimal rotations and its gradient with those rotations held
/// fixed (which is the exact gradient, since the rotations are stationary).
inline double arap_energy_and_gradient(std::span<const Point3> rest, std::span<const Point3> deformed,
                                       const NeighborGraph& graph, Eigen::Matrix3Xd& grad) {
  check_arap_sizes(rest, deformed, graph);
  return arap_energy_fixed(rest, deformed, graph, fit_rotations(rest, deformed, graph), &grad);
}

}  // namespace flowreg
