#pragma once

// Map-quality metrics for vertex-to-vertex correspondences.

#include <cmath>
#include <map>
#include <span>
#include <unordered_set>
#include <utility>
#include <vector>

#include "flowreg/geometry.hpp"

namespace flowreg {

/// Ground-truth (source vertex, target vertex) pairs.
struct LandmarkSet {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;

  bool empty() const { return pairs.empty(); }
  std::size_t size() const { return pairs.size(); }
};

inline void check_map(std::span<const std::size_t> map, std::size_t source_count, std::size_t target_count) {
  if (map.size() != source_count) throw Error(ErrorCode::InvalidArgument, "map length differs from the source vertex count");
  for (std::size_t v : map) {
    if (v >= target_count) throw Error(ErrorCode::InvalidArgument, "map references a missing target vertex");
  }
}

/// Cotangent edge weights, w_ij = (cot a + cot b) / 4, clamped at 0.
inline std::map<std::pair<std::size_t, std::size_t>, double> cotangent_weights(const TriMesh& mesh) {
  std::map<std::pair<std::size_t, std::size_t>, double> w;
  for (const auto& t : mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      const std::size_t c = t[k];
      std::size_t a = t[(k + 1) % 3];
      std::size_t b = t[(k + 2) % 3];
      const Point3 ea = mesh.vertices[a] - mesh.vertices[c];
      const Point3 eb = mesh.vertices[b] - mesh.vertices[c];
      const double cross = ea.cross(eb).norm();
      if (a > b) std::swap(a, b);
      double& slot = w[{a, b}];
      if (cross > 0.0) slot += 0.25 * ea.dot(eb) / cross;
    }
  }
  for (auto& [edge, weight] : w) weight = std::max(weight, 0.0);
  return w;
}

/// Discrete Dirichlet energy of the vertex map, measured on the source
/// triangulation: sum over edges of w_ij |T[map(i)] - T[map(j)]|^2.
inline double dirichlet_energy(const TriMesh& source, const TriMesh& target, std::span<const std::size_t> map) {
  validate_mesh(source);
  check_map(map, source.vertices.size(), target.vertices.size());
  double energy = 0.0;
  for (const auto& [edge, w] : cotangent_weights(source)) {
    energy += w * (target.vertices[map[edge.first]] - target.vertices[map[edge.second]]).squaredNorm();
  }
  return energy;
}

/// Fraction of target vertices hit by the map.
inline double coverage(std::span<const std::size_t> map, std::size_t target_vertex_count) {
  if (target_vertex_count < 1) throw Error(ErrorCode::InvalidArgument, "target must have at least one vertex");
  std::vector<char> hit(target_vertex_count, 0);
  std::size_t distinct = 0;
  for (std::size_t v : map) {
    if (v >= target_vertex_count) throw Error(ErrorCode::InvalidArgument, "map references a missing target vertex");
    if (!hit[v]) {
      hit[v] = 1;
      ++distinct;
    }
  }
  return static_cast<double>(distinct) / static_cast<double>(target_vertex_count);
}

/// Geodesic error of every landmark, normalized by sqrt(area(target)).
inline std::vector<double> landmark_errors(std::span<const std::size_t> map, const TriMesh& source, const TriMesh& target,
                                           const LandmarkSet& landmarks) {
  if (landmarks.empty()) throw Error(ErrorCode::InvalidArgument, "landmark set is empty");
  validate_mesh(target);
  check_map(map, source.vertices.size(), target.vertices.size());
  const double area = surface_area(target);
  if (!(area > 0.0)) throw Error(ErrorCode::DegenerateExtent, "target surface area is zero");
  const double norm = std::sqrt(area);

  std::map<std::size_t, std::vector<double>> from_truth;
  std::vector<double> errors;
  errors.reserve(landmarks.size());
  for (const auto& [p, q] : landmarks.pairs) {
    if (p >= source.vertices.size() || q >= target.vertices.size()) {
      throw Error(ErrorCode::InvalidArgument, "landmark index out of range");
    }
    auto it = from_truth.find(q);
    if (it == from_truth.end()) it = from_truth.emplace(q, geodesic_distances(target, q)).first;
    const double d = it->second[map[p]];
    if (!std::isfinite(d)) throw Error(ErrorCode::UnreachableLandmark, "mapped landmark is disconnected from its ground truth");
    errors.push_back(d / norm);
  }
  return errors;
}

inline double landmark_error(std::span<const std::size_t> map, const TriMesh& source, const TriMesh& target,
                             const LandmarkSet& landmarks) {
  const auto errors = landmark_errors(map, source, target, landmarks);
  double sum = 0.0;
  for (double e : errors) sum += e;
  return sum / static_cast<double>(errors.size());
}

/// Mean round-trip displacement, averaged over both sides. The source side
/// composes map12 then map21; the target side map21 then map12.
inline double bijectivity(std::span<const std::size_t> map12, std::span<const std::size_t> map21,
                          std::span<const Point3> source, std::span<const Point3> target) {
  if (source.empty() || target.empty()) throw Error(ErrorCode::EmptyGeometry, "bijectivity needs non-empty shapes");
  check_map(map12, source.size(), target.size());
  check_map(map21, target.size(), source.size());
  double vs = 0.0;
  for (std::size_t i = 0; i < source.size(); ++i) vs += (source[i] - source[map21[map12[i]]]).norm();
  double vt = 0.0;
  for (std::size_t j = 0; j < target.size(); ++j) vt += (target[j] - target[map12[map21[j]]]).norm();
  return 0.5 * (vs / static_cast<double>(source.size()) + vt / static_cast<double>(target.size()));
}

}  // namespace flowreg
