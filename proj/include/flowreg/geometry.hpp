#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <queue>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "flowreg/error.hpp"

namespace flowreg {

using Point3 = Eigen::Vector3d;
using PointCloud = std::vector<Point3>;
using Triangle = std::array<std::size_t, 3>;

/// Triangle mesh. A mesh with no triangles is treated as a bare point cloud
/// by the registration pipeline.
struct TriMesh {
  PointCloud vertices;
  std::vector<Triangle> triangles;

  bool has_faces() const { return !triangles.empty(); }
};

struct Rgb8 {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb8&, const Rgb8&) = default;
};

inline bool is_finite(const Point3& p) { return p.allFinite(); }

inline void require_finite(std::span<const Point3> points, const char* what) {
  for (const auto& p : points) {
    if (!p.allFinite()) throw Error(ErrorCode::NonFiniteInput, std::string(what) + " contains a non-finite point");
  }
}

inline void validate_mesh(const TriMesh& mesh) {
  require_finite(mesh.vertices, "mesh vertices");
  const std::size_t n = mesh.vertices.size();
  for (std::size_t f = 0; f < mesh.triangles.size(); ++f) {
    const auto& t = mesh.triangles[f];
    if (t[0] >= n || t[1] >= n || t[2] >= n) {
      throw Error(ErrorCode::InvalidArgument, "triangle " + std::to_string(f) + " references a missing vertex");
    }
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
      throw Error(ErrorCode::InvalidArgument, "triangle " + std::to_string(f) + " is degenerate");
    }
  }
}

inline Eigen::Matrix3Xd to_matrix(std::span<const Point3> points) {
  Eigen::Matrix3Xd m(3, static_cast<Eigen::Index>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = points[i];
  return m;
}

inline PointCloud to_cloud(const Eigen::Matrix3Xd& m) {
  PointCloud out(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.cols(); ++i) out[static_cast<std::size_t>(i)] = m.col(i);
  return out;
}

// ---------------------------------------------------------------------------
// Normalization

/// Maps p to (p - center) * scale. The inverse is exact up to rounding.
struct NormalizeTransform {
  Point3 center = Point3::Zero();
  double scale = 1.0;

  Point3 apply(const Point3& p) const { return (p - center) * scale; }
  Point3 invert(const Point3& p) const { return p / scale + center; }

  PointCloud apply(std::span<const Point3> points) const {
    PointCloud out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(apply(p));
    return out;
  }
  PointCloud invert(std::span<const Point3> points) const {
    PointCloud out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(invert(p));
    return out;
  }
  /// Translation applied before scaling.
  Point3 translation() const { return -center; }
};

/// Centroid-and-radius fit that puts `points` inside the unit sphere.
inline NormalizeTransform fit_unit_sphere(std::span<const Point3> points) {
  if (points.empty()) throw Error(ErrorCode::EmptyGeometry, "cannot normalize an empty point set");
  require_finite(points, "normalization input");
  Point3 centroid = Point3::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());
  double radius = 0.0;
  for (const auto& p : points) radius = std::max(radius, (p - centroid).norm());
  if (!(radius > 0.0)) throw Error(ErrorCode::DegenerateExtent, "all points coincide; scale is undefined");
  return NormalizeTransform{centroid, 1.0 / radius};
}

inline std::pair<PointCloud, NormalizeTransform> normalize_to_unit_sphere(std::span<const Point3> points) {
  NormalizeTransform tf = fit_unit_sphere(points);
  return {tf.apply(points), tf};
}

inline std::pair<TriMesh, NormalizeTransform> normalize_to_unit_sphere(const TriMesh& mesh) {
  NormalizeTransform tf = fit_unit_sphere(mesh.vertices);
  return {TriMesh{tf.apply(mesh.vertices), mesh.triangles}, tf};
}

// ---------------------------------------------------------------------------
// Height colorization

/// 16-bit height code split across the channels: R = G = high byte, B = low byte.
inline std::vector<Rgb8> colorize_by_height(std::span<const Point3> points) {
  if (points.empty()) return {};
  double z_min = std::numeric_limits<double>::infinity();
  double z_max = -std::numeric_limits<double>::infinity();
  for (const auto& p : points) {
    z_min = std::min(z_min, p.z());
    z_max = std::max(z_max, p.z());
  }
  if (!(z_max > z_min)) throw Error(ErrorCode::DegenerateExtent, "z extent is zero");
  std::vector<Rgb8> colors;
  colors.reserve(points.size());
  for (const auto& p : points) {
    const double u = (p.z() - z_min) / (z_max - z_min);
    const auto d = static_cast<std::int64_t>(std::clamp(std::floor(u * 65535.0), 0.0, 65535.0));
    const auto hi = static_cast<std::uint8_t>(d / 256);
    const auto lo = static_cast<std::uint8_t>(d - 256 * (d / 256));
    colors.push_back(Rgb8{hi, hi, lo});
  }
  return colors;
}

inline std::vector<Rgb8> colorize_by_height(const TriMesh& mesh) { return colorize_by_height(mesh.vertices); }

// ---------------------------------------------------------------------------
// Mesh graph utilities

/// Unique undirected edges (i < j), sorted.
inline std::vector<std::pair<std::size_t, std::size_t>> mesh_edges(const TriMesh& mesh) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  edges.reserve(mesh.triangles.size() * 3);
  for (const auto& t : mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      std::size_t a = t[k], b = t[(k + 1) % 3];
      if (a > b) std::swap(a, b);
      edges.emplace_back(a, b);
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

inline double surface_area(const TriMesh& mesh) {
  double area = 0.0;
  for (const auto& t : mesh.triangles) {
    const Point3& a = mesh.vertices[t[0]];
    const Point3& b = mesh.vertices[t[1]];
    const Point3& c = mesh.vertices[t[2]];
    area += 0.5 * (b - a).cross(c - a).norm();
  }
  return area;
}

/// Shortest paths along mesh edges with Euclidean edge lengths.
/// Unreachable vertices get +infinity.
inline std::vector<double> geodesic_distances(const TriMesh& mesh, std::size_t source_vertex) {
  const std::size_t n = mesh.vertices.size();
  if (source_vertex >= n) throw Error(ErrorCode::InvalidArgument, "geodesic source vertex out of range");

  std::vector<std::vector<std::pair<std::size_t, double>>> adjacency(n);
  for (const auto& [i, j] : mesh_edges(mesh)) {
    const double w = (mesh.vertices[i] - mesh.vertices[j]).norm();
    adjacency[i].emplace_back(j, w);
    adjacency[j].emplace_back(i, w);
  }

  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  dist[source_vertex] = 0.0;
  queue.emplace(0.0, source_vertex);
  while (!queue.empty()) {
    const auto [d, u] = queue.top();
    queue.pop();
    if (d > dist[u]) continue;
    for (const auto& [v, w] : adjacency[u]) {
      const double nd = d + w;
      if (nd < dist[v]) {
        dist[v] = nd;
        queue.emplace(nd, v);
      }
    }
  }
  return dist;
}

}  // namespace flowreg
