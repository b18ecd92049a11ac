#pragma once

// Procedural test shapes.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <tuple>
#include <vector>

#include "flowreg/flow/velocity_field.hpp"
#include "flowreg/geometry.hpp"

namespace flowreg::fixtures {

/// Near-uniform points on a sphere (golden-angle spiral).
inline PointCloud fibonacci_sphere(std::size_t n, double radius = 1.0, const Point3& center = Point3::Zero()) {
  PointCloud out;
  out.reserve(n);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * static_cast<double>(i);
    out.push_back(center + radius * Point3(r * std::cos(phi), r * std::sin(phi), z));
  }
  return out;
}

/// Uniform samples of the ball of the given radius.
inline PointCloud ball_interior(std::size_t n, double radius, std::uint64_t seed, const Point3& center = Point3::Zero()) {
  Rng rng(seed);
  PointCloud out;
  out.reserve(n);
  while (out.size() < n) {
    const Point3 p(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    if (p.squaredNorm() <= 1.0) out.push_back(center + radius * p);
  }
  return out;
}

/// Subdivided icosahedron projected onto the sphere; outward winding.
inline TriMesh icosphere(int subdivisions, double radius = 1.0) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriMesh mesh;
  mesh.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                   {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : mesh.vertices) v.normalize();
  mesh.triangles = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                    {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                    {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> mid;
    auto midpoint = [&](std::size_t a, std::size_t b) {
      const auto key = std::minmax(a, b);
      const auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      mesh.vertices.push_back((mesh.vertices[a] + mesh.vertices[b]).normalized());
      mid.emplace(key, mesh.vertices.size() - 1);
      return mesh.vertices.size() - 1;
    };
    std::vector<Triangle> next;
    next.reserve(mesh.triangles.size() * 4);
    for (const auto& tri : mesh.triangles) {
      const std::size_t a = midpoint(tri[0], tri[1]), b = midpoint(tri[1], tri[2]), c = midpoint(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    mesh.triangles = std::move(next);
  }
  for (auto& v : mesh.vertices) v *= radius;
  return mesh;
}

/// Closed sx x sy x sz box centred at the origin, each face tessellated into
/// a regular grid (nx, ny, nz cells along each axis). Outward winding.
inline TriMesh box_mesh(double sx, double sy, double sz, int nx, int ny, int nz) {
  TriMesh mesh;
  std::map<std::array<int, 3>, std::size_t> ids;
  const std::array<int, 3> n = {nx, ny, nz};
  const std::array<double, 3> size = {sx, sy, sz};
  auto vertex = [&](std::array<int, 3> c) {
    const auto it = ids.find(c);
    if (it != ids.end()) return it->second;
    Point3 p;
    for (int a = 0; a < 3; ++a) p[a] = size[a] * (static_cast<double>(c[a]) / n[a] - 0.5);
    mesh.vertices.push_back(p);
    ids.emplace(c, mesh.vertices.size() - 1);
    return mesh.vertices.size() - 1;
  };
  for (int axis = 0; axis < 3; ++axis) {
    const int u = (axis + 1) % 3, v = (axis + 2) % 3;
    for (int side = 0; side < 2; ++side) {
      for (int i = 0; i < n[u]; ++i) {
        for (int j = 0; j < n[v]; ++j) {
          auto corner = [&](int di, int dj) {
            std::array<int, 3> c{};
            c[axis] = side * n[axis];
            c[u] = i + di;
            c[v] = j + dj;
            return vertex(c);
          };
          const std::size_t a = corner(0, 0), b = corner(1, 0), c = corner(1, 1), d = corner(0, 1);
          // (u, v, axis) is right-handed, so a->b->c faces +axis.
          if (side == 1) {
            mesh.triangles.push_back({a, b, c});
            mesh.triangles.push_back({a, c, d});
          } else {
            mesh.triangles.push_back({a, c, b});
            mesh.triangles.push_back({a, d, c});
          }
        }
      }
    }
  }
  return mesh;
}

/// Bar along x: length 2, square cross-section of side `thickness`.
inline TriMesh bar_mesh(int length_cells = 16, int thickness_cells = 3, double thickness = 0.4) {
  return box_mesh(2.0, thickness, thickness, length_cells, thickness_cells, thickness_cells);
}

/// Planar grid over [0,1]^2 at z = 0 with (n+1)^2 vertices.
inline TriMesh unit_square(int n) {
  TriMesh mesh;
  for (int j = 0; j <= n; ++j) {
    for (int i = 0; i <= n; ++i) mesh.vertices.emplace_back(static_cast<double>(i) / n, static_cast<double>(j) / n, 0.0);
  }
  auto id = [n](int i, int j) { return static_cast<std::size_t>(j * (n + 1) + i); };
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      mesh.triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      mesh.triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return mesh;
}

/// Uniformly random points in the cube [-extent, extent]^3.
inline PointCloud random_cloud(std::size_t n, std::uint64_t seed, double extent = 1.0) {
  Rng rng(seed);
  PointCloud out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.emplace_back(rng.uniform(-extent, extent), rng.uniform(-extent, extent), rng.uniform(-extent, extent));
  }
  return out;
}

}  // namespace flowreg::fixtures
