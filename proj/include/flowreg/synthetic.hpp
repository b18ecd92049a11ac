#pragma once

// Synthetic deformations and noisy intermediate frames, standing in for
// reconstructed guidance sequences in demos and tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowreg/flow/velocity_field.hpp"
#include "flowreg/geometry.hpp"

namespace flowreg {

enum class DeformationKind { Translate, Bend, Twist, EllipsoidMorph };

inline std::string deformation_name(DeformationKind k) {
  switch (k) {
    case DeformationKind::Translate: return "translate";
    case DeformationKind::Bend: return "bend";
    case DeformationKind::Twist: return "twist";
    case DeformationKind::EllipsoidMorph: return "ellipsoid-morph";
  }
  return "translate";
}

inline DeformationKind parse_deformation(const std::string& name) {
  if (name == "translate") return DeformationKind::Translate;
  if (name == "bend") return DeformationKind::Bend;
  if (name == "twist") return DeformationKind::Twist;
  if (name == "ellipsoid-morph" || name == "ellipsoid") return DeformationKind::EllipsoidMorph;
  throw Error(ErrorCode::InvalidArgument, "unknown deformation '" + name + "'");
}

struct SyntheticDeformation {
  DeformationKind kind = DeformationKind::Translate;
  /// Translate: offset. Ellipsoid-morph: per-axis scale about the centroid.
  Point3 vector = Point3(0.5, 0.0, 0.0);
  /// Bend and twist: total angle in radians over the x extent.
  double angle = 1.0;
  int frames = 4;
  double sigma = 0.0;
  double interior_fraction = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (frames < 0) throw Error(ErrorCode::InvalidArgument, "frame count must be non-negative");
    if (!(sigma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise sigma must be non-negative");
    if (!(interior_fraction >= 0.0 && interior_fraction < 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "interior fraction must lie in [0, 1)");
    }
    if (!vector.allFinite() || !std::isfinite(angle)) throw Error(ErrorCode::NonFiniteInput, "deformation parameters are not finite");
  }
};

/// Target positions for `points` under the deformation. Bend and twist act
/// along the x extent of the input, centred on its x midpoint.
inline PointCloud apply_deformation(std::span<const Point3> points, const SyntheticDeformation& def) {
  def.validate();
  if (points.empty()) return {};
  Point3 lo = points[0], hi = points[0], centroid = Point3::Zero();
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
    centroid += p;
  }
  centroid /= static_cast<double>(points.size());
  const double length = hi.x() - lo.x();
  const double mid_x = 0.5 * (lo.x() + hi.x());
  const double mid_y = 0.5 * (lo.y() + hi.y());
  const double mid_z = 0.5 * (lo.z() + hi.z());

  PointCloud out;
  out.reserve(points.size());
  for (const auto& p : points) {
    switch (def.kind) {
      case DeformationKind::Translate: out.push_back(p + def.vector); break;
      case DeformationKind::EllipsoidMorph: out.push_back(centroid + (p - centroid).cwiseProduct(def.vector)); break;
      case DeformationKind::Bend: {
        if (length <= 0.0 || def.angle == 0.0) {
          out.push_back(p);
          break;
        }
        // Wrap the x axis around a circle of radius length/angle in the xy plane.
        const double radius = length / def.angle;
        const double theta = (p.x() - mid_x) / radius;
        const double r = radius - (p.y() - mid_y);
        out.emplace_back(mid_x + r * std::sin(theta), mid_y + radius - r * std::cos(theta), p.z());
        break;
      }
      case DeformationKind::Twist: {
        const double theta = length > 0.0 ? def.angle * (p.x() - mid_x) / length : 0.0;
        const double y = p.y() - mid_y, z = p.z() - mid_z;
        out.emplace_back(p.x(), mid_y + std::cos(theta) * y - std::sin(theta) * z, mid_z + std::sin(theta) * y + std::cos(theta) * z);
        break;
      }
    }
  }
  return out;
}

inline TriMesh apply_deformation(const TriMesh& mesh, const SyntheticDeformation& def) {
  return TriMesh{apply_deformation(mesh.vertices, def), mesh.triangles};
}

namespace detail {

/// Distance along the ray to the nearest triangle hit and the hit count
/// (Moller-Trumbore), ignoring hits closer than `min_t`.
inline std::pair<double, int> cast_ray(const Point3& origin, const Point3& dir, std::span<const Point3> vertices,
                                       std::span<const Triangle> triangles, double min_t) {
  double nearest = std::numeric_limits<double>::infinity();
  int hits = 0;
  for (const auto& tri : triangles) {
    const Point3& a = vertices[tri[0]];
    const Point3 e1 = vertices[tri[1]] - a;
    const Point3 e2 = vertices[tri[2]] - a;
    const Point3 pv = dir.cross(e2);
    const double det = e1.dot(pv);
    if (std::abs(det) < 1e-14) continue;
    const Point3 tv = origin - a;
    const double u = tv.dot(pv) / det;
    if (u < 0.0 || u > 1.0) continue;
    const Point3 qv = tv.cross(e1);
    const double v = dir.dot(qv) / det;
    if (v < 0.0 || u + v > 1.0) continue;
    const double t = e2.dot(qv) / det;
    if (t > min_t) {
      ++hits;
      nearest = std::min(nearest, t);
    }
  }
  return {nearest, hits};
}

inline std::vector<Point3> vertex_normals(std::span<const Point3> vertices, std::span<const Triangle> triangles) {
  std::vector<Point3> normals(vertices.size(), Point3::Zero());
  for (const auto& t : triangles) {
    const Point3 n = (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
    for (std::size_t v : t) normals[v] += n;
  }
  for (auto& n : normals) {
    if (n.norm() > 0.0) n.normalize();
  }
  return normals;
}

}  // namespace detail

/// Points strictly inside a shape. With triangles, each sample sits at a
/// random depth between 20% and 80% of the local thickness below a random
/// vertex, measured by a ray cast along the inward normal. Without
/// triangles, samples shrink random points towards the centroid.
inline PointCloud sample_interior(std::span<const Point3> vertices, std::span<const Triangle> triangles, std::size_t count,
                                  Rng& rng) {
  PointCloud out;
  if (count == 0 || vertices.empty()) return out;
  out.reserve(count);
  Point3 centroid = Point3::Zero();
  for (const auto& p : vertices) centroid += p;
  centroid /= static_cast<double>(vertices.size());
  const auto normals = triangles.empty() ? std::vector<Point3>{} : detail::vertex_normals(vertices, triangles);
  const auto pick = [&] {
    return std::min(vertices.size() - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(vertices.size())));
  };
  int misses = 0;
  while (out.size() < count) {
    const std::size_t i = pick();
    const double depth = rng.uniform(0.2, 0.8);
    if (!triangles.empty() && normals[i].norm() > 0.0 && misses < 1000) {
      std::optional<Point3> sample;
      for (const double sign : {-1.0, 1.0}) {
        const Point3 dir = sign * normals[i];
        // The start vertex lies on the surface; step off it before counting hits.
        const auto [t, hits] = detail::cast_ray(vertices[i], dir, vertices, triangles, 1e-9);
        if (hits % 2 == 1 && std::isfinite(t)) {
          sample = vertices[i] + depth * t * dir;
          break;
        }
      }
      if (sample) {
        out.push_back(*sample);
        continue;
      }
      ++misses;
      continue;
    }
    out.push_back(centroid + depth * (vertices[i] - centroid));
  }
  return out;
}

/// Frames j = 1..T: the matched positions blended at j/(T+1), with Gaussian
/// noise and interior points added. `correspondence[i]` is the target vertex
/// matched to source vertex i.
inline std::vector<PointCloud> synth_guidance(const TriMesh& source, const TriMesh& target,
                                              std::span<const std::size_t> correspondence, const SyntheticDeformation& deformation) {
  deformation.validate();
  if (correspondence.size() != source.vertices.size()) {
    throw Error(ErrorCode::InvalidArgument, "correspondence length differs from the source vertex count");
  }
  for (std::size_t j : correspondence) {
    if (j >= target.vertices.size()) throw Error(ErrorCode::InvalidArgument, "correspondence references a missing target vertex");
  }
  Rng rng(deformation.seed);
  std::vector<PointCloud> frames;
  const std::size_t n = source.vertices.size();
  const auto interior_count = static_cast<std::size_t>(std::lround(static_cast<double>(n) * deformation.interior_fraction));
  for (int j = 1; j <= deformation.frames; ++j) {
    const double a = static_cast<double>(j) / static_cast<double>(deformation.frames + 1);
    PointCloud blend;
    blend.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      blend.push_back((1.0 - a) * source.vertices[i] + a * target.vertices[correspondence[i]]);
    }
    PointCloud frame = blend;
    if (deformation.sigma > 0.0) {
      for (auto& p : frame) p += deformation.sigma * Point3(rng.normal(), rng.normal(), rng.normal());
    }
    const PointCloud inner = sample_interior(blend, source.triangles, interior_count, rng);
    frame.insert(frame.end(), inner.begin(), inner.end());
    frames.push_back(std::move(frame));
  }
  return frames;
}

}  // namespace flowreg
