#pragma once

// Interior-point removal for reconstructed point clouds. Depth maps are
// rendered from cameras surrounding the cloud (by default one per face of a
// padded bounding cube) and the visible surface is read back from them.

#include <array>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <unordered_set>
#include <vector>

#include "flowreg/geometry.hpp"
#include "flowreg/point_ops.hpp"

namespace flowreg {

/// Pinhole camera with a square-pixel image. `fov` is the vertical field of view.
struct CameraView {
  Point3 eye = Point3(0, 0, 1);
  Point3 center = Point3::Zero();
  Point3 up = Point3(0, 1, 0);
  double fov = std::numbers::pi / 3.0;
  int width = 512;
  int height = 512;

  void validate() const {
    if (width < 1 || height < 1) throw Error(ErrorCode::InvalidArgument, "camera image must be at least 1x1");
    if (!(fov > 0.0 && fov < std::numbers::pi)) throw Error(ErrorCode::InvalidArgument, "field of view must lie in (0, pi)");
    const Point3 dir = center - eye;
    if (!(dir.norm() > 0.0)) throw Error(ErrorCode::InvalidArgument, "camera eye coincides with its center");
    if (!(dir.normalized().cross(up).norm() > 1e-9)) {
      throw Error(ErrorCode::InvalidArgument, "camera up vector is parallel to the view direction");
    }
  }

  Point3 forward() const { return (center - eye).normalized(); }
  Point3 right() const { return forward().cross(up).normalized(); }
  Point3 true_up() const { return right().cross(forward()); }
  double focal_px() const { return 0.5 * height / std::tan(0.5 * fov); }
  // Principal point sits on an integer pixel so the optical axis hits a pixel center.
  int cx() const { return width / 2; }
  int cy() const { return height / 2; }
};

/// Row-major depth buffer. Empty pixels hold +infinity.
struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<double> depth;

  static constexpr double kEmpty = std::numeric_limits<double>::infinity();

  DepthImage() = default;
  DepthImage(int w, int h) : width(w), height(h), depth(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), kEmpty) {}

  double& at(int col, int row) { return depth[static_cast<std::size_t>(row) * static_cast<std::size_t>(width) + static_cast<std::size_t>(col)]; }
  double at(int col, int row) const { return depth[static_cast<std::size_t>(row) * static_cast<std::size_t>(width) + static_cast<std::size_t>(col)]; }
  bool empty_at(int col, int row) const { return at(col, row) == kEmpty; }
  std::size_t filled_count() const {
    std::size_t n = 0;
    for (double d : depth) n += d != kEmpty;
    return n;
  }
};

struct PixelHit {
  int col = 0;
  int row = 0;
  double depth = 0.0;
};

namespace detail {

struct CameraFrame {
  Point3 eye, right, up, forward;
  double focal;
  int cx, cy, width, height;

  explicit CameraFrame(const CameraView& v)
      : eye(v.eye), right(v.right()), up(v.true_up()), forward(v.forward()), focal(v.focal_px()),
        cx(v.cx()), cy(v.cy()), width(v.width), height(v.height) {}

  /// Pixel and camera depth of p; empty if p is behind the camera or off-image.
  std::optional<PixelHit> project(const Point3& p) const {
    const Point3 rel = p - eye;
    const double z = rel.dot(forward);
    if (!(z > 0.0)) return std::nullopt;
    const double u = cx + focal * rel.dot(right) / z;
    const double v = cy - focal * rel.dot(up) / z;
    const double col = std::round(u);
    const double row = std::round(v);
    if (col < 0.0 || row < 0.0 || col >= width || row >= height) return std::nullopt;
    return PixelHit{static_cast<int>(col), static_cast<int>(row), z};
  }

  Point3 unproject(int col, int row, double z) const {
    const double x = (col - cx) * z / focal;
    const double y = (cy - row) * z / focal;
    return eye + x * right + y * up + z * forward;
  }
};

inline void splat(DepthImage& image, const PixelHit& hit, int radius) {
  const int r2 = radius * radius;
  for (int dy = -radius; dy <= radius; ++dy) {
    const int row = hit.row + dy;
    if (row < 0 || row >= image.height) continue;
    for (int dx = -radius; dx <= radius; ++dx) {
      const int col = hit.col + dx;
      if (col < 0 || col >= image.width || dx * dx + dy * dy > r2) continue;
      double& d = image.at(col, row);
      d = std::min(d, hit.depth);
    }
  }
}

/// Splat each point with a disc whose world radius is `world_radius`
/// (perspective-correct pixel radius per point).
inline DepthImage render_depth_world(std::span<const Point3> cloud, const CameraView& view, double world_radius) {
  view.validate();
  const CameraFrame frame(view);
  DepthImage image(view.width, view.height);
  for (const auto& p : cloud) {
    if (const auto hit = frame.project(p)) {
      const int radius = static_cast<int>(std::ceil(world_radius * frame.focal / hit->depth));
      splat(image, *hit, std::max(radius, 0));
    }
  }
  return image;
}

/// Surfel render: each point splats a disc of `world_radius` lying in its
/// tangent plane, so neighbors on a slanted surface agree in depth.
inline DepthImage render_surfels(std::span<const Point3> cloud, std::span<const Point3> normals, const CameraView& view,
                                 double world_radius) {
  view.validate();
  const CameraFrame frame(view);
  DepthImage image(view.width, view.height);
  const double r2 = world_radius * world_radius;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto hit = frame.project(cloud[i]);
    if (!hit) continue;
    image.at(hit->col, hit->row) = std::min(image.at(hit->col, hit->row), hit->depth);
    const double near = hit->depth - world_radius;
    if (!(near > 0.0)) continue;
    const int radius = static_cast<int>(std::ceil(world_radius * frame.focal / near));
    const Point3& n = normals[i];
    const double n_rel = n.dot(cloud[i] - frame.eye);
    const double n_right = n.dot(frame.right) / frame.focal;
    const double n_up = n.dot(frame.up) / frame.focal;
    const double n_fwd = n.dot(frame.forward);
    for (int row = std::max(hit->row - radius, 0); row <= std::min(hit->row + radius, image.height - 1); ++row) {
      for (int col = std::max(hit->col - radius, 0); col <= std::min(hit->col + radius, image.width - 1); ++col) {
        // Camera ray through the pixel, parametrized by camera depth z.
        const double a = col - frame.cx, b = frame.cy - row;
        const double denom = n_right * a + n_up * b + n_fwd;
        if (std::abs(denom) < 1e-6) continue;
        const double z = n_rel / denom;
        if (!(z > 0.0)) continue;
        const Point3 q = frame.eye + z * (a / frame.focal * frame.right + b / frame.focal * frame.up + frame.forward);
        if ((q - cloud[i]).squaredNorm() > r2) continue;
        double& d = image.at(col, row);
        d = std::min(d, z);
      }
    }
  }
  return image;
}

}  // namespace detail

/// Six cameras looking at the centroid from outside each face of the
/// padded axis-aligned bounding cube centred on the centroid.
inline std::array<CameraView, 6> hexahedron_views(std::span<const Point3> cloud, int resolution = 512,
                                                   double fov = std::numbers::pi / 3.0, double padding = 0.05) {
  if (cloud.empty()) throw Error(ErrorCode::EmptyGeometry, "cannot place cameras around an empty cloud");
  if (resolution < 1) throw Error(ErrorCode::InvalidArgument, "resolution must be positive");
  require_finite(cloud, "surface extraction input");
  Point3 centroid = Point3::Zero();
  for (const auto& p : cloud) centroid += p;
  centroid /= static_cast<double>(cloud.size());
  double half = 0.0;
  for (const auto& p : cloud) half = std::max(half, (p - centroid).cwiseAbs().maxCoeff());
  half = std::max(half * (1.0 + padding), 1e-3);
  // The nearest cube face must fit inside the frustum.
  const double distance = half + half / std::tan(0.5 * fov);

  std::array<CameraView, 6> views;
  const std::array<Point3, 6> dirs = {Point3::UnitX(), -Point3::UnitX(), Point3::UnitY(),
                                      -Point3::UnitY(), Point3::UnitZ(), -Point3::UnitZ()};
  for (std::size_t i = 0; i < 6; ++i) {
    CameraView& v = views[i];
    v.eye = centroid + distance * dirs[i];
    v.center = centroid;
    v.up = i < 4 ? Point3::UnitZ() : Point3::UnitY();
    v.fov = fov;
    v.width = v.height = resolution;
  }
  return views;
}

/// `count` cameras on a Fibonacci sphere around the cloud, at the same radius
/// the hexahedron layout would use.
inline std::vector<CameraView> sphere_views(std::span<const Point3> cloud, int count, int resolution = 512,
                                            double fov = std::numbers::pi / 3.0, double padding = 0.05) {
  if (count < 1) throw Error(ErrorCode::InvalidArgument, "need at least one camera");
  const auto cube = hexahedron_views(cloud, resolution, fov, padding);
  const Point3 centroid = cube[0].center;
  const double distance = (cube[0].eye - centroid).norm();
  std::vector<CameraView> views;
  views.reserve(static_cast<std::size_t>(count));
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < count; ++i) {
    const double z = count == 1 ? 1.0 : 1.0 - 2.0 * (i + 0.5) / count;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const Point3 dir(r * std::cos(golden * i), r * std::sin(golden * i), z);
    CameraView v = cube[0];
    v.eye = centroid + distance * dir;
    v.up = std::abs(dir.z()) > 0.9 ? Point3::UnitY() : Point3::UnitZ();
    views.push_back(v);
  }
  return views;
}

/// Z-buffer render: every point splats a disc of `splat_radius` pixels and
/// each pixel keeps the smallest camera depth.
inline DepthImage render_depth(std::span<const Point3> cloud, const CameraView& view, int splat_radius = 2) {
  view.validate();
  const detail::CameraFrame frame(view);
  DepthImage image(view.width, view.height);
  for (const auto& p : cloud) {
    if (const auto hit = frame.project(p)) detail::splat(image, *hit, std::max(splat_radius, 0));
  }
  return image;
}

/// One world-space point per filled pixel.
inline PointCloud unproject(const DepthImage& depth, const CameraView& view) {
  view.validate();
  if (depth.width != view.width || depth.height != view.height ||
      depth.depth.size() != static_cast<std::size_t>(depth.width) * static_cast<std::size_t>(depth.height)) {
    throw Error(ErrorCode::InvalidArgument, "depth image does not match the camera resolution");
  }
  const detail::CameraFrame frame(view);
  PointCloud out;
  for (int row = 0; row < depth.height; ++row) {
    for (int col = 0; col < depth.width; ++col) {
      const double z = depth.at(col, row);
      if (z != DepthImage::kEmpty) out.push_back(frame.unproject(col, row, z));
    }
  }
  return out;
}

enum class SurfaceOutput {
  /// Keep the input points that pass the depth test in at least one view.
  VisibleInputPoints,
  /// Aggregate the unprojected depth pixels of every view, voxel-deduplicated.
  UnprojectedPixels,
};

struct SurfaceOptions {
  int resolution = 512;
  /// Splat radius in pixels; 0 picks a world radius from the cloud's median
  /// nearest-neighbor spacing so that splats close the gaps between samples.
  int splat_radius = 0;
  double splat_spacing_factor = 2.5;
  /// With automatic radius, splat discs in each point's estimated tangent
  /// plane instead of facing the camera.
  bool oriented_splats = true;
  /// Depth slack of the visibility test in units of the median spacing (or
  /// of the splat footprint when splat_radius is set in pixels).
  double depth_tolerance = 1.5;
  double fov = std::numbers::pi / 3.0;
  double padding = 0.05;
  /// 0 selects the six hexahedron views, otherwise that many sphere views.
  int sphere_camera_count = 0;
  SurfaceOutput output = SurfaceOutput::VisibleInputPoints;
};

inline PointCloud extract_surface_points(std::span<const Point3> cloud, const SurfaceOptions& options = {}) {
  if (cloud.empty()) throw Error(ErrorCode::EmptyGeometry, "surface extraction of an empty cloud");
  if (cloud.size() == 1) return PointCloud(cloud.begin(), cloud.end());

  std::vector<CameraView> views;
  if (options.sphere_camera_count > 0) {
    views = sphere_views(cloud, options.sphere_camera_count, options.resolution, options.fov, options.padding);
  } else {
    const auto cube = hexahedron_views(cloud, options.resolution, options.fov, options.padding);
    views.assign(cube.begin(), cube.end());
  }

  const double spacing = options.splat_radius > 0 ? 0.0 : median_nn_distance(cloud);
  const double world_radius = options.splat_spacing_factor * spacing;
  const std::vector<Point3> normals =
      options.splat_radius > 0 || !options.oriented_splats ? std::vector<Point3>{} : estimate_normals(cloud);

  std::vector<std::future<DepthImage>> renders;
  renders.reserve(views.size());
  for (const auto& view : views) {
    renders.push_back(std::async(std::launch::async, [&cloud, &view, &options, &normals, world_radius] {
      if (options.splat_radius > 0) return render_depth(cloud, view, options.splat_radius);
      if (!normals.empty()) return detail::render_surfels(cloud, normals, view, world_radius);
      return detail::render_depth_world(cloud, view, world_radius);
    }));
  }
  std::vector<DepthImage> images;
  images.reserve(views.size());
  for (auto& r : renders) images.push_back(r.get());

  if (options.output == SurfaceOutput::VisibleInputPoints) {
    std::vector<char> visible(cloud.size(), 0);
    for (std::size_t v = 0; v < views.size(); ++v) {
      const detail::CameraFrame frame(views[v]);
      for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (visible[i]) continue;
        const auto hit = frame.project(cloud[i]);
        if (!hit) continue;
        const double slack = options.splat_radius > 0 ? options.splat_radius * hit->depth / frame.focal : spacing;
        if (hit->depth <= images[v].at(hit->col, hit->row) + options.depth_tolerance * slack) visible[i] = 1;
      }
    }
    PointCloud out;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      if (visible[i]) out.push_back(cloud[i]);
    }
    return out;
  }

  // Pixel aggregation: view order, then row-major pixel order; first point in
  // each voxel wins.
  const double voxel = (views[0].eye - views[0].center).norm() / views[0].focal_px();
  struct KeyHash {
    std::size_t operator()(const std::array<std::int64_t, 3>& k) const {
      return static_cast<std::size_t>(k[0] * 73856093LL ^ k[1] * 19349663LL ^ k[2] * 83492791LL);
    }
  };
  const Point3 anchor = views[0].center;
  std::unordered_set<std::array<std::int64_t, 3>, KeyHash> occupied;
  PointCloud out;
  for (std::size_t v = 0; v < views.size(); ++v) {
    for (const auto& p : unproject(images[v], views[v])) {
      const Point3 cell = ((p - anchor) / voxel).array().floor();
      const std::array<std::int64_t, 3> key = {static_cast<std::int64_t>(cell.x()), static_cast<std::int64_t>(cell.y()),
                                               static_cast<std::int64_t>(cell.z())};
      if (occupied.insert(key).second) out.push_back(p);
    }
  }
  return out;
}

inline PointCloud extract_surface_points(std::span<const Point3> cloud, int resolution, int splat_radius) {
  SurfaceOptions options;
  options.resolution = resolution;
  options.splat_radius = splat_radius;
  return extract_surface_points(cloud, options);
}

}  // namespace flowreg
