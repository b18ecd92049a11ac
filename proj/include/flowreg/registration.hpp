#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "flowreg/flow/train.hpp"
#include "flowreg/geometry.hpp"
#include "flowreg/point_ops.hpp"
#include "flowreg/surface_extraction.hpp"

namespace flowreg {

struct RegistrationConfig {
  double lambda_cd_inter = 1.0;
  double lambda_cd_final = 10.0;
  double lambda_arap = 2.0;
  int iterations = 4000;
  double learning_rate = 1e-3;
  double t0 = 0.0;
  double t1 = 0.5;
  int ode_steps = 32;
  std::vector<int> mlp_hidden = {128, 128, 128};
  std::string activation = "tanh";
  /// Guidance frames are subsampled to this many points; 0 means the source vertex count.
  std::size_t fps_target_size = 0;
  double outlier_multiplier = 3.0;
  bool preprocess_guidance = true;
  int surface_resolution = 512;
  /// Keep raw frames j = stride, 2*stride, ... whose stride window fits in the sequence.
  int guidance_stride = 2;
  int nicp_iterations = 20;
  double nicp_damping = 0.5;
  double nicp_fit_weight = 4.0;
  int knn = 6;
  std::uint64_t seed = 0;

  LossWeights weights() const { return LossWeights{lambda_cd_inter, lambda_cd_final, lambda_arap}; }
  OdeConfig ode() const { return OdeConfig{t0, t1, ode_steps}; }

  TrainConfig train() const {
    TrainConfig tc;
    tc.iterations = iterations;
    tc.adam.learning_rate = learning_rate;
    tc.hidden = mlp_hidden;
    tc.activation = parse_activation(activation);
    tc.seed = seed;
    return tc;
  }

  void validate() const {
    weights().validate();
    ode().validate();
    parse_activation(activation);
    if (iterations < 1 || nicp_iterations < 0 || guidance_stride < 1 || surface_resolution < 1 || knn < 1) {
      throw Error(ErrorCode::InvalidArgument, "configuration counts must be at least 1");
    }
    if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be positive");
    if (!(outlier_multiplier > 0.0)) throw Error(ErrorCode::InvalidArgument, "outlier multiplier must be positive");
    if (!(nicp_damping > 0.0 && nicp_damping <= 1.0)) throw Error(ErrorCode::InvalidArgument, "NICP damping must lie in (0, 1]");
    for (int h : mlp_hidden) {
      if (h < 1) throw Error(ErrorCode::InvalidArgument, "hidden widths must be positive");
    }
  }
};

struct CorrespondenceMap {
  std::vector<std::size_t> map;
  std::vector<double> distances;
};

// ---------------------------------------------------------------------------
// Guidance preprocessing

/// 1-based indices of the raw frames kept for a sequence of `frame_count`.
inline std::vector<std::size_t> select_guidance_frames(std::size_t frame_count, int stride) {
  if (stride < 1) throw Error(ErrorCode::InvalidArgument, "guidance stride must be at least 1");
  const auto s = static_cast<std::size_t>(stride);
  std::vector<std::size_t> out;
  for (std::size_t j = s; j + s - 1 <= frame_count; j += s) out.push_back(j);
  return out;
}

/// Outlier removal, interior removal and FPS for one raw frame.
inline PointCloud clean_guidance_frame(std::span<const Point3> frame, std::size_t target_size,
                                       const RegistrationConfig& config) {
  PointCloud cloud(frame.begin(), frame.end());
  if (config.preprocess_guidance) {
    if (cloud.size() >= 2) cloud = remove_outliers(cloud, config.outlier_multiplier);
    if (!cloud.empty()) {
      SurfaceOptions opts;
      opts.resolution = config.surface_resolution;
      cloud = extract_surface_points(cloud, opts);
    }
  }
  if (cloud.size() < 4) throw Error(ErrorCode::DegenerateGuidance, "guidance frame collapsed to fewer than 4 points");
  if (cloud.size() > target_size) cloud = gather(cloud, farthest_point_sample(cloud, target_size, 0));
  return cloud;
}

/// Cleans the selected raw frames and pins each to its flow time. An empty
/// input yields an empty sequence (direct flow estimation).
inline GuidanceSequence preprocess_guidance(const std::vector<PointCloud>& raw_frames, std::size_t source_size,
                                            const RegistrationConfig& config) {
  GuidanceSequence out;
  const std::size_t target_size = config.fps_target_size > 0 ? config.fps_target_size : source_size;
  if (target_size < 1) throw Error(ErrorCode::InvalidArgument, "guidance sample size must be positive");
  for (std::size_t j : select_guidance_frames(raw_frames.size(), config.guidance_stride)) {
    out.frames.push_back(clean_guidance_frame(raw_frames[j - 1], target_size, config));
    out.times.push_back(guidance_time(j, raw_frames.size(), config.t1, config.t0));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Non-rigid ICP

struct NicpOptions {
  int iterations = 20;
  double damping = 0.5;
  /// Weight of the closest-point pull relative to one ARAP edge term.
  double fit_weight = 4.0;
  int max_backtracks = 6;
};

/// Closest-point targets with ARAP-regularized Gauss-Seidel vertex updates.
/// The input shape is the ARAP rest state. An update is only accepted when
/// the symmetric Chamfer distance to the target does not grow.
inline PointCloud nicp_refine(std::span<const Point3> deformed, std::span<const Point3> target, const NeighborGraph& graph,
                              const NicpOptions& options = {}, std::vector<double>* chamfer_trace = nullptr) {
  if (deformed.empty()) throw Error(ErrorCode::EmptyGeometry, "NICP input is empty");
  if (target.empty()) throw Error(ErrorCode::EmptyGeometry, "NICP target is empty");
  if (graph.size() != deformed.size()) throw Error(ErrorCode::InvalidArgument, "neighbor graph size differs from the shape");
  if (options.iterations < 0) throw Error(ErrorCode::InvalidArgument, "NICP iteration count must be non-negative");

  const PointCloud rest(deformed.begin(), deformed.end());
  PointCloud current = rest;
  if (options.iterations == 0) return current;

  const KdTree target_index(target);
  double cd = chamfer_distance(KdTree(current), target_index);
  if (chamfer_trace) chamfer_trace->push_back(cd);

  for (int it = 0; it < options.iterations; ++it) {
    const auto rotations = fit_rotations(rest, current, graph);
    PointCloud candidate = current;
    for (std::size_t i = 0; i < candidate.size(); ++i) {
      const Point3 closest = target_index.points()[target_index.nearest(candidate[i]).index];
      Point3 acc = options.fit_weight * closest;
      for (std::size_t j : graph.neighbors[i]) {
        acc += candidate[j] + 0.5 * (rotations[i] + rotations[j]) * (rest[i] - rest[j]);
      }
      const Point3 solved = acc / (options.fit_weight + static_cast<double>(graph.neighbors[i].size()));
      candidate[i] += options.damping * (solved - candidate[i]);
    }

    bool accepted = false;
    double blend = 1.0;
    for (int b = 0; b <= options.max_backtracks; ++b, blend *= 0.5) {
      PointCloud trial = candidate;
      if (b > 0) {
        for (std::size_t i = 0; i < trial.size(); ++i) trial[i] = current[i] + blend * (candidate[i] - current[i]);
      }
      const double trial_cd = chamfer_distance(KdTree(trial), target_index);
      if (trial_cd <= cd) {
        current = std::move(trial);
        cd = trial_cd;
        accepted = true;
        break;
      }
    }
    if (chamfer_trace) chamfer_trace->push_back(cd);
    if (!accepted) break;
  }
  return current;
}

// ---------------------------------------------------------------------------
// Correspondences and interpolation

/// Nearest target vertex for every deformed source vertex (ties to the lowest index).
inline CorrespondenceMap extract_correspondences(std::span<const Point3> deformed_source, std::span<const Point3> target) {
  if (deformed_source.empty() || target.empty()) throw Error(ErrorCode::EmptyGeometry, "correspondence input is empty");
  const KdTree index(target);
  CorrespondenceMap out;
  out.map.reserve(deformed_source.size());
  out.distances.reserve(deformed_source.size());
  for (const auto& p : deformed_source) {
    const Neighbor nb = index.nearest(p);
    out.map.push_back(nb.index);
    out.distances.push_back(std::sqrt(nb.sq_dist));
  }
  return out;
}

/// Advances points from flow fraction `from` to `to` (0 = source time t1,
/// 1 = target time t0) with the step size of the full `ode.steps` grid.
inline PointCloud advance_flow(const VelocityField& field, std::span<const Point3> points, double from, double to,
                               const OdeConfig& ode) {
  ode.validate();
  if (!(from >= 0.0 && from <= 1.0 && to >= 0.0 && to <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "flow fractions must lie in [0, 1]");
  }
  if (from == to) return PointCloud(points.begin(), points.end());
  const int steps = std::max(1, static_cast<int>(std::lround(std::abs(to - from) * ode.steps)));
  const double t_a = ode.t1 + from * (ode.t0 - ode.t1);
  const double t_b = ode.t1 + to * (ode.t0 - ode.t1);
  return integrate_flow(field, points, t_a, t_b, steps);
}

/// Source mesh carried `fraction` of the way along the flow. `normalization`
/// maps the mesh into the coordinates the field was trained in.
inline TriMesh interpolate_shape(const VelocityField& field, const TriMesh& source, double fraction, const OdeConfig& ode,
                                 const NormalizeTransform& normalization = {}) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw Error(ErrorCode::InvalidArgument, "fraction must lie in [0, 1]");
  if (fraction == 0.0) return source;
  const PointCloud moved = advance_flow(field, normalization.apply(source.vertices), 0.0, fraction, ode);
  return TriMesh{normalization.invert(moved), source.triangles};
}

// ---------------------------------------------------------------------------
// End-to-end

struct RegistrationResult {
  /// Source connectivity with registered vertex positions (input coordinates).
  TriMesh registered;
  CorrespondenceMap correspondences;
  VelocityField field;
  std::vector<LossBreakdown> history;
  LossBreakdown final_loss;
  /// Joint normalization the field was trained under.
  NormalizeTransform normalization;
  /// Flow output before NICP, in input coordinates.
  PointCloud flow_output;
  GuidanceSequence guidance;
  std::map<std::string, double> stage_seconds;
};

using ProgressCallback = std::function<void(int iteration, const LossBreakdown&)>;

/// Normalizes both shapes jointly, trains the flow, refines with NICP and
/// extracts vertex correspondences. Shapes without faces are handled as
/// point clouds with a k-NN neighbor graph.
inline RegistrationResult run_registration(const TriMesh& source, const TriMesh& target,
                                           const std::vector<PointCloud>& raw_guidance, const RegistrationConfig& config,
                                           const ProgressCallback& progress = {}) {
  using Clock = std::chrono::steady_clock;
  config.validate();
  if (source.vertices.empty()) throw Error(ErrorCode::EmptyGeometry, "source shape is empty");
  if (target.vertices.empty()) throw Error(ErrorCode::EmptyGeometry, "target shape is empty");
  validate_mesh(source);
  validate_mesh(target);

  RegistrationResult result;
  auto tick = Clock::now();
  auto lap = [&](const char* stage) {
    const auto now = Clock::now();
    result.stage_seconds[stage] = std::chrono::duration<double>(now - tick).count();
    tick = now;
  };

  PointCloud joint = source.vertices;
  joint.insert(joint.end(), target.vertices.begin(), target.vertices.end());
  result.normalization = fit_unit_sphere(joint);
  const NormalizeTransform& tf = result.normalization;
  const PointCloud src = tf.apply(source.vertices);
  const PointCloud tgt = tf.apply(target.vertices);
  std::vector<PointCloud> frames;
  frames.reserve(raw_guidance.size());
  for (const auto& f : raw_guidance) frames.push_back(tf.apply(f));
  lap("normalize");

  result.guidance = preprocess_guidance(frames, src.size(), config);
  lap("preprocess_guidance");

  const NeighborGraph graph = NeighborGraph::for_shape(TriMesh{src, source.triangles}, static_cast<std::size_t>(config.knn));
  const FlowObjective objective(src, result.guidance, tgt, graph, config.weights(), config.ode());
  TrainResult trained = train_flow(objective, config.train(), progress);
  result.field = std::move(trained.field);
  result.history = std::move(trained.history);
  result.final_loss = trained.final_loss;
  lap("train");

  const PointCloud flowed = integrate_flow(result.field, src, config.t1, config.t0, config.ode_steps);
  result.flow_output = tf.invert(flowed);
  NicpOptions nicp;
  nicp.iterations = config.nicp_iterations;
  nicp.damping = config.nicp_damping;
  nicp.fit_weight = config.nicp_fit_weight;
  const PointCloud refined = nicp_refine(flowed, tgt, graph, nicp);
  lap("nicp");

  result.correspondences = extract_correspondences(refined, tgt);
  result.registered = TriMesh{tf.invert(refined), source.triangles};
  lap("correspondences");
  return result;
}

}  // namespace flowreg
