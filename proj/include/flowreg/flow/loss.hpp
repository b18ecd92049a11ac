#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "flowreg/flow/arap.hpp"
#include "flowreg/flow/ode.hpp"
#include "flowreg/flow/velocity_field.hpp"
#include "flowreg/point_ops.hpp"

namespace flowreg {

/// Intermediate clouds, each pinned to a flow time.
struct GuidanceSequence {
  std::vector<PointCloud> frames;
  std::vector<double> times;

  std::size_t size() const { return frames.size(); }
  bool empty() const { return frames.empty(); }

  /// Times must be strictly monotone from `t_start` towards `t_end` and lie
  /// strictly between them.
  void validate(double t_start, double t_end) const {
    if (frames.size() != times.size()) throw Error(ErrorCode::InvalidArgument, "guidance frames and times differ in count");
    const double sign = t_end > t_start ? 1.0 : -1.0;
    double prev = t_start;
    for (std::size_t i = 0; i < frames.size(); ++i) {
      if (frames[i].empty()) throw Error(ErrorCode::EmptyGeometry, "guidance frame " + std::to_string(i) + " is empty");
      if (!((times[i] - prev) * sign > 0.0) || !((t_end - times[i]) * sign > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "guidance times must increase strictly inside the flow interval");
      }
      prev = times[i];
    }
  }
};

/// Flow time of raw frame `j` (1-based) out of `frame_count`, placed evenly
/// between the source time and the target time.
inline double guidance_time(std::size_t j, std::size_t frame_count, double t_start, double t_end) {
  return t_start + (static_cast<double>(j) / static_cast<double>(frame_count + 1)) * (t_end - t_start);
}

struct LossWeights {
  double cd_inter = 1.0;
  double cd_final = 10.0;
  double arap = 2.0;

  void validate() const {
    if (!(cd_inter >= 0.0) || !(cd_final >= 0.0) || !(arap >= 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "loss weights must be non-negative");
    }
  }
};

/// Raw terms plus the weighted total.
struct LossBreakdown {
  double total = 0.0;
  double cd_inter = 0.0;
  double cd_final = 0.0;
  double arap = 0.0;
};

namespace detail {

/// Chamfer distance between the columns of `y` and an indexed cloud, with
/// dCD/dy added into `grad` (scaled by `scale`) when requested. NN
/// assignments are held fixed for the derivative.
inline double chamfer_with_gradient(const Eigen::Matrix3Xd& y, const KdTree& target, double scale,
                                    Eigen::Matrix3Xd* grad) {
  const PointCloud pred = to_cloud(y);
  const KdTree pred_index(pred);
  const double n = static_cast<double>(pred.size());
  const double m = static_cast<double>(target.size());
  double forward_sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Neighbor nb = target.nearest(pred[i]);
    forward_sum += nb.sq_dist;
    if (grad) grad->col(static_cast<Eigen::Index>(i)) += scale * (2.0 / n) * (pred[i] - target.points()[nb.index]);
  }
  double backward_sum = 0.0;
  for (std::size_t j = 0; j < target.size(); ++j) {
    const Point3& v = target.points()[j];
    const Neighbor nb = pred_index.nearest(v);
    backward_sum += nb.sq_dist;
    if (grad) grad->col(static_cast<Eigen::Index>(nb.index)) += scale * (2.0 / m) * (pred[nb.index] - v);
  }
  return forward_sum / n + backward_sum / m;
}

}  // namespace detail

/// The registration objective for one shape pair, with the target and
/// guidance indices built once and reused across evaluations.
class FlowObjective {
 public:
  FlowObjective(std::span<const Point3> source, const GuidanceSequence& guidance, std::span<const Point3> target,
                NeighborGraph graph, LossWeights weights, OdeConfig ode)
      : source_(source.begin(), source.end()),
        source_matrix_(to_matrix(source)),
        target_index_(target),
        graph_(std::move(graph)),
        weights_(weights),
        ode_(ode) {
    ode_.validate();
    weights_.validate();
    if (source_.empty()) throw Error(ErrorCode::EmptyGeometry, "source is empty");
    if (target.empty()) throw Error(ErrorCode::EmptyGeometry, "target is empty");
    require_finite(source, "source");
    require_finite(target, "target");
    if (graph_.size() != source_.size()) throw Error(ErrorCode::InvalidArgument, "neighbor graph size differs from source");
    guidance.validate(ode_.t1, ode_.t0);
    if (const std::size_t edges = graph_.directed_edge_count(); edges > 0) arap_scale_ = 1.0 / static_cast<double>(edges);
    for (const auto& frame : guidance.frames) guidance_index_.emplace_back(frame);
    guidance_times_ = guidance.times;
    nodes_ = make_time_grid(ode_.t1, ode_.t0, ode_.steps, guidance_times_);
    for (double t : guidance_times_) guidance_nodes_.push_back(grid_index(nodes_, t));
  }

  const std::vector<double>& time_grid() const { return nodes_; }
  const LossWeights& weights() const { return weights_; }
  const PointCloud& source() const { return source_; }

  LossBreakdown evaluate(const VelocityField& field) const { return run(field, nullptr); }

  /// Also overwrites `grad` with dLoss/dparams.
  LossBreakdown evaluate(const VelocityField& field, ParameterSet& grad) const { return run(field, &grad); }

  /// Pre-refinement prediction along the objective's own time grid.
  PointCloud predict(const VelocityField& field) const { return to_cloud(integrate_grid(field, source_matrix_, nodes_)); }

 private:
  LossBreakdown run(const VelocityField& field, ParameterSet* grad) const {
    const FlowTrajectory traj(field, source_matrix_, nodes_);
    const Eigen::Index n = source_matrix_.cols();
    std::vector<Eigen::Matrix3Xd> node_grads(grad ? nodes_.size() : 0);

    LossBreakdown out;
    const std::size_t frames = guidance_index_.size();
    for (std::size_t f = 0; f < frames; ++f) {
      const std::size_t node = guidance_nodes_[f];
      Eigen::Matrix3Xd* g = nullptr;
      if (grad) {
        node_grads[node].setZero(3, n);
        g = &node_grads[node];
      }
      out.cd_inter += detail::chamfer_with_gradient(traj.state(node), guidance_index_[f],
                                                    weights_.cd_inter / static_cast<double>(frames), g);
    }
    if (frames > 0) out.cd_inter /= static_cast<double>(frames);

    const std::size_t last = nodes_.size() - 1;
    Eigen::Matrix3Xd* g_last = nullptr;
    if (grad) {
      node_grads[last].setZero(3, n);
      g_last = &node_grads[last];
    }
    out.cd_final = detail::chamfer_with_gradient(traj.final_state(), target_index_, weights_.cd_final, g_last);

    const PointCloud deformed = to_cloud(traj.final_state());
    if (grad) {
      Eigen::Matrix3Xd g_arap;
      out.arap = arap_scale_ * arap_energy_and_gradient(source_, deformed, graph_, g_arap);
      node_grads[last] += (weights_.arap * arap_scale_) * g_arap;
    } else {
      out.arap = arap_scale_ * arap_energy(source_, deformed, graph_);
    }

    out.total = weights_.cd_inter * out.cd_inter + weights_.cd_final * out.cd_final + weights_.arap * out.arap;
    if (!std::isfinite(out.total)) throw Error(ErrorCode::DivergedFlow, "loss became non-finite");

    if (grad) {
      *grad = zeros_like(field.layers());
      traj.backward(node_grads, *grad);
    }
    return out;
  }

  PointCloud source_;
  Eigen::Matrix3Xd source_matrix_;
  KdTree target_index_;
  std::vector<KdTree> guidance_index_;
  std::vector<double> guidance_times_;
  NeighborGraph graph_;
  /// The loss uses the ARAP energy averaged over directed edges, so its
  /// balance against the (mean) Chamfer terms does not depend on resolution.
  double arap_scale_ = 1.0;
  LossWeights weights_;
  OdeConfig ode_;
  std::vector<double> nodes_;
  std::vector<std::size_t> guidance_nodes_;
};

inline LossBreakdown loss_total(const VelocityField& field, std::span<const Point3> source, const GuidanceSequence& guidance,
                                std::span<const Point3> target, const NeighborGraph& graph, const LossWeights& weights,
                                const OdeConfig& ode) {
  return FlowObjective(source, guidance, target, graph, weights, ode).evaluate(field);
}

/// dLoss/dparams by reverse accumulation through the unrolled RK4 steps.
inline ParameterSet gradient(const VelocityField& field, std::span<const Point3> source, const GuidanceSequence& guidance,
                             std::span<const Point3> target, const NeighborGraph& graph, const LossWeights& weights,
                             const OdeConfig& ode) {
  ParameterSet grad;
  FlowObjective(source, guidance, target, graph, weights, ode).evaluate(field, grad);
  return grad;
}

}  // namespace flowreg
