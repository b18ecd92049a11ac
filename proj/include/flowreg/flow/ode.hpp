#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "flowreg/flow/velocity_field.hpp"

namespace flowreg {

/// Flow interval and step count. Registration integrates from t1 (source)
/// to t0 (target prediction).
struct OdeConfig {
  double t0 = 0.0;
  double t1 = 0.5;
  int steps = 32;

  void validate() const {
    if (steps < 1) throw Error(ErrorCode::InvalidArgument, "ODE step count must be at least 1");
    if (!(t0 != t1) || !std::isfinite(t0) || !std::isfinite(t1)) {
      throw Error(ErrorCode::InvalidArgument, "flow interval must have distinct finite endpoints");
    }
  }
};

/// Uniform grid of `steps` intervals from t_a to t_b, with `breakpoints`
/// (strictly inside the interval) inserted as extra nodes.
inline std::vector<double> make_time_grid(double t_a, double t_b, int steps, std::span<const double> breakpoints = {}) {
  if (steps < 1) throw Error(ErrorCode::InvalidArgument, "ODE step count must be at least 1");
  std::vector<double> nodes;
  nodes.reserve(static_cast<std::size_t>(steps) + 1 + breakpoints.size());
  for (int i = 0; i <= steps; ++i) {
    nodes.push_back(i == steps ? t_b : t_a + (t_b - t_a) * (static_cast<double>(i) / steps));
  }
  const double sign = t_b > t_a ? 1.0 : -1.0;
  for (double b : breakpoints) {
    if (!((b - t_a) * sign > 0.0 && (t_b - b) * sign > 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "breakpoint lies outside the open flow interval");
    }
    nodes.push_back(b);
  }
  std::sort(nodes.begin(), nodes.end(), [sign](double x, double y) { return sign * x < sign * y; });
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  return nodes;
}

/// Index of `t` in a grid produced by make_time_grid.
inline std::size_t grid_index(std::span<const double> nodes, double t) {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i] == t) return i;
  }
  throw Error(ErrorCode::InvalidArgument, "time is not a grid node");
}

inline void check_finite_state(const Eigen::Matrix3Xd& y) {
  if (!y.allFinite()) throw Error(ErrorCode::DivergedFlow, "flow trajectory became non-finite");
}

/// One classical RK4 step of size h from (y, t).
inline Eigen::Matrix3Xd rk4_step(const VelocityField& field, const Eigen::Matrix3Xd& y, double t, double h) {
  const Eigen::Matrix3Xd k1 = field.forward(y, t);
  const Eigen::Matrix3Xd k2 = field.forward(y + 0.5 * h * k1, t + 0.5 * h);
  const Eigen::Matrix3Xd k3 = field.forward(y + 0.5 * h * k2, t + 0.5 * h);
  const Eigen::Matrix3Xd k4 = field.forward(y + h * k3, t + h);
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

inline Eigen::Matrix3Xd integrate_grid(const VelocityField& field, Eigen::Matrix3Xd y, std::span<const double> nodes) {
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    y = rk4_step(field, y, nodes[i], nodes[i + 1] - nodes[i]);
    check_finite_state(y);
  }
  return y;
}

/// Fixed-step RK4 from t_a to t_b (either direction). Points never interact.
inline PointCloud integrate_flow(const VelocityField& field, std::span<const Point3> start, double t_a, double t_b,
                                 int steps) {
  require_finite(start, "flow start");
  const auto nodes = make_time_grid(t_a, t_b, steps);
  return to_cloud(integrate_grid(field, to_matrix(start), nodes));
}

/// Forward RK4 pass that keeps what the reverse pass needs: the state at
/// every node and the four stage inputs of every step. Stage activations are
/// recomputed during the backward sweep.
class FlowTrajectory {
 public:
  FlowTrajectory(const VelocityField& field, const Eigen::Matrix3Xd& start, std::vector<double> nodes)
      : field_(&field), nodes_(std::move(nodes)) {
    states_.reserve(nodes_.size());
    stages_.reserve(nodes_.size());
    states_.push_back(start);
    for (std::size_t i = 0; i + 1 < nodes_.size(); ++i) {
      const double t = nodes_[i];
      const double h = nodes_[i + 1] - t;
      const Eigen::Matrix3Xd& y = states_.back();
      Stage s;
      s.z[0] = y;
      const Eigen::Matrix3Xd k1 = field.forward(s.z[0], t);
      s.z[1] = y + 0.5 * h * k1;
      const Eigen::Matrix3Xd k2 = field.forward(s.z[1], t + 0.5 * h);
      s.z[2] = y + 0.5 * h * k2;
      const Eigen::Matrix3Xd k3 = field.forward(s.z[2], t + 0.5 * h);
      s.z[3] = y + h * k3;
      const Eigen::Matrix3Xd k4 = field.forward(s.z[3], t + h);
      Eigen::Matrix3Xd next = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      check_finite_state(next);
      stages_.push_back(std::move(s));
      states_.push_back(std::move(next));
    }
  }

  const std::vector<double>& nodes() const { return nodes_; }
  const Eigen::Matrix3Xd& state(std::size_t node) const { return states_[node]; }
  const Eigen::Matrix3Xd& final_state() const { return states_.back(); }

  /// Reverse sweep. `node_grads[i]` is dLoss/d(state i) (empty matrix = none).
  /// Parameter gradients are accumulated into `grad`; returns dLoss/d(start).
  Eigen::Matrix3Xd backward(const std::vector<Eigen::Matrix3Xd>& node_grads, ParameterSet& grad) const {
    const Eigen::Index n = states_.front().cols();
    Eigen::Matrix3Xd adj = Eigen::Matrix3Xd::Zero(3, n);
    auto add_node = [&](std::size_t i) {
      if (i < node_grads.size() && node_grads[i].size() > 0) adj += node_grads[i];
    };
    add_node(nodes_.size() - 1);
    VelocityField::Tape tape;
    for (std::size_t i = stages_.size(); i-- > 0;) {
      const double t = nodes_[i];
      const double h = nodes_[i + 1] - t;
      const Stage& s = stages_[i];
      const std::array<double, 4> stage_t = {t, t + 0.5 * h, t + 0.5 * h, t + h};
      std::array<Eigen::Matrix3Xd, 4> gk;
      gk[0] = (h / 6.0) * adj;
      gk[1] = (h / 3.0) * adj;
      gk[2] = (h / 3.0) * adj;
      gk[3] = (h / 6.0) * adj;
      Eigen::Matrix3Xd gy = adj;
      // Stage j's input is y + c_j * h * k_{j-1}; walk the stages last to first.
      const std::array<double, 4> c = {0.0, 0.5, 0.5, 1.0};
      for (int j = 3; j >= 0; --j) {
        field_->forward(s.z[j], stage_t[j], &tape);
        const Eigen::Matrix3Xd gz = field_->backward(tape, gk[j], grad);
        gy += gz;
        if (j > 0) gk[j - 1] += c[j] * h * gz;
      }
      adj = std::move(gy);
      add_node(i);
    }
    return adj;
  }

 private:
  struct Stage {
    std::array<Eigen::Matrix3Xd, 4> z;
  };

  const VelocityField* field_;
  std::vector<double> nodes_;
  std::vector<Eigen::Matrix3Xd> states_;
  std::vector<Stage> stages_;
};

}  // namespace flowreg
