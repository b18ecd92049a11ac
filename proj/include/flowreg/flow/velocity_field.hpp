#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "flowreg/geometry.hpp"

namespace flowreg {

enum class Activation { Tanh, Softplus, Identity };

inline std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Softplus: return "softplus";
    case Activation::Identity: return "identity";
  }
  return "tanh";
}

inline Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "softplus") return Activation::Softplus;
  if (name == "identity" || name == "linear" || name == "none") return Activation::Identity;
  throw Error(ErrorCode::InvalidArgument, "unknown activation '" + name + "'");
}

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

/// Parameters laid out like the network; also used for gradients and
/// optimizer moments.
using ParameterSet = std::vector<DenseLayer>;

inline ParameterSet zeros_like(const ParameterSet& params) {
  ParameterSet out;
  out.reserve(params.size());
  for (const auto& l : params) {
    out.push_back(DenseLayer{Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
  }
  return out;
}

inline std::size_t parameter_count(const ParameterSet& params) {
  std::size_t n = 0;
  for (const auto& l : params) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

/// Visits every scalar parameter in a fixed order (layer, weights column-major, then bias).
template <typename Fn>
void for_each_parameter(ParameterSet& params, Fn&& fn) {
  for (auto& l : params) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) fn(l.weight.data()[i]);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) fn(l.bias.data()[i]);
  }
}

inline std::vector<double> flatten(const ParameterSet& params) {
  std::vector<double> out;
  out.reserve(parameter_count(params));
  for_each_parameter(const_cast<ParameterSet&>(params), [&](double& v) { out.push_back(v); });
  return out;
}

inline void unflatten(std::span<const double> values, ParameterSet& params) {
  if (values.size() != parameter_count(params)) throw Error(ErrorCode::InvalidArgument, "parameter vector size mismatch");
  std::size_t k = 0;
  for_each_parameter(params, [&](double& v) { v = values[k++]; });
}

/// Seeded generator: mt19937_64 bits mapped to reals by hand so
/// results do not depend on the standard library's distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// MLP velocity field f(y, t): input is (x, y, z, t), output a 3-vector.
/// Hidden layers share one activation; the output layer is affine.
class VelocityField {
 public:
  /// Cached activations of one batched forward pass.
  struct Tape {
    std::vector<Eigen::MatrixXd> inputs;  // input of each layer
    std::vector<Eigen::MatrixXd> pre;     // pre-activation of each hidden layer
  };

  VelocityField() = default;

  VelocityField(std::vector<int> dims, Activation activation) : dims_(std::move(dims)), activation_(activation) {
    validate_dims();
    for (std::size_t i = 0; i + 1 < dims_.size(); ++i) {
      layers_.push_back(DenseLayer{Eigen::MatrixXd::Zero(dims_[i + 1], dims_[i]), Eigen::VectorXd::Zero(dims_[i + 1])});
    }
  }

  /// Glorot-uniform weights and zero biases. The output layer is scaled by
  /// `output_scale`, so 0 starts from the identity flow.
  static VelocityField random(std::vector<int> dims, Activation activation, std::uint64_t seed,
                              double output_scale = 0.0) {
    VelocityField f(std::move(dims), activation);
    Rng rng(seed);
    for (std::size_t li = 0; li < f.layers_.size(); ++li) {
      auto& l = f.layers_[li];
      const double limit = std::sqrt(6.0 / static_cast<double>(l.weight.rows() + l.weight.cols()));
      const double scale = li + 1 == f.layers_.size() ? output_scale : 1.0;
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) {
        for (Eigen::Index i = 0; i < l.weight.rows(); ++i) l.weight(i, j) = scale * rng.uniform(-limit, limit);
      }
    }
    return f;
  }

  const std::vector<int>& dims() const { return dims_; }
  Activation activation() const { return activation_; }
  const ParameterSet& layers() const { return layers_; }
  ParameterSet& layers() { return layers_; }

  void validate() const {
    validate_dims();
    if (layers_.size() + 1 != dims_.size()) throw Error(ErrorCode::InvalidArgument, "layer count does not match dims");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (layers_[i].weight.rows() != dims_[i + 1] || layers_[i].weight.cols() != dims_[i] ||
          layers_[i].bias.size() != dims_[i + 1]) {
        throw Error(ErrorCode::InvalidArgument, "layer " + std::to_string(i) + " does not chain with dims");
      }
      if (!layers_[i].weight.allFinite() || !layers_[i].bias.allFinite()) {
        throw Error(ErrorCode::NonFiniteInput, "layer " + std::to_string(i) + " has non-finite parameters");
      }
    }
  }

  /// Batched forward pass over the columns of `y` at time t.
  Eigen::Matrix3Xd forward(const Eigen::Matrix3Xd& y, double t, Tape* tape = nullptr) const {
    const Eigen::Index n = y.cols();
    Eigen::MatrixXd x(4, n);
    x.topRows<3>() = y;
    x.row(3).setConstant(t);
    if (tape) {
      tape->inputs.clear();
      tape->pre.clear();
    }
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const auto& l = layers_[li];
      Eigen::MatrixXd z = l.weight * x;
      z.colwise() += l.bias;
      if (tape) tape->inputs.push_back(std::move(x));
      if (li + 1 == layers_.size()) return z;
      if (tape) tape->pre.push_back(z);
      x = activate(z);
    }
    return Eigen::Matrix3Xd::Zero(3, n);  // unreachable for a valid field
  }

  /// Accumulates parameter gradients into `grad` for upstream gradient
  /// `grad_out` (3 x N) and returns the gradient with respect to y.
  Eigen::Matrix3Xd backward(const Tape& tape, const Eigen::Matrix3Xd& grad_out, ParameterSet& grad) const {
    Eigen::MatrixXd g = grad_out;
    for (std::size_t li = layers_.size(); li-- > 0;) {
      if (li + 1 != layers_.size()) {
        if (activation_ == Activation::Tanh) {
          // tanh' = 1 - tanh^2, and tanh(pre) is the next layer's input.
          g.array() *= 1.0 - tape.inputs[li + 1].array().square();
        } else {
          g.array() *= activate_derivative(tape.pre[li]).array();
        }
      }
      grad[li].weight.noalias() += g * tape.inputs[li].transpose();
      grad[li].bias.noalias() += g.rowwise().sum();
      g = layers_[li].weight.transpose() * g;
    }
    return g.topRows<3>();
  }

 private:
  void validate_dims() const {
    if (dims_.size() < 2 || dims_.front() != 4 || dims_.back() != 3) {
      throw Error(ErrorCode::InvalidArgument, "velocity field dims must start at 4 and end at 3");
    }
    for (int d : dims_) {
      if (d < 1) throw Error(ErrorCode::InvalidArgument, "layer widths must be positive");
    }
  }

  Eigen::MatrixXd activate(const Eigen::MatrixXd& z) const {
    switch (activation_) {
      case Activation::Tanh: return z.array().tanh().matrix();
      case Activation::Softplus:
        return z.unaryExpr([](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); });
      case Activation::Identity: return z;
    }
    return z;
  }

  Eigen::MatrixXd activate_derivative(const Eigen::MatrixXd& z) const {
    switch (activation_) {
      case Activation::Tanh: return (1.0 - z.array().tanh().square()).matrix();
      case Activation::Softplus: return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
      case Activation::Identity: return Eigen::MatrixXd::Ones(z.rows(), z.cols());
    }
    return z;
  }

  std::vector<int> dims_;
  Activation activation_ = Activation::Tanh;
  ParameterSet layers_;
};

/// Velocity of every point at time t.
inline PointCloud eval_velocity(const VelocityField& field, std::span<const Point3> points, double t) {
  if (!std::isfinite(t)) throw Error(ErrorCode::NonFiniteInput, "time is not finite");
  require_finite(points, "velocity query");
  return to_cloud(field.forward(to_matrix(points), t));
}

}  // namespace flowreg
