#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "flowreg/flow/loss.hpp"

namespace flowreg {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(const ParameterSet& params, AdamOptions options)
      : options_(options), m_(zeros_like(params)), v_(zeros_like(params)) {}

  void step(ParameterSet& params, const ParameterSet& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
    const double b1 = options_.beta1, b2 = options_.beta2;
    for (std::size_t l = 0; l < params.size(); ++l) {
      update(params[l].weight.array(), grad[l].weight.array(), m_[l].weight.array(), v_[l].weight.array(), b1, b2, c1, c2);
      update(params[l].bias.array(), grad[l].bias.array(), m_[l].bias.array(), v_[l].bias.array(), b1, b2, c1, c2);
    }
  }

  long iteration() const { return t_; }

 private:
  template <typename P, typename G, typename M, typename V>
  void update(P&& p, const G& g, M&& m, V&& v, double b1, double b2, double c1, double c2) const {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.square();
    p -= options_.learning_rate * (m / c1) / ((v / c2).sqrt() + options_.epsilon);
  }

  AdamOptions options_;
  ParameterSet m_;
  ParameterSet v_;
  long t_ = 0;
};

struct TrainConfig {
  int iterations = 4000;
  AdamOptions adam;
  std::vector<int> hidden = {128, 128, 128};
  Activation activation = Activation::Tanh;
  /// Scale of the initial output layer; 0 starts from the identity flow.
  double init_output_scale = 0.0;
  std::uint64_t seed = 0;
};

struct TrainResult {
  VelocityField field;
  /// Loss at the parameters of each iteration, before its update.
  std::vector<LossBreakdown> history;
  /// Loss of the returned parameters.
  LossBreakdown final_loss;
};

inline std::vector<int> field_dims(const std::vector<int>& hidden) {
  std::vector<int> dims = {4};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(3);
  return dims;
}

using TrainCallback = std::function<void(int iteration, const LossBreakdown&)>;

/// Adam on the flow objective from a seeded initialization. The sequence of
/// floating-point operations is fixed, so equal seeds give identical histories.
inline TrainResult train_flow(const FlowObjective& objective, const TrainConfig& config, const TrainCallback& callback = {}) {
  if (config.iterations < 0) throw Error(ErrorCode::InvalidArgument, "iteration count must be non-negative");
  TrainResult result;
  result.field = VelocityField::random(field_dims(config.hidden), config.activation, config.seed, config.init_output_scale);
  Adam adam(result.field.layers(), config.adam);
  ParameterSet grad;
  result.history.reserve(static_cast<std::size_t>(config.iterations));
  for (int it = 0; it < config.iterations; ++it) {
    const LossBreakdown loss = objective.evaluate(result.field, grad);
    result.history.push_back(loss);
    if (callback) callback(it, loss);
    adam.step(result.field.layers(), grad);
  }
  result.field.validate();
  result.final_loss = objective.evaluate(result.field);
  return result;
}

inline TrainResult train_flow(std::span<const Point3> source, const GuidanceSequence& guidance, std::span<const Point3> target,
                              const NeighborGraph& graph, const LossWeights& weights, const OdeConfig& ode,
                              const TrainConfig& config) {
  return train_flow(FlowObjective(source, guidance, target, graph, weights, ode), config);
}

}  // namespace flowreg
