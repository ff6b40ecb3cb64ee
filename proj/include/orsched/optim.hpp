#pragma once

#include <cmath>

#include "orsched/config.hpp"
#include "orsched/mlp.hpp"

namespace orsched {

/// First-order optimizer bound to one network. `step` descends along the supplied gradient.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(const Mlp& net, OptimizerKind kind, double lr, double beta1 = 0.9, double beta2 = 0.999,
            double eps = 1e-8)
      : kind_(kind), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(net.zeros()), v_(net.zeros()) {}

  OptimizerKind kind() const { return kind_; }
  double learning_rate() const { return lr_; }
  long steps() const { return t_; }

  void step(Mlp& net, const MlpGrads& g) {
    ++t_;
    auto& layers = net.layers();
    if (kind_ == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < layers.size(); ++i) {
        layers[i].w -= lr_ * g.w[i];
        layers[i].b -= lr_ * g.b[i];
      }
      return;
    }
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < layers.size(); ++i) {
      m_.w[i] = beta1_ * m_.w[i] + (1.0 - beta1_) * g.w[i];
      v_.w[i] = beta2_ * v_.w[i] + (1.0 - beta2_) * g.w[i].cwiseAbs2();
      m_.b[i] = beta1_ * m_.b[i] + (1.0 - beta1_) * g.b[i];
      v_.b[i] = beta2_ * v_.b[i] + (1.0 - beta2_) * g.b[i].cwiseAbs2();
      layers[i].w.array() -= lr_ * (m_.w[i].array() / c1) / ((v_.w[i].array() / c2).sqrt() + eps_);
      layers[i].b.array() -= lr_ * (m_.b[i].array() / c1) / ((v_.b[i].array() / c2).sqrt() + eps_);
    }
  }

  const MlpGrads& first_moment() const { return m_; }
  const MlpGrads& second_moment() const { return v_; }

 private:
  OptimizerKind kind_ = OptimizerKind::adam;
  double lr_ = 1e-3;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  MlpGrads m_, v_;
};

}  // namespace orsched
