#pragma once

// Dense feed-forward network on Eigen with hand-written backpropagation. Batches are stored one
// sample per column.

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "orsched/errors.hpp"
#include "orsched/rng.hpp"

namespace orsched {

enum class Activation { linear, relu, tanh };

inline std::string activation_name(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

struct Layer {
  Eigen::MatrixXd w;  // out x in
  Eigen::VectorXd b;
  Activation act = Activation::linear;
};

/// Parameter-shaped container used for gradients and optimizer moments.
struct MlpGrads {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;
};

struct MlpCache {
  std::vector<Eigen::MatrixXd> a;  // a[0] = input, a[l+1] = output of layer l
};

class Mlp {
 public:
  Mlp() = default;

  /// widths = {in, h1, ..., out}; hidden layers use `hidden`, the last layer `output`.
  /// Weights and biases start uniform in +-1/sqrt(fan_in).
  Mlp(const std::vector<int>& widths, Activation hidden, Activation output, Rng& rng) {
    if (widths.size() < 2) throw ShapeError("Mlp: need at least input and output widths");
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      const int in = widths[l], out = widths[l + 1];
      if (in < 1 || out < 1) throw ShapeError("Mlp: layer widths must be positive");
      std::uniform_real_distribution<double> u(-1.0 / std::sqrt(in), 1.0 / std::sqrt(in));
      Layer layer;
      layer.w.resize(out, in);
      layer.b.resize(out);
      for (int i = 0; i < out; ++i)
        for (int j = 0; j < in; ++j) layer.w(i, j) = u(rng);
      for (int i = 0; i < out; ++i) layer.b(i) = u(rng);
      layer.act = l + 2 == widths.size() ? output : hidden;
      layers_.push_back(std::move(layer));
    }
  }

  int input_size() const { return static_cast<int>(layers_.front().w.cols()); }
  int output_size() const { return static_cast<int>(layers_.back().w.rows()); }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  std::vector<int> widths() const {
    std::vector<int> out{input_size()};
    for (const auto& l : layers_) out.push_back(static_cast<int>(l.w.rows()));
    return out;
  }

  long parameter_count() const {
    long n = 0;
    for (const auto& l : layers_) n += l.w.size() + l.b.size();
    return n;
  }

  bool same_shape(const Mlp& o) const {
    if (layers_.size() != o.layers_.size()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i)
      if (layers_[i].w.rows() != o.layers_[i].w.rows() || layers_[i].w.cols() != o.layers_[i].w.cols() ||
          layers_[i].act != o.layers_[i].act)
        return false;
    return true;
  }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const {
    check_input(x);
    Eigen::MatrixXd a = x;
    for (const auto& l : layers_) {
      Eigen::MatrixXd z = l.w * a;
      z.colwise() += l.b;
      activate(z, l.act);
      a = std::move(z);
    }
    return a;
  }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const { return forward(Eigen::MatrixXd(x)).col(0); }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, MlpCache& cache) const {
    check_input(x);
    cache.a.clear();
    cache.a.push_back(x);
    for (const auto& l : layers_) {
      Eigen::MatrixXd z = l.w * cache.a.back();
      z.colwise() += l.b;
      activate(z, l.act);
      cache.a.push_back(std::move(z));
    }
    return cache.a.back();
  }

  /// Gradients of sum_over_batch(<upstream, output>) with respect to the parameters (summed over
  /// the batch) and the input (per column).
  MlpGrads backward(const MlpCache& cache, const Eigen::MatrixXd& upstream, Eigen::MatrixXd* input_grad = nullptr) const {
    if (cache.a.size() != layers_.size() + 1) throw ShapeError("Mlp::backward: cache does not match network");
    if (upstream.rows() != output_size() || upstream.cols() != cache.a.back().cols())
      throw ShapeError("Mlp::backward: upstream gradient shape mismatch");
    MlpGrads g;
    g.w.resize(layers_.size());
    g.b.resize(layers_.size());
    Eigen::MatrixXd delta = upstream;
    for (int i = static_cast<int>(layers_.size()) - 1; i >= 0; --i) {
      const auto& l = layers_[i];
      const auto& out = cache.a[i + 1];
      switch (l.act) {
        case Activation::linear: break;
        case Activation::relu: delta = delta.array() * (out.array() > 0.0).cast<double>(); break;
        case Activation::tanh: delta = delta.array() * (1.0 - out.array().square()); break;
      }
      g.w[i] = delta * cache.a[i].transpose();
      g.b[i] = delta.rowwise().sum();
      if (i > 0 || input_grad) delta = l.w.transpose() * delta;
    }
    if (input_grad) *input_grad = std::move(delta);
    return g;
  }

  MlpGrads zeros() const {
    MlpGrads g;
    for (const auto& l : layers_) {
      g.w.push_back(Eigen::MatrixXd::Zero(l.w.rows(), l.w.cols()));
      g.b.push_back(Eigen::VectorXd::Zero(l.b.size()));
    }
    return g;
  }

  bool all_finite() const {
    for (const auto& l : layers_)
      if (!l.w.allFinite() || !l.b.allFinite()) return false;
    return true;
  }

  bool operator==(const Mlp& o) const {
    if (!same_shape(o)) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i)
      if (layers_[i].w != o.layers_[i].w || layers_[i].b != o.layers_[i].b) return false;
    return true;
  }

 private:
  void check_input(const Eigen::MatrixXd& x) const {
    if (layers_.empty()) throw ShapeError("Mlp: empty network");
    if (x.rows() != input_size()) throw ShapeError("Mlp: input length does not match the first layer");
  }

  static void activate(Eigen::MatrixXd& z, Activation a) {
    switch (a) {
      case Activation::linear: break;
      case Activation::relu: z = z.cwiseMax(0.0); break;
      case Activation::tanh: z = z.array().tanh(); break;
    }
  }

  std::vector<Layer> layers_;
};

/// target <- tau * online + (1 - tau) * target, elementwise.
inline void soft_update(const Mlp& online, Mlp& target, double tau) {
  if (!online.same_shape(target)) throw ShapeError("soft_update: networks differ in shape");
  for (std::size_t i = 0; i < online.layers().size(); ++i) {
    auto& t = target.layers()[i];
    const auto& o = online.layers()[i];
    t.w = tau * o.w + (1.0 - tau) * t.w;
    t.b = tau * o.b + (1.0 - tau) * t.b;
  }
}

}  // namespace orsched
