#pragma once

// Actor-critic learner with a bootstrapped actor ensemble. One critic pair (online and target) is
// shared by every actor; each actor has its own target copy and optimizer state and learns only
// from the replay samples whose mask bit it drew.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "orsched/config.hpp"
#include "orsched/errors.hpp"
#include "orsched/mdp.hpp"
#include "orsched/mlp.hpp"
#include "orsched/optim.hpp"
#include "orsched/replay.hpp"
#include "orsched/rng.hpp"

namespace orsched {

struct Batch {
  Eigen::MatrixXd s, a, s2;  // one sample per column
  Eigen::VectorXd r;
  std::vector<std::uint8_t> terminal;
  std::vector<std::vector<std::uint8_t>> mask;  // [sample][actor]

  int size() const { return static_cast<int>(r.size()); }
};

inline Batch make_batch(const ReplayBuffer& buf, const std::vector<std::size_t>& idx) {
  Batch b;
  const int n = static_cast<int>(idx.size());
  if (n == 0) throw EmptySubsample("make_batch: no samples");
  const auto& first = buf.at(idx[0]).exp;
  b.s.resize(static_cast<int>(first.state.size()), n);
  b.s2.resize(static_cast<int>(first.state.size()), n);
  b.a.resize(static_cast<int>(first.action.size()), n);
  b.r.resize(n);
  for (int j = 0; j < n; ++j) {
    const auto& it = buf.at(idx[j]);
    b.s.col(j) = Eigen::Map<const Eigen::VectorXd>(it.exp.state.data(), b.s.rows());
    b.s2.col(j) = Eigen::Map<const Eigen::VectorXd>(it.exp.next_state.data(), b.s2.rows());
    b.a.col(j) = Eigen::Map<const Eigen::VectorXd>(it.exp.action.data(), b.a.rows());
    b.r(j) = it.exp.reward;
    b.terminal.push_back(it.exp.terminal ? 1 : 0);
    b.mask.push_back(it.mask);
  }
  return b;
}

/// Columns of `b` whose mask bit for actor i is set.
inline Batch masked_subset(const Batch& b, int i) {
  std::vector<int> keep;
  for (int j = 0; j < b.size(); ++j)
    if (b.mask[j].at(i)) keep.push_back(j);
  if (keep.empty()) throw EmptySubsample("actor " + std::to_string(i) + " has no masked samples in the batch");
  Batch out;
  const int n = static_cast<int>(keep.size());
  out.s.resize(b.s.rows(), n);
  out.s2.resize(b.s2.rows(), n);
  out.a.resize(b.a.rows(), n);
  out.r.resize(n);
  for (int c = 0; c < n; ++c) {
    out.s.col(c) = b.s.col(keep[c]);
    out.s2.col(c) = b.s2.col(keep[c]);
    out.a.col(c) = b.a.col(keep[c]);
    out.r(c) = b.r(keep[c]);
    out.terminal.push_back(b.terminal[keep[c]]);
    out.mask.push_back(b.mask[keep[c]]);
  }
  return out;
}

struct TrainStats {
  double critic_loss = 0.0;
  double actor_objective = 0.0;  // mean over actors that updated
  int actors_updated = 0;
  int actors_skipped = 0;
};

class EnsembleAgent {
 public:
  EnsembleAgent(const SimConfig& cfg, int state_dim, int action_dim, Rng& init_rng)
      : state_dim_(state_dim), action_dim_(action_dim), discount_(cfg.discount), tau_(cfg.soft_update) {
    if (cfg.ensemble_size < 1) throw SizeError("EnsembleAgent: ensemble size must be >= 1");
    std::vector<int> cw{state_dim + action_dim};
    cw.insert(cw.end(), cfg.hidden_layers.begin(), cfg.hidden_layers.end());
    cw.push_back(1);
    critic_ = Mlp(cw, Activation::relu, Activation::linear, init_rng);
    critic_target_ = critic_;
    critic_opt_ = Optimizer(critic_, cfg.optimizer, cfg.critic_lr);
    std::vector<int> aw{state_dim};
    aw.insert(aw.end(), cfg.hidden_layers.begin(), cfg.hidden_layers.end());
    aw.push_back(action_dim);
    for (int i = 0; i < cfg.ensemble_size; ++i) {
      actors_.emplace_back(aw, Activation::relu, Activation::tanh, init_rng);
      actor_targets_.push_back(actors_.back());
      actor_opts_.emplace_back(actors_.back(), cfg.optimizer, cfg.actor_lr);
    }
  }

  int ensemble_size() const { return static_cast<int>(actors_.size()); }
  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }
  int active() const { return active_; }
  void set_active(int i) {
    if (i < 0 || i >= ensemble_size()) throw SizeError("EnsembleAgent: actor index out of range");
    active_ = i;
  }
  double discount() const { return discount_; }
  void set_discount(double mu) { discount_ = mu; }

  Mlp& critic() { return critic_; }
  Mlp& critic_target() { return critic_target_; }
  Mlp& actor(int i) { return actors_.at(i); }
  Mlp& actor_target(int i) { return actor_targets_.at(i); }
  const Mlp& critic() const { return critic_; }
  const Mlp& critic_target() const { return critic_target_; }
  const Mlp& actor(int i) const { return actors_.at(i); }
  const Mlp& actor_target(int i) const { return actor_targets_.at(i); }
  const Optimizer& actor_optimizer(int i) const { return actor_opts_.at(i); }

  static Eigen::MatrixXd join(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a) {
    Eigen::MatrixXd x(s.rows() + a.rows(), s.cols());
    x << s, a;
    return x;
  }

  /// zeta = r + mu * max_i Q'(s', pi'_i(s')) with the ensemble on, or the active actor's target
  /// alone with it off. Terminal samples take zeta = r.
  Eigen::VectorXd target_value(const Batch& b, bool ensemble) const {
    const int n = b.size();
    Eigen::VectorXd best = Eigen::VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
    const int lo = ensemble ? 0 : active_;
    const int hi = ensemble ? ensemble_size() : active_ + 1;
    for (int i = lo; i < hi; ++i) {
      const Eigen::MatrixXd a2 = actor_targets_[i].forward(b.s2);
      const Eigen::RowVectorXd q = critic_target_.forward(join(b.s2, a2)).row(0);
      best = best.cwiseMax(q.transpose());
    }
    Eigen::VectorXd z(n);
    for (int j = 0; j < n; ++j) z(j) = b.terminal[j] ? b.r(j) : b.r(j) + discount_ * best(j);
    return z;
  }

  /// One descent step on the mean squared error between Q(s,a) and the targets; returns the
  /// loss measured before the step.
  double critic_update(const Batch& b, const Eigen::VectorXd& zeta) {
    MlpCache cache;
    const Eigen::RowVectorXd q = critic_.forward(join(b.s, b.a), cache).row(0);
    const Eigen::RowVectorXd err = q - zeta.transpose();
    const double loss = err.squaredNorm() / b.size();
    if (!std::isfinite(loss)) throw NonFiniteLoss("critic loss is not finite");
    const Eigen::MatrixXd up = (2.0 / b.size()) * err;
    critic_opt_.step(critic_, critic_.backward(cache, up));
    return loss;
  }

  double critic_update(const Batch& b, bool ensemble) { return critic_update(b, target_value(b, ensemble)); }

  /// One ascent step of actor i on mean Q(s, pi_i(s)) over the samples it owns in `b`; returns
  /// the objective before the step.
  double actor_update(const Batch& b, int i) {
    const Batch sub = masked_subset(b, i);
    const int n = sub.size();
    MlpCache acache, ccache;
    const Eigen::MatrixXd a = actors_.at(i).forward(sub.s, acache);
    const Eigen::RowVectorXd q = critic_.forward(join(sub.s, a), ccache).row(0);
    const double objective = q.mean();
    if (!std::isfinite(objective)) throw NonFiniteLoss("actor objective is not finite");
    Eigen::MatrixXd dx;
    critic_.backward(ccache, Eigen::MatrixXd::Constant(1, n, 1.0 / n), &dx);
    const Eigen::MatrixXd dq_da = dx.bottomRows(action_dim_);
    actor_opts_[i].step(actors_[i], actors_[i].backward(acache, -dq_da));
    return objective;
  }

  void soft_update_targets() {
    soft_update(critic_, critic_target_, tau_);
    for (int i = 0; i < ensemble_size(); ++i) soft_update(actors_[i], actor_targets_[i], tau_);
  }

  /// Samples one minibatch, updates the critic, then every actor on its masked share, then the
  /// targets.
  TrainStats train_step(const ReplayBuffer& buf, std::size_t batch_size, bool ensemble, Rng& rng) {
    TrainStats st;
    const Batch b = make_batch(buf, buf.sample_indices(batch_size, rng));
    st.critic_loss = critic_update(b, ensemble);
    for (int i = 0; i < ensemble_size(); ++i) {
      try {
        st.actor_objective += actor_update(b, i);
        ++st.actors_updated;
      } catch (const EmptySubsample&) {
        ++st.actors_skipped;
      }
    }
    if (st.actors_updated) st.actor_objective /= st.actors_updated;
    soft_update_targets();
    return st;
  }

  int thompson_select(Rng& rng) {
    active_ = std::uniform_int_distribution<int>(0, ensemble_size() - 1)(rng);
    return active_;
  }

  RawAction policy(const CellState& s, int i) const {
    const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
    const Eigen::VectorXd y = actors_.at(i).forward(x);
    return RawAction(y.data(), y.data() + y.size());
  }

  /// Active actor's output plus clipped Gaussian noise of standard deviation sigma.
  RawAction act(const CellState& s, double sigma, Rng& rng) const {
    RawAction a = policy(s, active_);
    if (sigma > 0.0) {
      std::normal_distribution<double> n(0.0, sigma);
      for (auto& v : a) v = std::clamp(v + n(rng), -1.0, 1.0);
    }
    return a;
  }

  /// Mean of every actor's output.
  RawAction ensemble_mean(const CellState& s) const {
    RawAction out(action_dim_, 0.0);
    for (int i = 0; i < ensemble_size(); ++i) {
      const auto a = policy(s, i);
      for (int j = 0; j < action_dim_; ++j) out[j] += a[j] / ensemble_size();
    }
    return out;
  }

  RawAction epsilon_greedy_act(const CellState& s, double eps, Rng& rng, bool* explored = nullptr) const {
    const bool random = std::bernoulli_distribution(eps)(rng);
    if (explored) *explored = random;
    if (!random) return policy(s, active_);
    return uniform_action(action_dim_, rng);
  }

  static RawAction uniform_action(int dim, Rng& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    RawAction a(dim);
    for (auto& v : a) v = u(rng);
    return a;
  }

  bool all_finite() const {
    if (!critic_.all_finite() || !critic_target_.all_finite()) return false;
    for (int i = 0; i < ensemble_size(); ++i)
      if (!actors_[i].all_finite() || !actor_targets_[i].all_finite()) return false;
    return true;
  }

 private:
  int state_dim_, action_dim_;
  double discount_, tau_;
  int active_ = 0;
  Mlp critic_, critic_target_;
  Optimizer critic_opt_;
  std::vector<Mlp> actors_, actor_targets_;
  std::vector<Optimizer> actor_opts_;
};

}  // namespace orsched
