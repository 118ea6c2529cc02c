#pragma once

#include <cstdint>
#include <span>

#include "losse/encoding.hpp"
#include "losse/environments.hpp"
#include "losse/rng.hpp"
#include "losse/world_model.hpp"

namespace losse {

struct QAgentConfig {
  // input_dim is filled in from the environment's state dimension.
  LosseConfig encoder{.kappa = 8, .rho = 2, .lambda = 10};
  double input_scale = 2.0;
  // 0.99 lets max-bootstrapping bias accumulate past the largest true value
  // under heavy planning; 0.95 still spans a shortest Gridworld path.
  double gamma = 0.95;
  double learning_rate = 0.01;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  std::uint64_t epsilon_decay_steps = 10000;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const QAgentConfig& c);
void from_json(const nlohmann::json& j, QAgentConfig& c);

// Linear Q-learning with epsilon-greedy exploration over a fixed Losse
// encoding of the (normalized) state.
class QAgent {
 public:
  QAgent(const EnvSpec& spec, QAgentConfig config);

  // Greedy: argmax with lowest-index tie-break. Otherwise epsilon-greedy with
  // the current scheduled epsilon, drawing from the agent's own generator or
  // from `rng` when given.
  int act(const DenseVector& s, bool greedy);
  int act(const DenseVector& s, bool greedy, Rng& rng) const;

  // Semi-gradient Q-learning on one transition; touches only the rows in the
  // support of phi(s). Throws ValueError on a non-finite target.
  void q_update(const Transition& t);
  // One mini-batch step: every TD error is taken against the current weights,
  // then the mean semi-gradient is applied once.
  void q_update_batch(std::span<const Transition> batch);

  DenseVector q_values(const DenseVector& s) const;
  DenseVector q_values(const SparseVector& phi) const;
  SparseVector features(const DenseVector& s) const;

  // Linear schedule from epsilon_start to epsilon_end over epsilon_decay_steps.
  double epsilon() const;
  void advance_schedule() { ++schedule_step_; }
  void set_epsilon_override(double e) { epsilon_override_ = e; }

  const Eigen::MatrixXd& weights() const { return weights_; }
  Eigen::MatrixXd& weights() { return weights_; }
  const QAgentConfig& config() const { return config_; }
  const LosseEncoder& encoder() const { return encoder_; }
  int action_count() const { return static_cast<int>(weights_.cols()); }

 private:
  double td_error(const Transition& t, const SparseVector& phi) const;
  int greedy_action(const DenseVector& q) const;

  EnvSpec spec_;
  QAgentConfig config_;
  LosseEncoder encoder_;
  Eigen::MatrixXd weights_;
  Rng rng_;
  std::uint64_t schedule_step_ = 0;
  double epsilon_override_ = -1.0;
};

}  // namespace losse
