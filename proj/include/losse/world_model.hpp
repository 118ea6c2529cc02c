#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "losse/encoding.hpp"
#include "losse/environments.hpp"
#include "losse/learner.hpp"

namespace losse {

struct Transition {
  DenseVector s;
  int a = 0;
  double r = 0.0;
  DenseVector s_next;
  bool done = false;
};

struct WorldModelConfig {
  // input_dim is filled in from the environment (state_dim + action_count).
  LosseConfig encoder{.kappa = 30, .rho = 2, .lambda = 10};
  // Larger than the learner default: with 1e-6, rarely excited directions of
  // A[s,s] blow up under temporally correlated transitions.
  double epsilon = 1e-3;
  double dt = 1.0;
  // States are mapped affinely from the environment bounds onto
  // [-input_scale, input_scale] before encoding; actions are one-hot.
  double input_scale = 2.0;
  FtlLearner::Storage storage = FtlLearner::Storage::Auto;
};

void to_json(nlohmann::json& j, const WorldModelConfig& c);
void from_json(const nlohmann::json& j, WorldModelConfig& c);

struct ModelPrediction {
  DenseVector next_state;
  double reward = 0.0;
};

// Delta-state dynamics s' = s + dt * m(s, a) and a reward head over one shared
// Losse encoding of [s, onehot(a)]. Both heads live in a single FTL learner
// whose targets are [delta s, r]: the two would see the same A, and the ridge
// solution is column-separable, so the weights are those of two separate
// learners at half the cost.
class WorldModel {
 public:
  WorldModel(const EnvSpec& spec, WorldModelConfig config);

  // Throws ValueError on a non-finite transition.
  void observe(const Transition& t);

  ModelPrediction predict_next(const DenseVector& s, int a) const;

  // k-step on-policy rollout from s0. Stops early (returning the prefix) if
  // the model produces a non-finite state.
  std::vector<Transition> unroll(const DenseVector& s0, const std::function<int(const DenseVector&)>& policy,
                                 int k, const std::function<bool(const DenseVector&)>& terminal = {}) const;

  SparseVector features(const DenseVector& s, int a) const;
  DenseVector model_input(const DenseVector& s, int a) const;

  const EnvSpec& spec() const { return spec_; }
  const WorldModelConfig& config() const { return config_; }
  const LosseEncoder& encoder() const { return encoder_; }
  // Columns 0..state_dim-1 hold the dynamics, the last column the reward.
  const FtlLearner& learner() const { return learner_; }
  std::uint64_t transitions_observed() const { return observed_; }

  // Encoder config followed by the learner snapshot.
  void save(std::ostream& out) const;
  static WorldModel load(std::istream& in, const EnvSpec& spec);

 private:
  EnvSpec spec_;
  WorldModelConfig config_;
  LosseEncoder encoder_;
  FtlLearner learner_;
  std::uint64_t observed_ = 0;
};

}  // namespace losse
