#include "losse/agent.hpp"

#include <algorithm>
#include <cmath>

#include "losse/errors.hpp"

namespace losse {

void QAgentConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("agent: gamma must lie in (0, 1)");
  if (!(learning_rate >= 0.0)) throw ConfigError("agent: learning_rate must be >= 0");
  if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_end >= 0.0 && epsilon_end <= 1.0)) {
    throw ConfigError("agent: epsilon values must lie in [0, 1]");
  }
  if (!(input_scale > 0.0)) throw ConfigError("agent: input_scale must be positive");
}

void to_json(nlohmann::json& j, const QAgentConfig& c) {
  j = nlohmann::json{{"encoder", c.encoder},
                     {"input_scale", c.input_scale},
                     {"gamma", c.gamma},
                     {"learning_rate", c.learning_rate},
                     {"epsilon_start", c.epsilon_start},
                     {"epsilon_end", c.epsilon_end},
                     {"epsilon_decay_steps", c.epsilon_decay_steps},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, QAgentConfig& c) {
  if (j.contains("encoder")) from_json(j.at("encoder"), c.encoder);
  c.input_scale = j.value("input_scale", c.input_scale);
  c.gamma = j.value("gamma", c.gamma);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epsilon_start = j.value("epsilon_start", c.epsilon_start);
  c.epsilon_end = j.value("epsilon_end", c.epsilon_end);
  c.epsilon_decay_steps = j.value("epsilon_decay_steps", c.epsilon_decay_steps);
  c.seed = j.value("seed", c.seed);
}

namespace {

LosseConfig state_encoder(LosseConfig c, const EnvSpec& spec) {
  c.input_dim = spec.state_dim;
  return c;
}

}  // namespace

QAgent::QAgent(const EnvSpec& spec, QAgentConfig config)
    : spec_(spec),
      config_(std::move(config)),
      encoder_(state_encoder(config_.encoder, spec)),
      weights_(Eigen::MatrixXd::Zero(encoder_.feature_dim(), spec.action_count)),
      rng_(config_.seed) {
  config_.validate();
  config_.encoder = encoder_.config();
}

SparseVector QAgent::features(const DenseVector& s) const {
  if (s.size() != spec_.state_dim) throw ShapeError("agent: state has wrong dimension");
  DenseVector x(s.size());
  for (int i = 0; i < spec_.state_dim; ++i) {
    const auto [lo, hi] = spec_.state_bounds[i];
    x[i] = config_.input_scale * (2.0 * (s[i] - lo) / (hi - lo) - 1.0);
  }
  return encoder_.encode_clamped(x);
}

DenseVector QAgent::q_values(const SparseVector& phi) const {
  DenseVector q = DenseVector::Zero(weights_.cols());
  for (std::size_t k = 0; k < phi.nnz(); ++k) q += phi.values[k] * weights_.row(phi.indices[k]).transpose();
  return q;
}

DenseVector QAgent::q_values(const DenseVector& s) const { return q_values(features(s)); }

int QAgent::greedy_action(const DenseVector& q) const {
  int best = 0;
  for (int a = 1; a < q.size(); ++a) {
    if (q[a] > q[best]) best = a;
  }
  return best;
}

double QAgent::epsilon() const {
  if (epsilon_override_ >= 0.0) return epsilon_override_;
  if (config_.epsilon_decay_steps == 0 || schedule_step_ >= config_.epsilon_decay_steps) {
    return config_.epsilon_end;
  }
  const double frac = static_cast<double>(schedule_step_) / static_cast<double>(config_.epsilon_decay_steps);
  return config_.epsilon_start + frac * (config_.epsilon_end - config_.epsilon_start);
}

int QAgent::act(const DenseVector& s, bool greedy) { return act(s, greedy, rng_); }

int QAgent::act(const DenseVector& s, bool greedy, Rng& rng) const {
  if (!s.allFinite()) throw ValueError("agent: non-finite state");
  if (!greedy) {
    // Always draw, so the stream position does not depend on epsilon.
    const double u = rng.uniform();
    const auto random_action = static_cast<int>(rng.uniform_int(weights_.cols()));
    if (u < epsilon()) return random_action;
  }
  return greedy_action(q_values(s));
}

double QAgent::td_error(const Transition& t, const SparseVector& phi) const {
  double target = t.r;
  if (!t.done) target += config_.gamma * q_values(t.s_next).maxCoeff();
  if (!std::isfinite(target)) throw ValueError("agent: non-finite TD target");
  if (t.a < 0 || t.a >= weights_.cols()) throw ShapeError("agent: action out of range");
  return target - q_values(phi)[t.a];
}

void QAgent::q_update(const Transition& t) {
  const SparseVector phi = features(t.s);
  const double step = config_.learning_rate * td_error(t, phi);
  for (std::size_t k = 0; k < phi.nnz(); ++k) weights_(phi.indices[k], t.a) += step * phi.values[k];
}

void QAgent::q_update_batch(std::span<const Transition> batch) {
  if (batch.empty()) return;
  std::vector<SparseVector> phis;
  std::vector<double> steps;
  phis.reserve(batch.size());
  steps.reserve(batch.size());
  const double scale = config_.learning_rate / static_cast<double>(batch.size());
  for (const auto& t : batch) {
    phis.push_back(features(t.s));
    steps.push_back(scale * td_error(t, phis.back()));
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t k = 0; k < phis[i].nnz(); ++k) {
      weights_(phis[i].indices[k], batch[i].a) += steps[i] * phis[i].values[k];
    }
  }
}

}  // namespace losse
