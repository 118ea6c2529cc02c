#include "losse/dyna.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include "losse/errors.hpp"
#include "losse/format.hpp"

namespace losse {

void DynaConfig::validate() const {
  if (epochs <= 0 || interactions_per_epoch <= 0 || unroll_length <= 0 || model_update_interval < 1 ||
      planning_batch <= 0 || model_buffer_capacity == 0) {
    throw ConfigError("dyna: counts must be positive");
  }
  if (planning_steps < 0 || learning_steps < 0) throw ConfigError("dyna: N and G must be >= 0");
  if (error_interval < 0 || probe_resolution <= 0 || eval_episodes < 0) {
    throw ConfigError("dyna: bad evaluation settings");
  }
  if (!(return_discount > 0.0 && return_discount <= 1.0)) throw ConfigError("dyna: return_discount must lie in (0, 1]");
  if (!(error_threshold >= 0.0)) throw ConfigError("dyna: error_threshold must be >= 0");
  if (!(best_return != random_return)) throw ConfigError("dyna: best_return must differ from random_return");
}

void to_json(nlohmann::json& j, const DynaConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"interactions_per_epoch", c.interactions_per_epoch},
                     {"planning_steps", c.planning_steps},
                     {"learning_steps", c.learning_steps},
                     {"unroll_length", c.unroll_length},
                     {"model_update_interval", c.model_update_interval},
                     {"planning_batch", c.planning_batch},
                     {"model_buffer_capacity", c.model_buffer_capacity},
                     {"error_interval", c.error_interval},
                     {"error_threshold", c.error_threshold},
                     {"probe_resolution", c.probe_resolution},
                     {"eval_episodes", c.eval_episodes},
                     {"return_discount", c.return_discount},
                     {"random_return", c.random_return},
                     {"best_return", c.best_return},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, DynaConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.interactions_per_epoch = j.value("interactions_per_epoch", c.interactions_per_epoch);
  c.planning_steps = j.value("planning_steps", c.planning_steps);
  c.learning_steps = j.value("learning_steps", c.learning_steps);
  c.unroll_length = j.value("unroll_length", c.unroll_length);
  c.model_update_interval = j.value("model_update_interval", c.model_update_interval);
  c.planning_batch = j.value("planning_batch", c.planning_batch);
  c.model_buffer_capacity = j.value("model_buffer_capacity", c.model_buffer_capacity);
  c.error_interval = j.value("error_interval", c.error_interval);
  c.error_threshold = j.value("error_threshold", c.error_threshold);
  c.probe_resolution = j.value("probe_resolution", c.probe_resolution);
  c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
  c.return_discount = j.value("return_discount", c.return_discount);
  c.random_return = j.value("random_return", c.random_return);
  c.best_return = j.value("best_return", c.best_return);
  c.seed = j.value("seed", c.seed);
}

ModelBuffer::ModelBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("model buffer capacity must be positive");
}

void ModelBuffer::push(Transition t) {
  if (items_.size() == capacity_) items_.pop_front();
  items_.push_back(std::move(t));
}

const Transition& ModelBuffer::sample(Rng& rng) const {
  if (items_.empty()) throw ValueError("sampling from an empty model buffer");
  return items_[rng.uniform_int(items_.size())];
}

double ErrorMap::flagged_fraction() const {
  if (cells.empty()) return 0.0;
  std::size_t flagged = 0;
  for (const auto& c : cells) flagged += c.flagged ? 1 : 0;
  return static_cast<double>(flagged) / static_cast<double>(cells.size());
}

std::string ErrorMap::to_csv() const {
  std::ostringstream out;
  const int dims = cells.empty() ? 0 : static_cast<int>(cells.front().state.size());
  for (int i = 0; i < dims; ++i) out << "s" << i << ",";
  out << "action,error,flagged\n";
  for (const auto& c : cells) {
    for (int i = 0; i < dims; ++i) out << fmt_double(c.state[i]) << ",";
    out << c.action << "," << fmt_double(c.error) << "," << (c.flagged ? 1 : 0) << "\n";
  }
  return out.str();
}

ErrorMap evaluate_model_error(const WorldModel& model, const Environment& truth,
                              std::span<const DenseVector> probes, double threshold) {
  ErrorMap map;
  map.threshold = threshold;
  Rng unused(0);
  for (const auto& s : probes) {
    for (int a = 0; a < truth.spec().action_count; ++a) {
      const StepResult real = truth.step(s, a, unused);
      const ModelPrediction pred = model.predict_next(s, a);
      const double err = (pred.next_state - real.state).norm();
      map.cells.push_back({s, a, err, err > threshold});
    }
  }
  return map;
}

std::vector<DenseVector> visited_probe_states(const Environment& env, std::span<const DenseVector> visited,
                                              int resolution) {
  const EnvSpec& spec = env.spec();
  std::vector<DenseVector> candidates;
  if (spec.state_dim == 2) {
    std::set<std::pair<int, int>> cells;
    for (const auto& s : visited) {
      int idx[2];
      for (int i = 0; i < 2; ++i) {
        const auto [lo, hi] = spec.state_bounds[i];
        idx[i] = std::clamp(static_cast<int>((s[i] - lo) / (hi - lo) * resolution), 0, resolution - 1);
      }
      cells.emplace(idx[0], idx[1]);
    }
    for (const auto& [i, j] : cells) {
      DenseVector c(2);
      const int ij[2] = {i, j};
      for (int k = 0; k < 2; ++k) {
        const auto [lo, hi] = spec.state_bounds[k];
        c[k] = lo + (ij[k] + 0.5) * (hi - lo) / resolution;
      }
      candidates.push_back(std::move(c));
    }
  } else {
    const std::size_t cap = static_cast<std::size_t>(resolution) * resolution;
    const std::size_t stride = std::max<std::size_t>(1, visited.size() / std::max<std::size_t>(cap, 1));
    for (std::size_t i = 0; i < visited.size() && candidates.size() < cap; i += stride) {
      candidates.push_back(visited[i]);
    }
  }
  std::vector<DenseVector> out;
  Rng unused(0);
  for (auto& c : candidates) {
    if (env.is_terminal(c)) continue;
    try {
      (void)env.step(c, 0, unused);
    } catch (const ValueError&) {
      continue;
    }
    out.push_back(std::move(c));
  }
  return out;
}

double normalize_return(double ret, const DynaConfig& cfg) {
  return (ret - cfg.random_return) / (cfg.best_return - cfg.random_return);
}

namespace {

using Clock = std::chrono::steady_clock;

double mean_return(const Environment& env, const std::function<int(const DenseVector&, Rng&)>& policy,
                   double discount, int episodes, std::uint64_t seed) {
  if (episodes == 0) return 0.0;
  Rng rng(seed);
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    DenseVector s = env.reset(rng);
    double weight = 1.0;
    for (int t = 0; t < env.spec().max_episode_steps; ++t) {
      const StepResult r = env.step(s, policy(s, rng), rng);
      total += weight * r.reward;
      weight *= discount;
      if (r.done) break;
      s = r.state;
    }
  }
  return total / episodes;
}

}  // namespace

double random_policy_return(const Environment& env, double discount, int episodes, std::uint64_t seed) {
  const auto actions = static_cast<std::uint64_t>(env.spec().action_count);
  return mean_return(
      env, [actions](const DenseVector&, Rng& rng) { return static_cast<int>(rng.uniform_int(actions)); },
      discount, episodes, seed);
}

DynaResult run_dyna(const Environment& env, QAgent& agent, WorldModel& model, const DynaConfig& cfg) {
  cfg.validate();
  const EnvSpec& spec = env.spec();
  if (model.spec().state_dim != spec.state_dim || model.spec().action_count != spec.action_count ||
      agent.action_count() != spec.action_count) {
    throw ShapeError("dyna: environment, agent and model shapes disagree");
  }

  Rng env_rng(derive_seed(cfg.seed, 1));
  Rng plan_rng(derive_seed(cfg.seed, 2));
  const auto truth = env.noise_free();

  DynaResult result;
  ModelBuffer buffer(cfg.model_buffer_capacity);
  std::vector<Transition> pending_model;
  std::vector<Transition> recent_real;
  const auto run_start = Clock::now();

  double last_error = std::numeric_limits<double>::quiet_NaN();
  DenseVector state = env.reset(env_rng);
  double episode_return = 0.0;
  double discount_weight = 1.0;
  int episode_steps = 0;
  std::uint64_t step = 0;
  std::uint64_t episode = 0;

  auto flush_model = [&]() {
    if (pending_model.empty()) return;
    const auto t0 = Clock::now();
    for (const auto& t : pending_model) model.observe(t);
    const auto t1 = Clock::now();
    result.model_observations += pending_model.size();
    result.timing.push_back({step, std::chrono::duration<double>(t1 - t0).count() / pending_model.size(),
                             std::chrono::duration<double>(t1 - run_start).count()});
    pending_model.clear();
  };

  auto policy = [&](const DenseVector& s) { return agent.act(s, false, plan_rng); };
  auto terminal = [&](const DenseVector& s) { return env.is_terminal(s); };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i = 0; i < cfg.interactions_per_epoch; ++i) {
      const int a = agent.act(state, false);
      StepResult r = env.step(state, a, env_rng);
      agent.advance_schedule();
      ++step;
      ++episode_steps;
      episode_return += discount_weight * r.reward;
      discount_weight *= cfg.return_discount;
      result.visited.push_back(state);
      Transition t{state, a, r.reward, r.state, r.done};
      pending_model.push_back(t);
      recent_real.push_back(std::move(t));
      if (static_cast<int>(pending_model.size()) >= cfg.model_update_interval) flush_model();

      if (cfg.error_interval > 0 && step % static_cast<std::uint64_t>(cfg.error_interval) == 0) {
        const auto probes = visited_probe_states(env, result.visited, cfg.probe_resolution);
        last_error = evaluate_model_error(model, *truth, probes, cfg.error_threshold).flagged_fraction();
      }

      if (r.done || episode_steps >= spec.max_episode_steps) {
        result.episodes.push_back({step, episode, episode_return, normalize_return(episode_return, cfg), last_error});
        ++episode;
        episode_return = 0.0;
        discount_weight = 1.0;
        episode_steps = 0;
        state = env.reset(env_rng);
      } else {
        state = std::move(r.state);
      }
    }

    for (const auto& t : recent_real) agent.q_update(t);
    recent_real.clear();

    if (cfg.planning_steps > 0 && !result.visited.empty()) {
      for (int n = 0; n < cfg.planning_steps; ++n) {
        const DenseVector& start = result.visited[plan_rng.uniform_int(result.visited.size())];
        std::vector<Transition> roll = model.unroll(start, policy, cfg.unroll_length, terminal);
        const bool truncated = static_cast<int>(roll.size()) < cfg.unroll_length && (roll.empty() || !roll.back().done);
        if (truncated) {
          ++result.skipped_rollouts;
          continue;
        }
        for (auto& t : roll) buffer.push(std::move(t));
      }
    }

    if (!buffer.empty()) {
      std::vector<Transition> batch(static_cast<std::size_t>(cfg.planning_batch));
      for (int g = 0; g < cfg.learning_steps; ++g) {
        for (auto& t : batch) t = buffer.sample(plan_rng);
        agent.q_update_batch(batch);
      }
    }
  }
  flush_model();
  result.environment_steps = step;
  if (result.model_observations != step || model.transitions_observed() < step) {
    throw std::logic_error("dyna: every real transition must reach the model exactly once");
  }

  result.final_return = mean_return(
      env, [&agent](const DenseVector& s, Rng&) { return agent.act(s, true); }, cfg.return_discount,
      cfg.eval_episodes, derive_seed(cfg.seed, 3));
  result.final_normalized = normalize_return(result.final_return, cfg);
  const auto probes = visited_probe_states(env, result.visited, cfg.probe_resolution);
  result.final_error_map = evaluate_model_error(model, *truth, probes, cfg.error_threshold);
  result.final_error_fraction = result.final_error_map.flagged_fraction();
  return result;
}

}  // namespace losse
