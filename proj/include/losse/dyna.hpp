#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "losse/agent.hpp"
#include "losse/environments.hpp"
#include "losse/world_model.hpp"

namespace losse {

struct DynaConfig {
  int epochs = 5000;                // E
  int interactions_per_epoch = 4;   // K; the agent also learns from these K real transitions
  int planning_steps = 16;          // N unrolls per epoch
  int learning_steps = 16;          // G agent updates per epoch, each on one batch
  int unroll_length = 1;            // k
  int model_update_interval = 25;   // environment steps between model updates
  int planning_batch = 32;          // transitions per agent update
  std::size_t model_buffer_capacity = 100000;
  int error_interval = 0;           // steps between model-error evaluations; 0 disables
  double error_threshold = 0.05;    // delta for the error map
  int probe_resolution = 20;        // grid cells per axis for 2-D error maps
  int eval_episodes = 10;           // greedy episodes after the budget
  // Episode returns are sum_t return_discount^t r_t; 1 gives the plain sum.
  double return_discount = 1.0;
  double random_return = 0.0;       // normalization constants
  double best_return = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  std::uint64_t budget() const {
    return static_cast<std::uint64_t>(epochs) * static_cast<std::uint64_t>(interactions_per_epoch);
  }
};

void to_json(nlohmann::json& j, const DynaConfig& c);
void from_json(const nlohmann::json& j, DynaConfig& c);

// Fixed-capacity FIFO of synthetic transitions.
class ModelBuffer {
 public:
  explicit ModelBuffer(std::size_t capacity);

  void push(Transition t);
  const Transition& sample(Rng& rng) const;
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }
  const Transition& operator[](std::size_t i) const { return items_[i]; }

 private:
  std::size_t capacity_;
  std::deque<Transition> items_;
};

struct ErrorCell {
  DenseVector state;
  int action = 0;
  double error = 0.0;
  bool flagged = false;
};

struct ErrorMap {
  double threshold = 0.0;
  std::vector<ErrorCell> cells;

  double flagged_fraction() const;
  // CSV: one row per (probe state, action) with the state coordinates, the
  // Euclidean error and the exceed flag.
  std::string to_csv() const;
};

// Compares one-step model predictions with a ground-truth environment (pass a
// noise-free copy) at every probe state crossed with every action. A cell is
// flagged when the error exceeds `threshold`; with threshold 0 any error
// flags.
ErrorMap evaluate_model_error(const WorldModel& model, const Environment& truth,
                              std::span<const DenseVector> probes, double threshold);

// Probe states covering the visited region: for 2-D state spaces the centers
// of the resolution x resolution grid cells that contain a visited state; for
// higher dimensions an evenly strided subsample of at most resolution^2
// visited states. Terminal states and states the environment rejects are
// skipped.
std::vector<DenseVector> visited_probe_states(const Environment& env, std::span<const DenseVector> visited,
                                              int resolution);

struct EpisodeRecord {
  std::uint64_t step = 0;  // environment steps when the episode ended
  std::uint64_t episode = 0;
  double ret = 0.0;
  double normalized = 0.0;
  double model_error_fraction = 0.0;  // most recent evaluation; NaN before the first
};

struct TimingRecord {
  std::uint64_t step = 0;
  double seconds_per_update = 0.0;  // mean observe() wall time in this batch
  double cumulative_seconds = 0.0;  // wall time of the run so far
};

struct DynaResult {
  std::vector<EpisodeRecord> episodes;
  std::vector<TimingRecord> timing;
  double final_return = 0.0;      // mean greedy evaluation return
  double final_normalized = 0.0;
  double final_error_fraction = 0.0;
  ErrorMap final_error_map;
  std::uint64_t environment_steps = 0;
  std::uint64_t model_observations = 0;
  std::uint64_t skipped_rollouts = 0;
  std::vector<DenseVector> visited;
};

double normalize_return(double ret, const DynaConfig& cfg);

// Mean return of the uniform random policy over `episodes` episodes, with the
// same discounting and episode cap as run_dyna.
double random_policy_return(const Environment& env, double discount, int episodes, std::uint64_t seed);

// The Dyna loop. Per epoch: K environment interactions (buffered model
// updates every model_update_interval steps, each real transition observed
// exactly once), an agent update on those K real transitions, N on-policy
// model unrolls from uniformly sampled visited states into the model buffer,
// and G mini-batch agent updates on batches drawn from the buffer.
DynaResult run_dyna(const Environment& env, QAgent& agent, WorldModel& model, const DynaConfig& cfg);

}  // namespace losse
