#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "losse/rng.hpp"
#include "losse/sparse_vector.hpp"

namespace losse {

struct EnvSpec {
  int state_dim = 0;
  int action_count = 0;
  std::vector<std::pair<double, double>> state_bounds;
  int max_episode_steps = 0;

  void validate() const;
  DenseVector lower() const;
  DenseVector upper() const;
  DenseVector clamp(const DenseVector& s) const;
};

struct StepResult {
  DenseVector state;
  double reward = 0.0;
  bool done = false;
};

// Environments are stateless transition functions: the caller owns the state
// and the episode step counter. All randomness comes from the Rng passed in.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual const EnvSpec& spec() const = 0;
  virtual DenseVector reset(Rng& rng) const = 0;
  virtual StepResult step(const DenseVector& state, int action, Rng& rng) const = 0;
  virtual bool is_terminal(const DenseVector& state) const = 0;
  // A copy whose transitions are the noise-free mean dynamics.
  virtual std::unique_ptr<Environment> noise_free() const = 0;
};

struct GridworldConfig {
  double step_size = 0.05;
  double noise = 0.01;  // half-width of the uniform per-coordinate offset
  double start_x = 0.1;
  double start_y = 0.1;
  double goal_x = 0.9;
  double goal_y = 0.9;
  double goal_radius = 0.05;
  // Barrier rectangle [x0, x1] x [y0, y1]; the gap above y1 is open.
  double barrier_x0 = 0.48;
  double barrier_x1 = 0.52;
  double barrier_y0 = 0.0;
  double barrier_y1 = 0.7;
  int max_episode_steps = 500;
};

// Continuous navigation on the unit square. Actions: 0 up, 1 down, 2 right,
// 3 left. Reward 1 on reaching the goal disc, 0 otherwise.
class Gridworld final : public Environment {
 public:
  enum Action { Up = 0, Down = 1, Right = 2, Left = 3 };

  explicit Gridworld(GridworldConfig config = {});

  std::string name() const override { return "gridworld"; }
  const EnvSpec& spec() const override { return spec_; }
  DenseVector reset(Rng& rng) const override;
  StepResult step(const DenseVector& state, int action, Rng& rng) const override;
  bool is_terminal(const DenseVector& state) const override;
  std::unique_ptr<Environment> noise_free() const override;

  const GridworldConfig& config() const { return config_; }
  bool in_barrier(double x, double y) const;  // strictly inside

 private:
  GridworldConfig config_;
  EnvSpec spec_;
};

// Moore's mountain car: state (position, velocity), actions push left / coast
// / push right, reward -1 per step until position >= 0.5.
class MountainCar final : public Environment {
 public:
  explicit MountainCar(int max_episode_steps = 500);

  std::string name() const override { return "mountain_car"; }
  const EnvSpec& spec() const override { return spec_; }
  DenseVector reset(Rng& rng) const override;
  StepResult step(const DenseVector& state, int action, Rng& rng) const override;
  bool is_terminal(const DenseVector& state) const override;
  std::unique_ptr<Environment> noise_free() const override;

 private:
  EnvSpec spec_;
};

// Two-link acrobot with torque {-1, 0, +1} on the second joint. The state is
// the observation (cos t1, sin t1, cos t2, sin t2, dt1, dt2); reward -1 per
// step until the tip rises one link length above the pivot.
class Acrobot final : public Environment {
 public:
  enum class Integrator { Euler, Rk4 };

  explicit Acrobot(Integrator integrator = Integrator::Euler, int max_episode_steps = 500);

  std::string name() const override { return "acrobot"; }
  const EnvSpec& spec() const override { return spec_; }
  DenseVector reset(Rng& rng) const override;
  StepResult step(const DenseVector& state, int action, Rng& rng) const override;
  bool is_terminal(const DenseVector& state) const override;
  std::unique_ptr<Environment> noise_free() const override;

  static constexpr double kDt = 0.2;

 private:
  Integrator integrator_;
  EnvSpec spec_;
};

std::unique_ptr<Environment> make_environment(const std::string& name);

// Piecewise random walk: X_t ~ N(S_t, beta^2), with S drifting every tau steps
// as S <- (1 - c) S + Z, Z ~ N(0, sigma^2). The correlation level d fixes
// c = 1 - sqrt(1 - d), sigma^2 = d^2 (B/2)^2 and beta^2 = (1 - d)(B/2)^2, so
// the equilibrium variance of X is (B/2)^2 for every d.
struct PrwConfig {
  double d = 0.0;
  double bound = 1.0;  // B
  int tau = 50;
  std::uint64_t seed = 0;

  void validate() const;
  double c() const;
  double sigma2() const;
  double beta2() const;
  double drift_variance() const;         // stationary variance of S
  double equilibrium_variance() const;  // beta^2 + sigma^2 / (2c - c^2)
};

double prw_target(double x);  // sin(2 pi x^2)

class PrwStream {
 public:
  explicit PrwStream(const PrwConfig& config);

  // Returns (x_t, y_t) and advances t.
  std::pair<double, double> next();

  double drift_state() const { return s_; }
  std::uint64_t t() const { return t_; }
  const PrwConfig& config() const { return config_; }

 private:
  PrwConfig config_;
  Rng rng_;
  double s_;
  std::uint64_t t_ = 0;
};

// Independent samples from the equilibrium distribution of X.
std::vector<std::pair<double, double>> prw_holdout(const PrwConfig& config, int count,
                                                   std::uint64_t seed);

struct DenoiseConfig {
  int patch_side = 3;
  double noise_sigma = 0.3;
  double train_fraction = 0.9;
  int synthetic_count = 10000;  // corpus size when no file is given
  int max_images = 0;           // 0: use every image in the file
  std::uint64_t seed = 0;

  void validate() const;
};

struct DenoiseSplit {
  std::vector<DenseVector> train_inputs, train_targets;
  std::vector<DenseVector> test_inputs, test_targets;
  bool synthetic = false;
};

// Grayscale images in [0, 1], row-major.
struct ImageSet {
  int rows = 0;
  int cols = 0;
  std::vector<std::vector<float>> images;
};

// Seeded corpus of smooth blob strokes on a 28x28 canvas.
ImageSet synthetic_digit_corpus(int count, std::uint64_t seed);

// Center crop, noise and split. Targets are the clean patches; inputs add
// N(0, noise_sigma^2) per pixel.
DenoiseSplit make_denoise_split(const ImageSet& images, const DenoiseConfig& config);

// Loads an IDX image file when `path` is given; otherwise (or when the file is
// missing and `allow_fallback` is set) uses the synthetic corpus. Throws
// IoError when the file is missing without fallback.
DenoiseSplit load_denoise_dataset(const std::optional<std::string>& path,
                                  const DenoiseConfig& config, bool allow_fallback);

}  // namespace losse
