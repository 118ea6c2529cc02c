#include "losse/environments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "losse/errors.hpp"
#include "losse/idx.hpp"

namespace losse {

void EnvSpec::validate() const {
  if (state_dim <= 0 || action_count <= 0 || max_episode_steps <= 0) {
    throw ConfigError("environment spec requires positive dimensions and episode cap");
  }
  if (static_cast<int>(state_bounds.size()) != state_dim) {
    throw ConfigError("environment spec needs one bound pair per state dimension");
  }
  for (const auto& [lo, hi] : state_bounds) {
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) {
      throw ConfigError("environment bounds must be finite with lo < hi");
    }
  }
}

DenseVector EnvSpec::lower() const {
  DenseVector out(state_dim);
  for (int i = 0; i < state_dim; ++i) out[i] = state_bounds[i].first;
  return out;
}

DenseVector EnvSpec::upper() const {
  DenseVector out(state_dim);
  for (int i = 0; i < state_dim; ++i) out[i] = state_bounds[i].second;
  return out;
}

DenseVector EnvSpec::clamp(const DenseVector& s) const {
  return s.cwiseMax(lower()).cwiseMin(upper());
}

namespace {

void check_action(int action, int count) {
  if (action < 0 || action >= count) {
    throw ValueError("action " + std::to_string(action) + " outside [0, " + std::to_string(count) + ")");
  }
}

void check_state(const DenseVector& s, const EnvSpec& spec) {
  if (s.size() != spec.state_dim) throw ShapeError("state has wrong dimension");
  if (!s.allFinite()) throw ValueError("state has a non-finite entry");
}

}  // namespace

// ---------------------------------------------------------------- Gridworld

Gridworld::Gridworld(GridworldConfig config) : config_(config) {
  spec_.state_dim = 2;
  spec_.action_count = 4;
  spec_.state_bounds = {{0.0, 1.0}, {0.0, 1.0}};
  spec_.max_episode_steps = config_.max_episode_steps;
  spec_.validate();
  if (config_.step_size <= 0.0 || config_.noise < 0.0) throw ConfigError("gridworld: bad step or noise");
}

bool Gridworld::in_barrier(double x, double y) const {
  return x > config_.barrier_x0 && x < config_.barrier_x1 && y > config_.barrier_y0 &&
         y < config_.barrier_y1;
}

DenseVector Gridworld::reset(Rng& rng) const {
  DenseVector s(2);
  s[0] = std::clamp(config_.start_x + rng.uniform(-config_.noise, config_.noise), 0.0, 1.0);
  s[1] = std::clamp(config_.start_y + rng.uniform(-config_.noise, config_.noise), 0.0, 1.0);
  return s;
}

StepResult Gridworld::step(const DenseVector& state, int action, Rng& rng) const {
  check_state(state, spec_);
  check_action(action, 4);
  const double px = state[0], py = state[1];
  if (px < 0.0 || px > 1.0 || py < 0.0 || py > 1.0) throw ValueError("gridworld: state outside unit square");
  if (in_barrier(px, py)) throw ValueError("gridworld: state inside barrier");

  double dx = 0.0, dy = 0.0;
  switch (action) {
    case Up: dy = config_.step_size; break;
    case Down: dy = -config_.step_size; break;
    case Right: dx = config_.step_size; break;
    case Left: dx = -config_.step_size; break;
  }
  if (config_.noise > 0.0) {
    dx += rng.uniform(-config_.noise, config_.noise);
    dy += rng.uniform(-config_.noise, config_.noise);
  }
  double qx = std::clamp(px + dx, 0.0, 1.0);
  double qy = std::clamp(py + dy, 0.0, 1.0);
  dx = qx - px;
  dy = qy - py;

  // Liang-Barsky clip of the segment against the closed barrier rectangle.
  double t0 = 0.0, t1 = 1.0;
  bool hits = true;
  const double p[4] = {-dx, dx, -dy, dy};
  const double q[4] = {px - config_.barrier_x0, config_.barrier_x1 - px, py - config_.barrier_y0,
                       config_.barrier_y1 - py};
  for (int k = 0; k < 4 && hits; ++k) {
    if (p[k] == 0.0) {
      if (q[k] < 0.0) hits = false;
    } else {
      const double r = q[k] / p[k];
      if (p[k] < 0.0) {
        t0 = std::max(t0, r);
      } else {
        t1 = std::min(t1, r);
      }
    }
  }
  if (hits && t0 < t1) {
    const double tm = 0.5 * (t0 + t1);
    if (in_barrier(px + tm * dx, py + tm * dy)) {
      // Movement stops at the wall surface.
      qx = px + t0 * dx;
      qy = py + t0 * dy;
      if (in_barrier(qx, qy)) {
        // Rounding left the point marginally inside; snap to the nearest face.
        const double faces[4] = {qx - config_.barrier_x0, config_.barrier_x1 - qx,
                                 qy - config_.barrier_y0, config_.barrier_y1 - qy};
        const int f = static_cast<int>(std::min_element(faces, faces + 4) - faces);
        if (f == 0) qx = config_.barrier_x0;
        if (f == 1) qx = config_.barrier_x1;
        if (f == 2) qy = config_.barrier_y0;
        if (f == 3) qy = config_.barrier_y1;
      }
    }
  }

  StepResult out;
  out.state = DenseVector(2);
  out.state << qx, qy;
  out.done = is_terminal(out.state);
  out.reward = out.done ? 1.0 : 0.0;
  return out;
}

bool Gridworld::is_terminal(const DenseVector& state) const {
  return std::hypot(state[0] - config_.goal_x, state[1] - config_.goal_y) < config_.goal_radius;
}

std::unique_ptr<Environment> Gridworld::noise_free() const {
  GridworldConfig c = config_;
  c.noise = 0.0;
  return std::make_unique<Gridworld>(c);
}

// -------------------------------------------------------------- MountainCar

MountainCar::MountainCar(int max_episode_steps) {
  spec_.state_dim = 2;
  spec_.action_count = 3;
  spec_.state_bounds = {{-1.2, 0.6}, {-0.07, 0.07}};
  spec_.max_episode_steps = max_episode_steps;
  spec_.validate();
}

DenseVector MountainCar::reset(Rng& rng) const {
  DenseVector s(2);
  s << rng.uniform(-0.6, -0.4), 0.0;
  return s;
}

StepResult MountainCar::step(const DenseVector& state, int action, Rng&) const {
  check_state(state, spec_);
  check_action(action, 3);
  double position = state[0];
  double velocity = state[1];
  velocity += (action - 1) * 0.001 + std::cos(3.0 * position) * (-0.0025);
  velocity = std::clamp(velocity, -0.07, 0.07);
  position += velocity;
  position = std::clamp(position, -1.2, 0.6);
  if (position == -1.2 && velocity < 0.0) velocity = 0.0;
  StepResult out;
  out.state = DenseVector(2);
  out.state << position, velocity;
  out.done = is_terminal(out.state);
  out.reward = -1.0;
  return out;
}

bool MountainCar::is_terminal(const DenseVector& state) const { return state[0] >= 0.5; }

std::unique_ptr<Environment> MountainCar::noise_free() const {
  return std::make_unique<MountainCar>(spec_.max_episode_steps);
}

// ------------------------------------------------------------------ Acrobot

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kMaxVel1 = 4.0 * kPi;
constexpr double kMaxVel2 = 9.0 * kPi;

double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  return a - kPi;
}

// Time derivative of (t1, t2, dt1, dt2) under torque `torque`.
Eigen::Vector4d acrobot_derivative(const Eigen::Vector4d& s, double torque) {
  constexpr double m1 = 1.0, m2 = 1.0, l1 = 1.0, lc1 = 0.5, lc2 = 0.5, i1 = 1.0, i2 = 1.0, g = 9.8;
  const double t1 = s[0], t2 = s[1], dt1 = s[2], dt2 = s[3];
  const double d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2 * l1 * lc2 * std::cos(t2)) + i1 + i2;
  const double d2 = m2 * (lc2 * lc2 + l1 * lc2 * std::cos(t2)) + i2;
  const double phi2 = m2 * lc2 * g * std::cos(t1 + t2 - kPi / 2.0);
  const double phi1 = -m2 * l1 * lc2 * dt2 * dt2 * std::sin(t2) -
                      2 * m2 * l1 * lc2 * dt2 * dt1 * std::sin(t2) +
                      (m1 * lc1 + m2 * l1) * g * std::cos(t1 - kPi / 2.0) + phi2;
  const double ddt2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dt1 * dt1 * std::sin(t2) - phi2) /
                      (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
  const double ddt1 = -(d2 * ddt2 + phi1) / d1;
  return {dt1, dt2, ddt1, ddt2};
}

Eigen::Vector4d acrobot_internal(const DenseVector& obs) {
  return {std::atan2(obs[1], obs[0]), std::atan2(obs[3], obs[2]), obs[4], obs[5]};
}

DenseVector acrobot_observation(const Eigen::Vector4d& s) {
  DenseVector obs(6);
  obs << std::cos(s[0]), std::sin(s[0]), std::cos(s[1]), std::sin(s[1]), s[2], s[3];
  return obs;
}

}  // namespace

Acrobot::Acrobot(Integrator integrator, int max_episode_steps) : integrator_(integrator) {
  spec_.state_dim = 6;
  spec_.action_count = 3;
  spec_.state_bounds = {{-1.0, 1.0}, {-1.0, 1.0}, {-1.0, 1.0}, {-1.0, 1.0},
                        {-kMaxVel1, kMaxVel1}, {-kMaxVel2, kMaxVel2}};
  spec_.max_episode_steps = max_episode_steps;
  spec_.validate();
}

DenseVector Acrobot::reset(Rng& rng) const {
  Eigen::Vector4d s;
  for (int i = 0; i < 4; ++i) s[i] = rng.uniform(-0.1, 0.1);
  return acrobot_observation(s);
}

StepResult Acrobot::step(const DenseVector& state, int action, Rng&) const {
  check_state(state, spec_);
  check_action(action, 3);
  const double torque = static_cast<double>(action - 1);
  Eigen::Vector4d s = acrobot_internal(state);
  if (integrator_ == Integrator::Euler) {
    s += kDt * acrobot_derivative(s, torque);
  } else {
    const Eigen::Vector4d k1 = acrobot_derivative(s, torque);
    const Eigen::Vector4d k2 = acrobot_derivative(s + 0.5 * kDt * k1, torque);
    const Eigen::Vector4d k3 = acrobot_derivative(s + 0.5 * kDt * k2, torque);
    const Eigen::Vector4d k4 = acrobot_derivative(s + kDt * k3, torque);
    s += kDt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  s[0] = wrap_angle(s[0]);
  s[1] = wrap_angle(s[1]);
  s[2] = std::clamp(s[2], -kMaxVel1, kMaxVel1);
  s[3] = std::clamp(s[3], -kMaxVel2, kMaxVel2);
  StepResult out;
  out.state = acrobot_observation(s);
  out.done = is_terminal(out.state);
  out.reward = out.done ? 0.0 : -1.0;
  return out;
}

bool Acrobot::is_terminal(const DenseVector& state) const {
  // -cos(t1) - cos(t1 + t2) > 1, with cos(t1 + t2) = c1 c2 - s1 s2.
  const double c1 = state[0], s1 = state[1], c2 = state[2], s2 = state[3];
  return -c1 - (c1 * c2 - s1 * s2) > 1.0;
}

std::unique_ptr<Environment> Acrobot::noise_free() const {
  return std::make_unique<Acrobot>(integrator_, spec_.max_episode_steps);
}

std::unique_ptr<Environment> make_environment(const std::string& name) {
  if (name == "gridworld") return std::make_unique<Gridworld>();
  if (name == "mountain_car") return std::make_unique<MountainCar>();
  if (name == "acrobot") return std::make_unique<Acrobot>();
  if (name == "acrobot_rk4") return std::make_unique<Acrobot>(Acrobot::Integrator::Rk4);
  throw ConfigError("unknown environment '" + name + "'");
}

// ---------------------------------------------------------------------- PRW

void PrwConfig::validate() const {
  if (!(d >= 0.0 && d < 1.0)) throw ConfigError("prw: correlation level d must lie in [0, 1)");
  if (!(bound > 0.0)) throw ConfigError("prw: bound must be positive");
  if (tau <= 0) throw ConfigError("prw: tau must be positive");
}

double PrwConfig::c() const { return 1.0 - std::sqrt(1.0 - d); }

double PrwConfig::sigma2() const {
  const double half = bound / 2.0;
  return d * d * half * half;
}

double PrwConfig::beta2() const {
  const double half = bound / 2.0;
  return (1.0 - d) * half * half;
}

double PrwConfig::drift_variance() const {
  // sigma^2 / (2c - c^2) with 2c - c^2 = d, written so that d = 0 is exact.
  const double half = bound / 2.0;
  return d * half * half;
}

double PrwConfig::equilibrium_variance() const { return beta2() + drift_variance(); }

double prw_target(double x) { return std::sin(2.0 * std::numbers::pi * x * x); }

PrwStream::PrwStream(const PrwConfig& config) : config_(config), rng_(config.seed) {
  config_.validate();
  // Start the walk from its own stationary distribution.
  s_ = rng_.normal(0.0, std::sqrt(config_.drift_variance()));
}

std::pair<double, double> PrwStream::next() {
  if (t_ % static_cast<std::uint64_t>(config_.tau) == 0) {
    s_ = (1.0 - config_.c()) * s_ + rng_.normal(0.0, std::sqrt(config_.sigma2()));
  }
  ++t_;
  const double x = rng_.normal(s_, std::sqrt(config_.beta2()));
  return {x, prw_target(x)};
}

std::vector<std::pair<double, double>> prw_holdout(const PrwConfig& config, int count,
                                                   std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const double sd = std::sqrt(config.equilibrium_variance());
  std::vector<std::pair<double, double>> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double x = rng.normal(0.0, sd);
    out.emplace_back(x, prw_target(x));
  }
  return out;
}

// ------------------------------------------------------------------ Denoise

void DenoiseConfig::validate() const {
  if (patch_side < 1 || patch_side > 28) throw ConfigError("denoise: patch_side must lie in [1, 28]");
  if (!(noise_sigma >= 0.0)) throw ConfigError("denoise: noise_sigma must be >= 0");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("denoise: train_fraction in (0, 1)");
  if (synthetic_count <= 1) throw ConfigError("denoise: synthetic_count must exceed 1");
  if (max_images < 0) throw ConfigError("denoise: max_images must be >= 0");
}

ImageSet synthetic_digit_corpus(int count, std::uint64_t seed) {
  constexpr int kSide = 28;
  ImageSet out;
  out.rows = kSide;
  out.cols = kSide;
  out.images.reserve(count);
  Rng rng(seed);
  for (int n = 0; n < count; ++n) {
    std::vector<float> img(kSide * kSide, 0.0f);
    // A few short strokes, each a chain of Gaussian dabs along a random arc
    // that passes near the canvas center, like pen strokes of a digit.
    const int strokes = 1 + static_cast<int>(rng.uniform_int(3));
    for (int k = 0; k < strokes; ++k) {
      double x = rng.uniform(9.0, 19.0);
      double y = rng.uniform(9.0, 19.0);
      double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double turn = rng.uniform(-0.35, 0.35);
      const double width = rng.uniform(1.0, 1.8);
      const int dabs = 6 + static_cast<int>(rng.uniform_int(10));
      for (int t = 0; t < dabs; ++t) {
        for (int r = 0; r < kSide; ++r) {
          for (int c = 0; c < kSide; ++c) {
            const double d2 = (r - y) * (r - y) + (c - x) * (c - x);
            if (d2 > 16.0 * width * width) continue;
            img[r * kSide + c] += static_cast<float>(std::exp(-d2 / (2.0 * width * width)));
          }
        }
        x = std::clamp(x + std::cos(heading), 2.0, 25.0);
        y = std::clamp(y + std::sin(heading), 2.0, 25.0);
        heading += turn;
      }
    }
    for (float& p : img) p = std::min(p, 1.0f);
    out.images.push_back(std::move(img));
  }
  return out;
}

DenoiseSplit make_denoise_split(const ImageSet& images, const DenoiseConfig& config) {
  config.validate();
  const int p = config.patch_side;
  if (p > images.rows || p > images.cols) throw ConfigError("denoise: patch larger than image");
  std::size_t count = images.images.size();
  if (config.max_images > 0) count = std::min<std::size_t>(count, config.max_images);
  if (count < 2) throw ConfigError("denoise: need at least two images");

  Rng rng(config.seed);
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  for (std::size_t i = count - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(i + 1)]);
  const auto n_train = static_cast<std::size_t>(std::llround(config.train_fraction * count));

  const int r0 = (images.rows - p) / 2;
  const int c0 = (images.cols - p) / 2;
  DenoiseSplit out;
  for (std::size_t k = 0; k < count; ++k) {
    const auto& img = images.images[order[k]];
    DenseVector clean(p * p);
    for (int r = 0; r < p; ++r)
      for (int c = 0; c < p; ++c) clean[r * p + c] = img[(r0 + r) * images.cols + (c0 + c)];
    DenseVector noisy = clean;
    if (config.noise_sigma > 0.0) {
      for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy[i] += rng.normal(0.0, config.noise_sigma);
    }
    if (k < n_train) {
      out.train_inputs.push_back(std::move(noisy));
      out.train_targets.push_back(std::move(clean));
    } else {
      out.test_inputs.push_back(std::move(noisy));
      out.test_targets.push_back(std::move(clean));
    }
  }
  return out;
}

DenoiseSplit load_denoise_dataset(const std::optional<std::string>& path, const DenoiseConfig& config,
                                  bool allow_fallback) {
  config.validate();
  if (path && std::filesystem::exists(*path)) {
    const idx::Images raw = idx::read_images(*path);
    ImageSet set;
    set.rows = static_cast<int>(raw.rows);
    set.cols = static_cast<int>(raw.cols);
    std::size_t count = raw.count;
    if (config.max_images > 0) count = std::min<std::size_t>(count, config.max_images);
    set.images.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      const auto px = raw.image(i);
      std::vector<float> img(px.size());
      for (std::size_t k = 0; k < px.size(); ++k) img[k] = static_cast<float>(px[k]) / 255.0f;
      set.images.push_back(std::move(img));
    }
    return make_denoise_split(set, config);
  }
  if (path && !allow_fallback) throw IoError("dataset file '" + *path + "' not found");
  if (!path && !allow_fallback) throw IoError("no dataset path given and synthetic fallback disabled");
  DenoiseSplit out = make_denoise_split(synthetic_digit_corpus(config.synthetic_count, config.seed ^ 0xD161u), config);
  out.synthetic = true;
  return out;
}

}  // namespace losse
