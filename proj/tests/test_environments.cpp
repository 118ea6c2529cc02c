#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "losse/environments.hpp"
#include "losse/errors.hpp"
#include "losse/idx.hpp"

using namespace losse;

namespace {

DenseVector state2(double x, double y) {
  DenseVector s(2);
  s << x, y;
  return s;
}

}  // namespace

TEST_CASE("gridworld kinematics") {
  const Gridworld g;
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const StepResult r = g.step(state2(0.7, 0.1), Gridworld::Right, rng);
    CHECK(r.state[0] - 0.7 >= 0.04 - 1e-12);
    CHECK(r.state[0] - 0.7 <= 0.06 + 1e-12);
    CHECK(std::abs(r.state[1] - 0.1) <= 0.01 + 1e-12);
    CHECK(r.reward == 0.0);
    CHECK_FALSE(r.done);
  }
  const auto clean = g.noise_free();
  const StepResult up = clean->step(state2(0.2, 0.2), Gridworld::Up, rng);
  CHECK(up.state[0] == 0.2);
  CHECK(up.state[1] == doctest::Approx(0.25));
  const StepResult left = clean->step(state2(0.2, 0.2), Gridworld::Left, rng);
  CHECK(left.state[0] == doctest::Approx(0.15));
  const StepResult down = clean->step(state2(0.2, 0.01), Gridworld::Down, rng);
  CHECK(down.state[1] == 0.0);
}

TEST_CASE("gridworld barrier blocks at the wall surface") {
  const Gridworld g;
  const auto clean = g.noise_free();
  Rng rng(0);
  const StepResult r = clean->step(state2(0.45, 0.3), Gridworld::Right, rng);
  CHECK(r.state[0] == doctest::Approx(0.48));
  CHECK(r.state[1] == doctest::Approx(0.3));
  const StepResult back = clean->step(state2(0.55, 0.3), Gridworld::Left, rng);
  CHECK(back.state[0] == doctest::Approx(0.52));
  // Above the barrier the way is open.
  const StepResult open = clean->step(state2(0.46, 0.8), Gridworld::Right, rng);
  CHECK(open.state[0] == doctest::Approx(0.51));
}

TEST_CASE("gridworld states stay in the square and outside the barrier") {
  const Gridworld g;
  Rng rng(5);
  DenseVector s = g.reset(rng);
  for (int t = 0; t < 100000; ++t) {
    const StepResult r = g.step(s, static_cast<int>(rng.uniform_int(4)), rng);
    REQUIRE(r.state[0] >= 0.0);
    REQUIRE(r.state[0] <= 1.0);
    REQUIRE(r.state[1] >= 0.0);
    REQUIRE(r.state[1] <= 1.0);
    REQUIRE_FALSE(g.in_barrier(r.state[0], r.state[1]));
    s = r.done ? g.reset(rng) : r.state;
  }
}

TEST_CASE("gridworld goal and errors") {
  const Gridworld g;
  Rng rng(0);
  const auto clean = g.noise_free();
  const StepResult r = clean->step(state2(0.9, 0.82), Gridworld::Up, rng);
  CHECK(r.done);
  CHECK(r.reward == 1.0);
  CHECK(g.is_terminal(state2(0.93, 0.9)));
  CHECK_FALSE(g.is_terminal(state2(0.96, 0.9)));
  CHECK_THROWS_AS(g.step(state2(1.2, 0.5), 0, rng), ValueError);
  CHECK_THROWS_AS(g.step(state2(0.5, 0.3), 0, rng), ValueError);
  CHECK_THROWS_AS(g.step(state2(0.2, 0.2), 4, rng), ValueError);
  CHECK_THROWS_AS(g.step(DenseVector::Zero(3), 0, rng), ShapeError);
}

TEST_CASE("environments replay bit for bit from a seed") {
  for (const char* name : {"gridworld", "mountain_car", "acrobot", "acrobot_rk4"}) {
    const auto env = make_environment(name);
    std::vector<int> actions;
    std::vector<DenseVector> first;
    Rng rng(9);
    Rng pick(3);
    DenseVector s = env->reset(rng);
    for (int t = 0; t < 300; ++t) {
      const int a = static_cast<int>(pick.uniform_int(env->spec().action_count));
      actions.push_back(a);
      const StepResult r = env->step(s, a, rng);
      first.push_back(r.state);
      s = r.done ? env->reset(rng) : r.state;
    }
    Rng again(9);
    s = env->reset(again);
    for (int t = 0; t < 300; ++t) {
      const StepResult r = env->step(s, actions[t], again);
      REQUIRE(r.state == first[t]);
      s = r.done ? env->reset(again) : r.state;
    }
  }
  CHECK_THROWS_AS(make_environment("cartpole"), ConfigError);
}

TEST_CASE("mountain car follows the canonical update") {
  const MountainCar mc;
  Rng rng(0);
  const double p = -0.5, v = 0.0;
  const StepResult r = mc.step(state2(p, v), 1, rng);
  const double v2 = v + 0.0 * 0.001 - 0.0025 * std::cos(3.0 * p);
  CHECK(r.state[1] == doctest::Approx(v2).epsilon(1e-15));
  CHECK(r.state[0] == doctest::Approx(p + v2).epsilon(1e-15));
  CHECK(r.state[0] < p);
  CHECK(r.reward == -1.0);
  const StepResult push = mc.step(state2(0.45, 0.06), 2, rng);
  CHECK(push.done);
  CHECK(mc.is_terminal(state2(0.5, 0.0)));
  CHECK_THROWS_AS(mc.step(state2(p, v), 3, rng), ValueError);
  // Left wall stops the car.
  const StepResult wall = mc.step(state2(-1.19, -0.07), 0, rng);
  CHECK(wall.state[0] == -1.2);
  CHECK(wall.state[1] == 0.0);
}

TEST_CASE("acrobot at rest stays at rest") {
  for (auto integrator : {Acrobot::Integrator::Euler, Acrobot::Integrator::Rk4}) {
    const Acrobot ac(integrator);
    Rng rng(0);
    DenseVector s(6);
    s << 1.0, 0.0, 1.0, 0.0, 0.0, 0.0;
    for (int t = 0; t < 100; ++t) {
      const StepResult r = ac.step(s, 1, rng);
      CHECK(r.reward == -1.0);
      s = r.state;
    }
    CHECK((s - (DenseVector(6) << 1.0, 0.0, 1.0, 0.0, 0.0, 0.0).finished()).norm() < 1e-9);
    DenseVector up(6);
    up << -1.0, 0.0, 1.0, 0.0, 0.0, 0.0;  // first link pointing up
    CHECK(ac.is_terminal(up));
  }
}

TEST_CASE("prw derived constants") {
  PrwConfig c;
  c.d = 0.75;
  CHECK(c.c() == doctest::Approx(0.5));
  CHECK(c.sigma2() == doctest::Approx(0.140625));
  CHECK(c.beta2() == doctest::Approx(0.0625));
  c.bound = 2.0;
  CHECK(c.sigma2() == doctest::Approx(0.140625 * 4.0));
  for (double d : {0.0, 0.3, 0.75, 0.98}) {
    c.d = d;
    c.bound = 1.0;
    CHECK(c.equilibrium_variance() == doctest::Approx(0.25));
  }
  c.d = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.d = 0.5;
  c.tau = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("prw at d = 0 is i.i.d. around zero") {
  PrwConfig c;
  c.d = 0.0;
  c.seed = 4;
  PrwStream s(c);
  for (int i = 0; i < 200; ++i) {
    const auto [x, y] = s.next();
    CHECK(y == doctest::Approx(prw_target(x)));
  }
  CHECK(s.drift_state() == 0.0);
}

TEST_CASE("prw long-run variance and mean") {
  for (double d : {0.0, 0.5, 0.9}) {
    PrwConfig c;
    c.d = d;
    c.seed = 17;
    PrwStream s(c);
    const int n = 1000000;
    // Batch means over blocks much longer than the drift correlation time.
    const int blocks = 100;
    std::vector<double> block_mean(blocks, 0.0);
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = s.next().first;
      sum += x;
      sq += x * x;
      block_mean[i / (n / blocks)] += x / (n / blocks);
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(var == doctest::Approx(c.equilibrium_variance()).epsilon(0.05));
    double bv = 0.0;
    for (double m : block_mean) bv += (m - mean) * (m - mean);
    const double se = std::sqrt(bv / (blocks - 1) / blocks);
    CHECK(std::abs(mean) <= 3.0 * se);
  }
}

TEST_CASE("prw holdout is seeded") {
  PrwConfig c;
  c.d = 0.9;
  const auto a = prw_holdout(c, 500, 3);
  const auto b = prw_holdout(c, 500, 3);
  CHECK(a.size() == 500);
  CHECK(a == b);
  CHECK(a != prw_holdout(c, 500, 4));
}

TEST_CASE("denoise splits") {
  DenoiseConfig c;
  c.synthetic_count = 10000;
  c.patch_side = 3;
  const DenoiseSplit s = load_denoise_dataset(std::nullopt, c, true);
  CHECK(s.synthetic);
  CHECK(s.train_inputs.size() == 9000);
  CHECK(s.test_inputs.size() == 1000);
  CHECK(s.train_inputs.front().size() == 9);
  for (const auto& t : s.train_targets) {
    CHECK(t.minCoeff() >= 0.0);
    CHECK(t.maxCoeff() <= 1.0);
  }
  c.noise_sigma = 0.0;
  c.synthetic_count = 200;
  const DenoiseSplit clean = load_denoise_dataset(std::nullopt, c, true);
  for (std::size_t i = 0; i < clean.train_inputs.size(); ++i) CHECK(clean.train_inputs[i] == clean.train_targets[i]);

  const DenoiseSplit again = load_denoise_dataset(std::nullopt, c, true);
  CHECK(again.test_targets == clean.test_targets);

  CHECK_THROWS_AS(load_denoise_dataset(std::string("/nonexistent/images.idx"), c, false), IoError);
  CHECK_THROWS_AS(load_denoise_dataset(std::nullopt, c, false), IoError);
}

TEST_CASE("idx images round trip and reject malformed input") {
  idx::Images img;
  img.count = 3;
  img.rows = 28;
  img.cols = 28;
  img.pixels.resize(3 * 28 * 28);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 7);
  const auto bytes = idx::encode_images(img);
  CHECK(bytes.size() == 16 + 3 * 784);
  CHECK(bytes[2] == 0x08);
  CHECK(bytes[3] == 0x03);
  CHECK(bytes[7] == 3);
  const idx::Images back = idx::parse_images(bytes);
  CHECK(back.count == 3);
  CHECK(back.pixels == img.pixels);

  auto bad = bytes;
  bad[3] = 0x01;
  try {
    (void)idx::parse_images(bad);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.position() == 0);
  }
  auto truncated = bytes;
  truncated.resize(100);
  try {
    (void)idx::parse_images(truncated);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.position() == 100);
  }
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(idx::parse_images(trailing), ParseError);
  auto zero_rows = bytes;
  zero_rows[11] = 0;
  try {
    (void)idx::parse_images(zero_rows);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.position() == 8);
  }
  const std::vector<std::uint8_t> tiny = {0, 0, 8};
  CHECK_THROWS_AS(idx::parse_images(tiny), ParseError);

  const std::vector<std::uint8_t> labels = {0, 0, 8, 1, 0, 0, 0, 2, 7, 9};
  CHECK(idx::parse_labels(labels).labels == std::vector<std::uint8_t>{7, 9});
  CHECK_THROWS_AS(idx::parse_labels(bytes), ParseError);
}

TEST_CASE("denoise loads an idx file") {
  idx::Images img;
  img.count = 20;
  img.rows = 8;
  img.cols = 8;
  img.pixels.assign(20 * 64, 255);
  const auto path = std::filesystem::temp_directory_path() / "losse_test_images.idx";
  {
    const auto bytes = idx::encode_images(img);
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  DenoiseConfig c;
  c.noise_sigma = 0.0;
  c.patch_side = 4;
  const DenoiseSplit s = load_denoise_dataset(path.string(), c, false);
  CHECK_FALSE(s.synthetic);
  CHECK(s.train_inputs.size() == 18);
  CHECK(s.test_inputs.size() == 2);
  CHECK(s.train_targets.front().isOnes(1e-7));
  std::filesystem::remove(path);
}
