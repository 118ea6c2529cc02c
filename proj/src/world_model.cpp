#include "losse/world_model.hpp"

#include <istream>
#include <ostream>
#include <string>

#include "losse/errors.hpp"

namespace losse {

namespace {

const char* storage_name(FtlLearner::Storage s) {
  switch (s) {
    case FtlLearner::Storage::Dense:
      return "dense";
    case FtlLearner::Storage::SparseRows:
      return "sparse_rows";
    case FtlLearner::Storage::Auto:
      break;
  }
  return "auto";
}

LosseConfig with_input_dim(LosseConfig c, const EnvSpec& spec) {
  c.input_dim = spec.state_dim + spec.action_count;
  return c;
}

}  // namespace

void to_json(nlohmann::json& j, const WorldModelConfig& c) {
  j = nlohmann::json{{"encoder", c.encoder},
                     {"epsilon", c.epsilon},
                     {"dt", c.dt},
                     {"input_scale", c.input_scale},
                     {"storage", storage_name(c.storage)}};
}

void from_json(const nlohmann::json& j, WorldModelConfig& c) {
  if (j.contains("encoder")) from_json(j.at("encoder"), c.encoder);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.dt = j.value("dt", c.dt);
  c.input_scale = j.value("input_scale", c.input_scale);
  if (j.contains("storage")) {
    const auto s = j.at("storage").get<std::string>();
    if (s == "auto") {
      c.storage = FtlLearner::Storage::Auto;
    } else if (s == "dense") {
      c.storage = FtlLearner::Storage::Dense;
    } else if (s == "sparse_rows") {
      c.storage = FtlLearner::Storage::SparseRows;
    } else {
      throw ConfigError("world model: unknown storage '" + s + "'");
    }
  }
}

WorldModel::WorldModel(const EnvSpec& spec, WorldModelConfig config)
    : spec_(spec),
      config_(std::move(config)),
      encoder_(with_input_dim(config_.encoder, spec)),
      learner_(encoder_.feature_dim(), spec.state_dim + 1, config_.epsilon, config_.storage) {
  spec_.validate();
  config_.encoder = encoder_.config();
  if (!(config_.dt > 0.0)) throw ConfigError("world model: dt must be positive");
  if (!(config_.input_scale > 0.0)) throw ConfigError("world model: input_scale must be positive");
  learner_.set_config_hash(config_hash(encoder_.config()));
}

DenseVector WorldModel::model_input(const DenseVector& s, int a) const {
  if (s.size() != spec_.state_dim) throw ShapeError("world model: state has wrong dimension");
  if (a < 0 || a >= spec_.action_count) throw ShapeError("world model: action out of range");
  DenseVector x = DenseVector::Zero(spec_.state_dim + spec_.action_count);
  for (int i = 0; i < spec_.state_dim; ++i) {
    const auto [lo, hi] = spec_.state_bounds[i];
    x[i] = config_.input_scale * (2.0 * (s[i] - lo) / (hi - lo) - 1.0);
  }
  x[spec_.state_dim + a] = 1.0;
  return x;
}

SparseVector WorldModel::features(const DenseVector& s, int a) const {
  return encoder_.encode_clamped(model_input(s, a));
}

void WorldModel::observe(const Transition& t) {
  if (!t.s.allFinite() || !t.s_next.allFinite() || !std::isfinite(t.r)) {
    throw ValueError("world model: non-finite transition");
  }
  if (t.s_next.size() != spec_.state_dim) throw ShapeError("world model: next state has wrong dimension");
  const SparseVector phi = features(t.s, t.a);
  DenseVector y(spec_.state_dim + 1);
  y.head(spec_.state_dim) = (t.s_next - t.s) / config_.dt;
  y[spec_.state_dim] = t.r;
  learner_.observe_sparse(phi, y);
  ++observed_;
}

ModelPrediction WorldModel::predict_next(const DenseVector& s, int a) const {
  const SparseVector phi = features(s, a);
  const DenseVector y = learner_.predict(phi);
  ModelPrediction out;
  out.next_state = spec_.clamp(s + config_.dt * y.head(spec_.state_dim));
  out.reward = y[spec_.state_dim];
  return out;
}

std::vector<Transition> WorldModel::unroll(const DenseVector& s0,
                                           const std::function<int(const DenseVector&)>& policy, int k,
                                           const std::function<bool(const DenseVector&)>& terminal) const {
  if (k < 1) throw ConfigError("unroll length must be at least 1");
  std::vector<Transition> out;
  out.reserve(k);
  DenseVector s = s0;
  for (int i = 0; i < k; ++i) {
    const int a = policy(s);
    ModelPrediction p = predict_next(s, a);
    if (!p.next_state.allFinite() || !std::isfinite(p.reward)) break;
    Transition t{s, a, p.reward, p.next_state, terminal ? terminal(p.next_state) : false};
    s = p.next_state;
    const bool done = t.done;
    out.push_back(std::move(t));
    if (done) break;
  }
  return out;
}

void WorldModel::save(std::ostream& out) const {
  const std::string cfg = nlohmann::json(config_).dump();
  const std::uint64_t n = cfg.size();
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>(n >> (8 * i)));
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>(observed_ >> (8 * i)));
  learner_.save(out);
  if (!out) throw IoError("failed writing world model checkpoint");
}

WorldModel WorldModel::load(std::istream& in, const EnvSpec& spec) {
  auto get_u64 = [&in]() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      const int c = in.get();
      if (c == EOF) throw ParseError("truncated world model checkpoint", static_cast<std::size_t>(i));
      v |= std::uint64_t(static_cast<unsigned char>(c)) << (8 * i);
    }
    return v;
  };
  const std::uint64_t n = get_u64();
  if (n > (1u << 20)) throw ParseError("implausible config length", 0);
  std::string cfg(n, '\0');
  if (!in.read(cfg.data(), static_cast<std::streamsize>(n))) throw ParseError("truncated config", 8);
  WorldModelConfig config = nlohmann::json::parse(cfg).get<WorldModelConfig>();
  WorldModel model(spec, config);
  model.observed_ = get_u64();
  model.learner_ = FtlLearner::load(in);
  if (model.learner_.config_hash() != config_hash(model.encoder_.config()) ||
      model.learner_.target_dim() != spec.state_dim + 1) {
    throw ParseError("checkpoint learners do not match the encoder config", 8 + n);
  }
  return model;
}

}  // namespace losse
