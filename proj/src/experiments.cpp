#include "losse/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "losse/agent.hpp"
#include "losse/errors.hpp"
#include "losse/format.hpp"
#include "losse/learner.hpp"
#include "losse/world_model.hpp"

namespace losse {

using nlohmann::json;
namespace fs = std::filesystem;

// ------------------------------------------------------------------ configs

namespace {

json seed_range(int n) {
  json s = json::array();
  for (int i = 0; i < n; ++i) s.push_back(i);
  return s;
}

json stream_defaults() {
  return json{{"kind", "stream"},
              {"seeds", seed_range(30)},
              {"d_grid", {0.0, 0.5, 0.9, 0.98}},
              {"stream_length", 20000},
              {"holdout", 500},
              {"tau", 50},
              {"bound", 1.0},
              {"epsilon", 1e-6},
              {"encoder", {{"kappa", 10}, {"rho", 2}, {"lambda", 10}}},
              {"sgd", {{"enabled", true}, {"learning_rate", 0.05}, {"batch", 50}}},
              {"oracle_interval", 0}};
}

}  // namespace

json default_config(const std::string& kind) {
  if (kind == "stream") return stream_defaults();
  if (kind == "gd-vs-ftl") {
    json j = stream_defaults();
    j["kind"] = "gd-vs-ftl";
    j["seeds"] = seed_range(10);
    j["lambda_grid"] = {10, 20, 30};
    return j;
  }
  if (kind == "denoise") {
    return json{{"kind", "denoise"},
                {"seeds", seed_range(3)},
                {"patch_sides", {3, 4, 5}},
                {"noise_sigma", 0.3},
                {"train_fraction", 0.9},
                {"validation_fraction", 0.1},
                {"synthetic_count", 10000},
                {"max_images", 0},
                {"allow_fallback", true},
                {"epsilon", 1e-6},
                {"losse", {{"kappa", 20}, {"rho", 2}, {"lambda_grid", {5, 6, 7, 8, 9}}}},
                {"tile", {{"tilings", 80}, {"rho", 2}, {"bins_grid", {5, 6, 7, 8, 9}}}},
                {"dense", {{"features", 80},
                           {"scale_grid", {0.1, 0.3, 0.5, 1.0, 5.0, 10.0}},
                           {"learning_rate", 1e-4},
                           {"batch", 32},
                           {"epochs", 20}}},
                {"encoders", {"losse", "relu", "tile", "fourier"}}};
  }
  if (kind == "encoder-bench") {
    return json{{"kind", "encoder-bench"},
                {"seeds", {0}},
                {"samples", 10000},
                {"input_dim", 4},
                {"input_range", 3.0},
                {"losse", json::array({{{"kappa", 30}, {"rho", 2}, {"lambda", 10}},
                                       {{"kappa", 10}, {"rho", 3}, {"lambda", 10}},
                                       {{"kappa", 20}, {"rho", 2}, {"lambda", 7}}})},
                {"tile", {{"tilings", 80}, {"rho", 2}, {"bins", 7}}},
                {"dense_features", 80},
                {"projection_scale", 1.0}};
  }
  if (kind == "dyna") {
    DynaConfig d;
    d.epochs = 12500;
    d.error_interval = 2500;
    d.eval_episodes = 10;
    QAgentConfig a;
    // Gridworld returns discounted at the agent's gamma, so shorter paths score
    // higher. Best: the nominal 31-step Manhattan path from S into the goal
    // disc. Random: random_policy_return over 2000 episodes.
    d.return_discount = a.gamma;
    d.best_return = std::pow(a.gamma, 30);
    d.random_return = 1.41e-6;
    WorldModelConfig m;
    json agent = a;
    agent.erase("seed");
    agent["encoder"].erase("input_dim");
    agent["encoder"].erase("seed");
    json model = m;
    model["encoder"].erase("input_dim");
    model["encoder"].erase("seed");
    json dyna = d;
    dyna.erase("seed");
    return json{{"kind", "dyna"},
                {"seeds", seed_range(30)},
                {"environment", "gridworld"},
                {"arms", {"dyna", "model_free"}},
                {"epsilon_decay_fraction", 0.2},
                {"record_timing", true},
                {"dyna", dyna},
                {"agent", agent},
                {"model", model}};
  }
  throw ConfigError("unknown experiment kind '" + kind + "'");
}

void apply_override(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &cfg;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("empty path component in override: " + key);
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    if (!node->contains(part) || !(*node)[part].is_object()) (*node)[part] = json::object();
    node = &(*node)[part];
    start = dot + 1;
  }
}

json resolve_config(const std::string& kind, const json& user, const std::vector<std::string>& overrides) {
  json cfg = default_config(kind);
  json body = user;
  if (body.is_object() && body.contains("version") && body.contains("config")) body = body.at("config");
  if (!body.is_null()) {
    if (!body.is_object()) throw ConfigError("config file must hold a JSON object");
    if (body.contains("kind") && body.at("kind") != kind) {
      throw ConfigError("config is for '" + body.at("kind").get<std::string>() + "', not '" + kind + "'");
    }
    for (const auto& [k, v] : body.items()) {
      if (!cfg.contains(k)) throw ConfigError("unknown config key '" + k + "'");
    }
    cfg.merge_patch(body);
  }
  for (const auto& o : overrides) apply_override(cfg, o);
  cfg["kind"] = kind;
  (void)config_seeds(cfg);
  return cfg;
}

std::vector<std::uint64_t> config_seeds(const json& cfg) {
  if (!cfg.contains("seeds") || !cfg.at("seeds").is_array() || cfg.at("seeds").empty()) {
    throw ConfigError("seeds must be a nonempty list");
  }
  std::vector<std::uint64_t> out;
  for (const auto& s : cfg.at("seeds")) {
    if (!s.is_number_integer() || s.get<long long>() < 0) throw ConfigError("seeds must be nonnegative integers");
    out.push_back(s.get<std::uint64_t>());
  }
  return out;
}

int effective_workers(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// ---------------------------------------------------------------------- csv

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ParseError("csv: missing column '" + name + "'", 1);
  return static_cast<std::size_t>(it - header.begin());
}

double CsvTable::number(std::size_t row, const std::string& name) const {
  try {
    return parse_double(rows.at(row).at(column(name)));
  } catch (const ValueError& e) {
    throw ParseError(std::string("csv: ") + e.what(), row + 2);
  }
}

CsvTable parse_csv(std::string_view text) {
  CsvTable t;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      if (line_no == 1) throw ParseError("csv: empty header", 1);
      continue;
    }
    std::vector<std::string> fields;
    std::size_t f = 0;
    while (true) {
      const auto comma = line.find(',', f);
      fields.emplace_back(line.substr(f, comma == std::string_view::npos ? std::string_view::npos : comma - f));
      if (comma == std::string_view::npos) break;
      f = comma + 1;
    }
    if (line_no == 1) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw ParseError("csv: expected " + std::to_string(t.header.size()) + " fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    }
    t.rows.push_back(std::move(fields));
  }
  if (t.header.empty()) throw ParseError("csv: empty header", 1);
  return t;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

CsvTable read_csv(const fs::path& path) { return parse_csv(read_text(path)); }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void write_manifest(const fs::path& dir, const std::string& kind, const json& cfg) {
  json m{{"version", kVersion}, {"kind", kind}, {"config", cfg}};
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

MeanStderr mean_stderr(const std::vector<double>& xs) {
  MeanStderr r;
  if (xs.empty()) return r;
  r.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.stderr_ = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  }
  return r;
}

namespace {

void progress(const RunOptions& opt, const std::string& msg) {
  if (!opt.log_progress) return;
  static std::mutex m;
  std::lock_guard lock(m);
  std::clog << msg << "\n";
}

double predict_scalar(const Eigen::MatrixXd& w, const SparseVector& phi) {
  double p = 0.0;
  for (std::size_t k = 0; k < phi.nnz(); ++k) p += phi.values[k] * w(phi.indices[k], 0);
  return p;
}

}  // namespace

// ------------------------------------------------------------------- stream

PrwRunResult run_prw(const PrwRunSettings& s) {
  s.prw.validate();
  if (s.stream_length <= 0 || s.holdout <= 0) throw ConfigError("stream: length and holdout must be positive");
  if (s.sgd && s.sgd_batch <= 0) throw ConfigError("stream: sgd batch must be positive");
  LosseConfig ec = s.encoder;
  ec.input_dim = 1;
  const LosseEncoder enc(ec);
  FtlLearner ftl(enc.feature_dim(), 1, s.epsilon);
  SgdLearner sgd(enc.feature_dim(), 1, s.sgd_learning_rate);
  PrwStream stream(s.prw);

  PrwRunResult r;
  std::vector<SparseSample> batch;
  std::vector<SparseSample> log;
  DenseVector x(1), y(1);
  for (int t = 1; t <= s.stream_length; ++t) {
    const auto [xt, yt] = stream.next();
    x[0] = xt;
    y[0] = yt;
    SparseVector phi = enc.encode_clamped(x);
    ftl.observe_sparse(phi, y);
    if (s.oracle_interval > 0) log.push_back({phi, y});
    if (s.sgd) {
      batch.push_back({std::move(phi), y});
      if (static_cast<int>(batch.size()) == s.sgd_batch) {
        sgd.step_batch(batch);
        batch.clear();
      }
    }
    if (s.oracle_interval > 0 && t % s.oracle_interval == 0) {
      const Eigen::MatrixXd w = solve_batch_oracle(std::span<const SparseSample>(log), s.epsilon);
      const double norm = w.norm();
      const double gap = norm > 0.0 ? (ftl.weights() - w).norm() / norm : (ftl.weights() - w).norm();
      r.oracle_gaps.emplace_back(t, gap);
      r.max_oracle_gap = std::max(r.max_oracle_gap, gap);
    }
  }

  const auto holdout = prw_holdout(s.prw, s.holdout, s.holdout_seed);
  double ftl_se = 0.0, sgd_se = 0.0;
  for (const auto& [hx, hy] : holdout) {
    x[0] = hx;
    const SparseVector phi = enc.encode_clamped(x);
    const double pf = ftl.predict(phi)[0];
    ftl_se += (pf - hy) * (pf - hy);
    if (s.sgd) {
      const double ps = predict_scalar(sgd.weights(), phi);
      sgd_se += (ps - hy) * (ps - hy);
    }
  }
  r.ftl_mse = ftl_se / static_cast<double>(holdout.size());
  r.sgd_mse = s.sgd ? sgd_se / static_cast<double>(holdout.size()) : std::numeric_limits<double>::quiet_NaN();
  return r;
}

PrwRunSettings prw_settings(const json& cfg, double d, std::uint64_t seed) {
  PrwRunSettings s;
  s.prw.d = d;
  s.prw.bound = cfg.at("bound").get<double>();
  s.prw.tau = cfg.at("tau").get<int>();
  s.prw.seed = derive_seed(seed, 10);
  from_json(cfg.at("encoder"), s.encoder);
  s.encoder.input_dim = 1;
  s.encoder.seed = derive_seed(seed, 11);
  s.holdout_seed = derive_seed(seed, 12);
  s.epsilon = cfg.at("epsilon").get<double>();
  s.stream_length = cfg.at("stream_length").get<int>();
  s.holdout = cfg.at("holdout").get<int>();
  const auto& sgd = cfg.at("sgd");
  s.sgd = sgd.value("enabled", true);
  s.sgd_learning_rate = sgd.at("learning_rate").get<double>();
  s.sgd_batch = sgd.at("batch").get<int>();
  s.oracle_interval = cfg.at("oracle_interval").get<int>();
  return s;
}

namespace {

std::vector<double> d_grid(const json& cfg) {
  std::vector<double> ds = cfg.at("d_grid").get<std::vector<double>>();
  if (ds.empty()) throw ConfigError("d_grid must be nonempty");
  for (double d : ds) {
    if (!(d >= 0.0 && d < 1.0)) throw ConfigError("d must lie in [0, 1), got " + fmt_double(d));
  }
  return ds;
}

}  // namespace

std::vector<StreamRow> run_stream(const json& cfg, const RunOptions& opt) {
  const auto seeds = config_seeds(cfg);
  const auto ds = d_grid(cfg);
  const std::size_t jobs = ds.size() * seeds.size();
  std::vector<PrwRunResult> results(jobs);
  parallel_for(jobs, opt.workers, [&](std::size_t i) {
    const double d = ds[i / seeds.size()];
    const auto seed = seeds[i % seeds.size()];
    results[i] = run_prw(prw_settings(cfg, d, seed));
    progress(opt, "stream d=" + fmt_double(d) + " seed=" + std::to_string(seed) + " done");
  });

  std::vector<StreamRow> rows;
  std::ostringstream runs;
  runs << "d,seed,ftl_mse,sgd_mse,max_oracle_gap\n";
  for (std::size_t di = 0; di < ds.size(); ++di) {
    StreamRow row;
    row.d = ds[di];
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      const auto& r = results[di * seeds.size() + si];
      row.ftl_runs.push_back(r.ftl_mse);
      row.sgd_runs.push_back(r.sgd_mse);
      runs << fmt_double(ds[di]) << "," << seeds[si] << "," << fmt_double(r.ftl_mse) << ","
           << fmt_double(r.sgd_mse) << "," << fmt_double(r.max_oracle_gap) << "\n";
    }
    row.ftl = mean_stderr(row.ftl_runs);
    row.sgd = mean_stderr(row.sgd_runs);
    rows.push_back(std::move(row));
  }

  std::ostringstream out;
  out << "d,mse_mean,mse_stderr,sgd_mse_mean,sgd_mse_stderr\n";
  for (const auto& r : rows) {
    out << fmt_double(r.d) << "," << fmt_double(r.ftl.mean) << "," << fmt_double(r.ftl.stderr_) << ","
        << fmt_double(r.sgd.mean) << "," << fmt_double(r.sgd.stderr_) << "\n";
  }
  write_text(opt.out / "stream.csv", out.str());
  write_text(opt.out / "stream_runs.csv", runs.str());
  write_manifest(opt.out, "stream", cfg);
  return rows;
}

std::vector<GdVsFtlRow> run_gd_vs_ftl(const json& cfg, const RunOptions& opt) {
  const auto seeds = config_seeds(cfg);
  const auto ds = d_grid(cfg);
  const auto lambdas = cfg.at("lambda_grid").get<std::vector<int>>();
  if (lambdas.empty()) throw ConfigError("lambda_grid must be nonempty");
  const std::size_t per_lambda = ds.size() * seeds.size();
  const std::size_t jobs = lambdas.size() * per_lambda;
  std::vector<PrwRunResult> results(jobs);
  parallel_for(jobs, opt.workers, [&](std::size_t i) {
    const int lambda = lambdas[i / per_lambda];
    const double d = ds[(i % per_lambda) / seeds.size()];
    const auto seed = seeds[i % seeds.size()];
    PrwRunSettings s = prw_settings(cfg, d, seed);
    s.encoder.lambda = lambda;
    s.sgd = true;
    s.oracle_interval = 0;
    results[i] = run_prw(s);
    progress(opt, "gd-vs-ftl lambda=" + std::to_string(lambda) + " d=" + fmt_double(d) + " seed=" +
                      std::to_string(seed) + " done");
  });

  std::vector<GdVsFtlRow> rows;
  std::ostringstream out;
  out << "lambda,method,d,mse_mean,mse_stderr\n";
  for (std::size_t li = 0; li < lambdas.size(); ++li) {
    for (const std::string method : {"ftl", "gd"}) {
      for (std::size_t di = 0; di < ds.size(); ++di) {
        std::vector<double> xs;
        for (std::size_t si = 0; si < seeds.size(); ++si) {
          const auto& r = results[li * per_lambda + di * seeds.size() + si];
          xs.push_back(method == "ftl" ? r.ftl_mse : r.sgd_mse);
        }
        GdVsFtlRow row{lambdas[li], method, ds[di], mean_stderr(xs)};
        out << row.lambda << "," << row.method << "," << fmt_double(row.d) << "," << fmt_double(row.mse.mean)
            << "," << fmt_double(row.mse.stderr_) << "\n";
        rows.push_back(std::move(row));
      }
    }
  }
  write_text(opt.out / "gd_vs_ftl.csv", out.str());
  write_manifest(opt.out, "gd-vs-ftl", cfg);
  return rows;
}

// ------------------------------------------------------------------ denoise

namespace {

struct Standardized {
  std::vector<DenseVector> train, val, test;
  std::vector<DenseVector> train_y, val_y, test_y;
};

// Splits the last validation_fraction of the training data off for model
// selection and z-scores every input with training statistics.
Standardized standardize(const DenoiseSplit& split, double validation_fraction) {
  Standardized s;
  const std::size_t n = split.train_inputs.size();
  const auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n)));
  if (n_val == 0 || n_val >= n) throw ConfigError("denoise: validation split is empty or covers the training set");
  const std::size_t n_fit = n - n_val;
  const int dim = static_cast<int>(split.train_inputs.front().size());
  DenseVector mean = DenseVector::Zero(dim), sq = DenseVector::Zero(dim);
  for (std::size_t i = 0; i < n_fit; ++i) {
    mean += split.train_inputs[i];
    sq += split.train_inputs[i].cwiseProduct(split.train_inputs[i]);
  }
  mean /= static_cast<double>(n_fit);
  DenseVector sd = (sq / static_cast<double>(n_fit) - mean.cwiseProduct(mean)).cwiseMax(0.0).cwiseSqrt();
  sd = sd.cwiseMax(1e-6);
  auto z = [&](const DenseVector& x) -> DenseVector { return (x - mean).cwiseQuotient(sd); };
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < n_fit ? s.train : s.val;
    auto& dst_y = i < n_fit ? s.train_y : s.val_y;
    dst.push_back(z(split.train_inputs[i]));
    dst_y.push_back(split.train_targets[i]);
  }
  for (std::size_t i = 0; i < split.test_inputs.size(); ++i) {
    s.test.push_back(z(split.test_inputs[i]));
    s.test_y.push_back(split.test_targets[i]);
  }
  return s;
}

double mse_sparse(const Eigen::MatrixXd& w, const std::vector<SparseVector>& phis, const std::vector<DenseVector>& ys) {
  double total = 0.0;
  for (std::size_t i = 0; i < phis.size(); ++i) {
    DenseVector p = DenseVector::Zero(w.cols());
    for (std::size_t k = 0; k < phis[i].nnz(); ++k) p += phis[i].values[k] * w.row(phis[i].indices[k]).transpose();
    total += (p - ys[i]).squaredNorm() / static_cast<double>(ys[i].size());
  }
  return total / static_cast<double>(phis.size());
}

// Closed-form FTL head on sparse features; returns (validation, test) MSE.
template <class Encode>
std::pair<double, double> fit_sparse_head(const Standardized& data, Encode encode, double epsilon) {
  std::vector<SparseSample> samples;
  samples.reserve(data.train.size());
  for (std::size_t i = 0; i < data.train.size(); ++i) samples.push_back({encode(data.train[i]), data.train_y[i]});
  const Eigen::MatrixXd w = solve_batch_oracle(std::span<const SparseSample>(samples), epsilon);
  samples.clear();
  std::vector<SparseVector> val, test;
  for (const auto& x : data.val) val.push_back(encode(x));
  for (const auto& x : data.test) test.push_back(encode(x));
  return {mse_sparse(w, val, data.val_y), mse_sparse(w, test, data.test_y)};
}

struct AdamSettings {
  double learning_rate = 1e-4;
  int batch = 32;
  int epochs = 20;
};

// Linear head with bias on dense features, trained by mini-batch Adam.
std::pair<double, double> fit_dense_head(const Standardized& data, const BaselineEncoder& enc, const AdamSettings& a,
                                         std::uint64_t seed) {
  const int f = enc.feature_dim() + 1;
  auto features = [&](const std::vector<DenseVector>& xs) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(xs.size()), f);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      m.row(static_cast<Eigen::Index>(i)).head(f - 1) = enc.encode_dense(xs[i]).transpose();
      m(static_cast<Eigen::Index>(i), f - 1) = 1.0;
    }
    return m;
  };
  auto targets = [](const std::vector<DenseVector>& ys) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(ys.size()), ys.front().size());
    for (std::size_t i = 0; i < ys.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = ys[i].transpose();
    return m;
  };
  const Eigen::MatrixXd xtr = features(data.train), ytr = targets(data.train_y);
  const int s = static_cast<int>(ytr.cols());
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(f, s), m1 = w, m2 = w;
  constexpr double b1 = 0.9, b2 = 0.999, tiny = 1e-8;
  Rng rng(seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(xtr.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::uint64_t t = 0;
  for (int e = 0; e < a.epochs; ++e) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(i)]);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(a.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(a.batch));
      const auto rows = std::vector<Eigen::Index>(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                  order.begin() + static_cast<std::ptrdiff_t>(end));
      const Eigen::MatrixXd xb = xtr(rows, Eigen::all);
      const Eigen::MatrixXd rb = xb * w - ytr(rows, Eigen::all);
      const Eigen::MatrixXd g = (2.0 / static_cast<double>(rows.size() * s)) * xb.transpose() * rb;
      ++t;
      m1 = b1 * m1 + (1.0 - b1) * g;
      m2 = b2 * m2 + (1.0 - b2) * g.cwiseProduct(g);
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
      w.array() -= a.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + tiny);
    }
  }
  auto mse = [&](const std::vector<DenseVector>& xs, const std::vector<DenseVector>& ys) {
    const Eigen::MatrixXd r = features(xs) * w - targets(ys);
    return r.squaredNorm() / static_cast<double>(r.size());
  };
  return {mse(data.val, data.val_y), mse(data.test, data.test_y)};
}

}  // namespace

std::vector<DenoiseRow> run_denoise(const json& cfg, const RunOptions& opt) {
  const auto seeds = config_seeds(cfg);
  const auto sides = cfg.at("patch_sides").get<std::vector<int>>();
  const auto encoders = cfg.at("encoders").get<std::vector<std::string>>();
  for (const auto& e : encoders) {
    if (e != "losse" && e != "tile" && e != "fourier" && e != "relu") throw ConfigError("denoise: unknown encoder " + e);
  }
  const double epsilon = cfg.at("epsilon").get<double>();
  const double val_fraction = cfg.at("validation_fraction").get<double>();
  const bool fallback = cfg.at("allow_fallback").get<bool>();
  const auto& lc = cfg.at("losse");
  const auto& tc = cfg.at("tile");
  const auto& dc = cfg.at("dense");
  AdamSettings adam{dc.at("learning_rate").get<double>(), dc.at("batch").get<int>(), dc.at("epochs").get<int>()};

  // One job per (side, seed, encoder); each returns the test MSE of the
  // setting that wins on validation.
  struct Job {
    int side;
    std::uint64_t seed;
    std::string encoder;
  };
  std::vector<Job> jobs;
  for (int side : sides) {
    for (auto seed : seeds) {
      for (const auto& e : encoders) jobs.push_back({side, seed, e});
    }
  }
  std::vector<std::pair<double, std::string>> results(jobs.size());
  std::mutex data_mutex;
  std::map<std::pair<int, std::uint64_t>, std::shared_ptr<const Standardized>> cache;
  bool synthetic = false;

  auto dataset = [&](int side, std::uint64_t seed) {
    std::lock_guard lock(data_mutex);
    auto& slot = cache[{side, seed}];
    if (!slot) {
      DenoiseConfig dcfg;
      dcfg.patch_side = side;
      dcfg.noise_sigma = cfg.at("noise_sigma").get<double>();
      dcfg.train_fraction = cfg.at("train_fraction").get<double>();
      dcfg.synthetic_count = cfg.at("synthetic_count").get<int>();
      dcfg.max_images = cfg.at("max_images").get<int>();
      dcfg.seed = derive_seed(seed, 30);
      const DenoiseSplit split = load_denoise_dataset(opt.dataset_path, dcfg, fallback);
      synthetic = synthetic || split.synthetic;
      slot = std::make_shared<const Standardized>(standardize(split, val_fraction));
    }
    return slot;
  };

  parallel_for(jobs.size(), opt.workers, [&](std::size_t i) {
    const Job& job = jobs[i];
    const auto data = dataset(job.side, job.seed);
    const int dim = job.side * job.side;
    double best_val = std::numeric_limits<double>::infinity(), best_test = 0.0;
    std::string chosen;
    auto consider = [&](std::pair<double, double> vt, const std::string& label) {
      if (vt.first < best_val) {
        best_val = vt.first;
        best_test = vt.second;
        chosen = label;
      }
    };
    if (job.encoder == "losse") {
      for (int lambda : lc.at("lambda_grid").get<std::vector<int>>()) {
        LosseConfig c;
        c.input_dim = dim;
        c.kappa = lc.at("kappa").get<int>();
        c.rho = lc.at("rho").get<int>();
        c.lambda = lambda;
        c.seed = derive_seed(job.seed, 31);
        const LosseEncoder enc(c);
        consider(fit_sparse_head(*data, [&](const DenseVector& x) { return enc.encode_clamped(x); }, epsilon),
                 "lambda=" + std::to_string(lambda));
      }
    } else if (job.encoder == "tile") {
      for (int bins : tc.at("bins_grid").get<std::vector<int>>()) {
        BaselineEncoderConfig c;
        c.kind = BaselineKind::TileCode;
        c.input_dim = dim;
        c.tilings = tc.at("tilings").get<int>();
        c.tile_rho = tc.at("rho").get<int>();
        c.tile_bins = bins;
        c.seed = derive_seed(job.seed, 32);
        const BaselineEncoder enc(c);
        consider(fit_sparse_head(*data,
                                 [&](const DenseVector& x) { return std::get<SparseVector>(enc.encode(clamp_input(x, 3.0))); },
                                 epsilon),
                 "bins=" + std::to_string(bins));
      }
    } else {
      for (double scale : dc.at("scale_grid").get<std::vector<double>>()) {
        BaselineEncoderConfig c;
        c.kind = job.encoder == "fourier" ? BaselineKind::Fourier : BaselineKind::Relu;
        c.input_dim = dim;
        c.output_dim = dc.at("features").get<int>();
        c.projection_scale = scale;
        c.seed = derive_seed(job.seed, 33);
        const BaselineEncoder enc(c);
        consider(fit_dense_head(*data, enc, adam, derive_seed(job.seed, 34)), "scale=" + fmt_double(scale));
      }
    }
    results[i] = {best_test, chosen};
    progress(opt, "denoise side=" + std::to_string(job.side) + " seed=" + std::to_string(job.seed) + " " +
                      job.encoder + " mse=" + fmt_double(best_test) + " (" + chosen + ")");
  });

  std::vector<DenoiseRow> rows;
  std::ostringstream out;
  out << "patch,encoder,mse_mean,mse_stderr,selected,dataset\n";
  for (int side : sides) {
    for (const auto& e : encoders) {
      std::vector<double> xs;
      std::string selected;
      for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (jobs[i].side == side && jobs[i].encoder == e) {
          xs.push_back(results[i].first);
          selected += (selected.empty() ? "" : " ") + results[i].second;
        }
      }
      DenoiseRow row{side * side, e, mean_stderr(xs), selected};
      out << row.patch << "," << row.encoder << "," << fmt_double(row.mse.mean) << ","
          << fmt_double(row.mse.stderr_) << "," << row.selected << "," << (synthetic ? "synthetic" : "idx") << "\n";
      rows.push_back(std::move(row));
    }
  }
  write_text(opt.out / "denoise.csv", out.str());
  write_manifest(opt.out, "denoise", cfg);
  return rows;
}

// ------------------------------------------------------------ encoder bench

std::vector<EncoderBenchRow> run_encoder_bench(const json& cfg, const RunOptions& opt) {
  const auto seeds = config_seeds(cfg);
  const auto seed = seeds.front();
  const int samples = cfg.at("samples").get<int>();
  const int dim = cfg.at("input_dim").get<int>();
  const double range = cfg.at("input_range").get<double>();
  if (samples <= 0 || dim <= 0 || !(range > 0.0)) throw ConfigError("encoder-bench: bad sample settings");

  Rng rng(derive_seed(seed, 40));
  std::vector<DenseVector> inputs(static_cast<std::size_t>(samples));
  for (auto& x : inputs) {
    x.resize(dim);
    for (int i = 0; i < dim; ++i) x[i] = rng.uniform(-range, range);
  }

  std::vector<EncoderBenchRow> rows;
  auto bench = [&](EncoderBenchRow row, auto&& encode_nnz) {
    row.samples = samples;
    long long total = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& x : inputs) {
      const int nnz = encode_nnz(x);
      total += nnz;
      row.max_nnz = std::max(row.max_nnz, nnz);
      row.max_density = std::max(row.max_density, static_cast<double>(nnz) / row.feature_dim);
    }
    const auto t1 = std::chrono::steady_clock::now();
    row.mean_nnz = static_cast<double>(total) / samples;
    row.encode_microseconds = std::chrono::duration<double, std::micro>(t1 - t0).count() / samples;
    if (row.nnz_bound >= 0) {
      row.within_bounds = row.max_nnz <= row.nnz_bound && row.max_density <= row.density_bound + 1e-15;
    }
    rows.push_back(std::move(row));
  };

  for (const auto& lj : cfg.at("losse")) {
    LosseConfig c;
    from_json(lj, c);
    c.input_dim = dim;
    c.seed = derive_seed(seed, 41);
    const LosseEncoder enc(c);
    EncoderBenchRow row;
    row.encoder = "losse(k=" + std::to_string(c.kappa) + ",r=" + std::to_string(c.rho) + ",l=" + std::to_string(c.lambda) + ")";
    row.feature_dim = enc.feature_dim();
    row.nnz_bound = c.max_nonzeros();
    row.density_bound = std::pow(2.0 / c.lambda, c.rho);
    bench(row, [&](const DenseVector& x) { return static_cast<int>(enc.encode_clamped(x).nnz()); });
  }
  {
    const auto& tj = cfg.at("tile");
    BaselineEncoderConfig c;
    c.kind = BaselineKind::TileCode;
    c.input_dim = dim;
    c.tilings = tj.at("tilings").get<int>();
    c.tile_rho = tj.at("rho").get<int>();
    c.tile_bins = tj.at("bins").get<int>();
    c.seed = derive_seed(seed, 42);
    const BaselineEncoder enc(c);
    EncoderBenchRow row;
    row.encoder = "tile";
    row.feature_dim = enc.feature_dim();
    row.nnz_bound = c.tilings;
    row.density_bound = static_cast<double>(c.tilings) / enc.feature_dim();
    bench(row, [&](const DenseVector& x) { return static_cast<int>(std::get<SparseVector>(enc.encode(x)).nnz()); });
  }
  for (const auto kind : {BaselineKind::Fourier, BaselineKind::Relu}) {
    BaselineEncoderConfig c;
    c.kind = kind;
    c.input_dim = dim;
    c.output_dim = cfg.at("dense_features").get<int>();
    c.projection_scale = cfg.at("projection_scale").get<double>();
    c.seed = derive_seed(seed, 43);
    const BaselineEncoder enc(c);
    EncoderBenchRow row;
    row.encoder = kind == BaselineKind::Fourier ? "fourier" : "relu";
    row.feature_dim = enc.feature_dim();
    row.nnz_bound = -1;
    row.density_bound = -1.0;
    bench(row, [&](const DenseVector& x) {
      const DenseVector v = enc.encode_dense(x);
      return static_cast<int>((v.array() != 0.0).count());
    });
  }

  std::ostringstream out;
  out << "encoder,feature_dim,samples,max_nnz,mean_nnz,max_density,nnz_bound,density_bound,within_bounds\n";
  for (const auto& r : rows) {
    out << r.encoder << "," << r.feature_dim << "," << r.samples << "," << r.max_nnz << "," << fmt_double(r.mean_nnz)
        << "," << fmt_double(r.max_density) << "," << r.nnz_bound << "," << fmt_double(r.density_bound) << ","
        << (r.within_bounds ? 1 : 0) << "\n";
  }
  write_text(opt.out / "encoder_bench.csv", out.str());
  write_manifest(opt.out, "encoder-bench", cfg);
  return rows;
}

// --------------------------------------------------------------------- dyna

DynaResult run_dyna_arm(const json& cfg, const std::string& arm, std::uint64_t seed) {
  if (arm != "dyna" && arm != "model_free") throw ConfigError("unknown arm '" + arm + "'");
  const auto env = make_environment(cfg.at("environment").get<std::string>());
  DynaConfig dc;
  from_json(cfg.at("dyna"), dc);
  dc.seed = seed;
  if (arm == "model_free") {
    dc.planning_steps = 0;
    dc.learning_steps = 0;
  }
  QAgentConfig ac;
  from_json(cfg.at("agent"), ac);
  ac.seed = derive_seed(seed, 20);
  ac.encoder.seed = derive_seed(seed, 21);
  const double fraction = cfg.at("epsilon_decay_fraction").get<double>();
  if (fraction > 0.0) {
    ac.epsilon_decay_steps = static_cast<std::uint64_t>(std::llround(fraction * static_cast<double>(dc.budget())));
  }
  WorldModelConfig mc;
  from_json(cfg.at("model"), mc);
  mc.encoder.seed = derive_seed(seed, 22);

  QAgent agent(env->spec(), ac);
  WorldModel model(env->spec(), mc);
  return run_dyna(*env, agent, model, dc);
}

namespace {

std::string metrics_csv(const std::string& arm, std::uint64_t seed, const DynaResult& r) {
  std::ostringstream out;
  out << "arm,seed,step,episode,return,normalized,model_error_fraction\n";
  for (const auto& e : r.episodes) {
    out << arm << "," << seed << "," << e.step << "," << e.episode << "," << fmt_double(e.ret) << ","
        << fmt_double(e.normalized) << "," << fmt_double(e.model_error_fraction) << "\n";
  }
  return out.str();
}

std::string timing_csv(const std::string& arm, std::uint64_t seed, const DynaResult& r) {
  std::ostringstream out;
  out << "arm,seed,step,seconds_per_update,cumulative_seconds\n";
  for (const auto& t : r.timing) {
    out << arm << "," << seed << "," << t.step << "," << fmt_double(t.seconds_per_update) << ","
        << fmt_double(t.cumulative_seconds) << "\n";
  }
  return out.str();
}

std::string run_name(const std::string& arm, std::uint64_t seed) { return arm + "_seed" + std::to_string(seed) + ".csv"; }

}  // namespace

DynaReport run_dyna_cmd(const json& cfg, const RunOptions& opt) {
  const auto seeds = config_seeds(cfg);
  const auto arms = cfg.at("arms").get<std::vector<std::string>>();
  if (arms.empty()) throw ConfigError("dyna: arms must be nonempty");
  for (const auto& a : arms) {
    if (a != "dyna" && a != "model_free") throw ConfigError("unknown arm '" + a + "'");
  }
  // Validate before any run starts.
  {
    DynaConfig dc;
    from_json(cfg.at("dyna"), dc);
    dc.validate();
    (void)make_environment(cfg.at("environment").get<std::string>());
  }
  const bool timing = cfg.at("record_timing").get<bool>();

  struct Summary {
    double normalized, ret, error_fraction;
    std::uint64_t skipped;
  };
  const std::size_t jobs = arms.size() * seeds.size();
  std::vector<Summary> summaries(jobs);
  parallel_for(jobs, opt.workers, [&](std::size_t i) {
    const auto& arm = arms[i / seeds.size()];
    const auto seed = seeds[i % seeds.size()];
    const DynaResult r = run_dyna_arm(cfg, arm, seed);
    write_text(opt.out / "runs" / run_name(arm, seed), metrics_csv(arm, seed, r));
    write_text(opt.out / "error_maps" / run_name(arm, seed), r.final_error_map.to_csv());
    if (timing) write_text(opt.out / "timing" / run_name(arm, seed), timing_csv(arm, seed, r));
    summaries[i] = {r.final_normalized, r.final_return, r.final_error_fraction, r.skipped_rollouts};
    progress(opt, "dyna " + arm + " seed=" + std::to_string(seed) + " normalized=" + fmt_double(r.final_normalized) +
                      " error_fraction=" + fmt_double(r.final_error_fraction));
  });

  DynaReport report;
  std::ostringstream per_run, agg;
  per_run << "arm,seed,final_return,final_normalized,final_error_fraction,skipped_rollouts\n";
  agg << "arm,normalized_mean,normalized_stderr,error_fraction_mean,error_fraction_stderr,runs\n";
  for (std::size_t ai = 0; ai < arms.size(); ++ai) {
    DynaArmSummary s;
    s.arm = arms[ai];
    std::vector<double> errs;
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      const auto& r = summaries[ai * seeds.size() + si];
      s.runs.push_back(r.normalized);
      errs.push_back(r.error_fraction);
      per_run << s.arm << "," << seeds[si] << "," << fmt_double(r.ret) << "," << fmt_double(r.normalized) << ","
              << fmt_double(r.error_fraction) << "," << r.skipped << "\n";
    }
    s.normalized = mean_stderr(s.runs);
    s.error_fraction = mean_stderr(errs);
    agg << s.arm << "," << fmt_double(s.normalized.mean) << "," << fmt_double(s.normalized.stderr_) << ","
        << fmt_double(s.error_fraction.mean) << "," << fmt_double(s.error_fraction.stderr_) << "," << seeds.size()
        << "\n";
    report.arms.push_back(std::move(s));
  }
  write_text(opt.out / "dyna_summary.csv", per_run.str());
  write_text(opt.out / "dyna.csv", agg.str());

  std::vector<CsvTable> metrics, timings;
  for (const auto& arm : arms) {
    for (auto seed : seeds) {
      metrics.push_back(read_csv(opt.out / "runs" / run_name(arm, seed)));
      if (timing) timings.push_back(read_csv(opt.out / "timing" / run_name(arm, seed)));
    }
  }
  PlotOptions po;
  po.title = cfg.at("environment").get<std::string>() + ": normalized return";
  write_text(opt.out / "learning_curves.svg", plot_learning_curves(metrics, po));
  if (timing) {
    po.title = cfg.at("environment").get<std::string>() + ": return vs wall clock";
    write_text(opt.out / "timing" / "wallclock.svg", plot_wallclock(metrics, timings, po));
  }
  write_manifest(opt.out, "dyna", cfg);
  return report;
}

// --------------------------------------------------------------------- plot

namespace {

struct Series {
  std::string name;
  std::vector<double> x, mean, lo, hi;
};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string render_svg(const std::vector<Series>& series, const PlotOptions& opt, const std::string& xlabel,
                       const std::string& ylabel) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.mean[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.lo[i]);
      y1 = std::max(y1, s.hi[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
  if (x1 <= x0) x1 = x0 + 1.0;
  if (y1 <= y0) y1 = y0 + 1.0;
  const double ml = 60, mr = 20, mt = 30, mb = 45;
  const double pw = opt.width - ml - mr, ph = opt.height - mt - mb;
  auto px = [&](double x) { return fmt_fixed(ml + (x - x0) / (x1 - x0) * pw, 2); };
  auto py = [&](double y) { return fmt_fixed(mt + (1.0 - (y - y0) / (y1 - y0)) * ph, 2); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt_fixed(opt.width, 0) << "\" height=\""
    << fmt_fixed(opt.height, 0) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << fmt_fixed(opt.width / 2, 1) << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">"
    << opt.title << "</text>\n";
  o << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << fmt_fixed(pw, 2) << "\" height=\"" << fmt_fixed(ph, 2)
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
    o << "<text x=\"" << px(xv) << "\" y=\"" << fmt_fixed(mt + ph + 15, 2) << "\" text-anchor=\"middle\">"
      << fmt_fixed(xv, xv >= 100 ? 0 : 2) << "</text>\n";
    o << "<text x=\"" << fmt_fixed(ml - 5, 2) << "\" y=\"" << py(yv) << "\" text-anchor=\"end\">" << fmt_fixed(yv, 2)
      << "</text>\n";
  }
  o << "<text x=\"" << fmt_fixed(ml + pw / 2, 2) << "\" y=\"" << fmt_fixed(opt.height - 8, 2)
    << "\" text-anchor=\"middle\">" << xlabel << "</text>\n";
  o << "<text x=\"14\" y=\"" << fmt_fixed(mt + ph / 2, 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
    << fmt_fixed(mt + ph / 2, 2) << ")\">" << ylabel << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kPalette[si % std::size(kPalette)];
    std::ostringstream band, line;
    std::vector<std::size_t> ok;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (std::isfinite(s.mean[i])) ok.push_back(i);
    }
    for (auto i : ok) band << px(s.x[i]) << "," << py(s.hi[i]) << " ";
    for (auto it = ok.rbegin(); it != ok.rend(); ++it) band << px(s.x[*it]) << "," << py(s.lo[*it]) << " ";
    for (auto i : ok) line << px(s.x[i]) << "," << py(s.mean[i]) << " ";
    o << "<polygon points=\"" << band.str() << "\" fill=\"" << color << "\" fill-opacity=\"0.25\" stroke=\"none\"/>\n";
    o << "<polyline points=\"" << line.str() << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
    o << "<text x=\"" << fmt_fixed(ml + 10, 2) << "\" y=\"" << fmt_fixed(mt + 15 + 14 * si, 2) << "\" fill=\"" << color
      << "\">" << s.name << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

// Per run: the normalized return of the latest finished episode at the end of
// each step bin (NaN before the first episode).
std::vector<double> binned_run(const CsvTable& t, double max_step, int bins) {
  std::vector<double> out(static_cast<std::size_t>(bins), std::numeric_limits<double>::quiet_NaN());
  std::size_t r = 0;
  double last = std::numeric_limits<double>::quiet_NaN();
  for (int b = 0; b < bins; ++b) {
    const double edge = max_step * (b + 1) / bins;
    double sum = 0.0;
    int count = 0;
    while (r < t.rows.size() && t.number(r, "step") <= edge) {
      sum += t.number(r, "normalized");
      ++count;
      ++r;
    }
    if (count > 0) last = sum / count;
    out[static_cast<std::size_t>(b)] = last;
  }
  return out;
}

std::vector<std::string> arm_order(const std::vector<CsvTable>& runs) {
  std::vector<std::string> arms;
  for (const auto& t : runs) {
    const std::string arm = t.rows.empty() ? std::string("run") : t.rows.front().at(t.column("arm"));
    if (std::find(arms.begin(), arms.end(), arm) == arms.end()) arms.push_back(arm);
  }
  return arms;
}

std::string arm_of(const CsvTable& t) { return t.rows.empty() ? std::string("run") : t.rows.front().at(t.column("arm")); }

}  // namespace

std::string plot_learning_curves(const std::vector<CsvTable>& runs, const PlotOptions& opt) {
  if (opt.bins <= 0) throw ConfigError("plot: bins must be positive");
  double max_step = 0.0;
  for (const auto& t : runs) {
    (void)t.column("arm");
    for (std::size_t r = 0; r < t.rows.size(); ++r) max_step = std::max(max_step, t.number(r, "step"));
  }
  if (max_step <= 0.0) max_step = 1.0;
  std::vector<Series> series;
  for (const auto& arm : arm_order(runs)) {
    std::vector<std::vector<double>> curves;
    for (const auto& t : runs) {
      if (arm_of(t) == arm) curves.push_back(binned_run(t, max_step, opt.bins));
    }
    Series s;
    s.name = arm + " (n=" + std::to_string(curves.size()) + ")";
    for (int b = 0; b < opt.bins; ++b) {
      std::vector<double> xs;
      for (const auto& c : curves) {
        if (std::isfinite(c[static_cast<std::size_t>(b)])) xs.push_back(c[static_cast<std::size_t>(b)]);
      }
      const double nan = std::numeric_limits<double>::quiet_NaN();
      const MeanStderr m = xs.empty() ? MeanStderr{nan, nan} : mean_stderr(xs);
      s.x.push_back(max_step * (b + 1) / opt.bins);
      s.mean.push_back(m.mean);
      s.lo.push_back(m.mean - m.stderr_);
      s.hi.push_back(m.mean + m.stderr_);
    }
    series.push_back(std::move(s));
  }
  return render_svg(series, opt, "environment steps", "normalized return");
}

std::string plot_wallclock(const std::vector<CsvTable>& metrics, const std::vector<CsvTable>& timing,
                           const PlotOptions& opt) {
  if (metrics.size() != timing.size()) throw ConfigError("plot: every metrics file needs a timing file");
  double max_step = 0.0;
  for (const auto& t : metrics) {
    for (std::size_t r = 0; r < t.rows.size(); ++r) max_step = std::max(max_step, t.number(r, "step"));
  }
  if (max_step <= 0.0) max_step = 1.0;
  // Cumulative seconds at a step, interpolated from the timing records.
  auto seconds_at = [](const CsvTable& t, double step) {
    double ps = 0.0, pt = 0.0;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const double s = t.number(r, "step"), c = t.number(r, "cumulative_seconds");
      if (s >= step) return s == ps ? c : pt + (c - pt) * (step - ps) / (s - ps);
      ps = s;
      pt = c;
    }
    return pt;
  };
  std::vector<Series> series;
  for (const auto& arm : arm_order(metrics)) {
    std::vector<std::vector<double>> curves, secs;
    for (std::size_t i = 0; i < metrics.size(); ++i) {
      if (arm_of(metrics[i]) != arm) continue;
      curves.push_back(binned_run(metrics[i], max_step, opt.bins));
      std::vector<double> sc;
      for (int b = 0; b < opt.bins; ++b) sc.push_back(seconds_at(timing[i], max_step * (b + 1) / opt.bins));
      secs.push_back(std::move(sc));
    }
    Series s;
    s.name = arm;
    for (int b = 0; b < opt.bins; ++b) {
      std::vector<double> xs, ts;
      for (std::size_t c = 0; c < curves.size(); ++c) {
        ts.push_back(secs[c][static_cast<std::size_t>(b)]);
        if (std::isfinite(curves[c][static_cast<std::size_t>(b)])) xs.push_back(curves[c][static_cast<std::size_t>(b)]);
      }
      const double nan = std::numeric_limits<double>::quiet_NaN();
      const MeanStderr m = xs.empty() ? MeanStderr{nan, nan} : mean_stderr(xs);
      s.x.push_back(mean_stderr(ts).mean);
      s.mean.push_back(m.mean);
      s.lo.push_back(m.mean - m.stderr_);
      s.hi.push_back(m.mean + m.stderr_);
    }
    series.push_back(std::move(s));
  }
  return render_svg(series, opt, "wall-clock seconds", "normalized return");
}

}  // namespace losse
