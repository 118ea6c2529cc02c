#include "losse/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "losse/errors.hpp"
#include "losse/rng.hpp"

namespace losse {

namespace {

long long int_pow(long long base, int exp) {
  long long out = 1;
  for (int i = 0; i < exp; ++i) {
    out *= base;
    if (out > std::numeric_limits<int>::max()) return -1;
  }
  return out;
}

void check_input(const DenseVector& x, int input_dim) {
  if (x.size() != input_dim) {
    throw ShapeError("encoder expects input of length " + std::to_string(input_dim) +
                     ", got " + std::to_string(x.size()));
  }
}

}  // namespace

void LosseConfig::validate() const {
  if (input_dim <= 0) throw ConfigError("losse: input_dim must be positive");
  if (kappa <= 0) throw ConfigError("losse: kappa must be positive");
  if (rho <= 0) throw ConfigError("losse: rho must be positive");
  if (rho > 16) throw ConfigError("losse: rho above 16 is not supported");
  if (lambda < 2) throw ConfigError("losse: lambda must be at least 2");
  if (!(input_bound > 0.0) || !std::isfinite(input_bound)) {
    throw ConfigError("losse: input_bound must be positive and finite");
  }
  if (!std::isfinite(bin_lo) || !std::isfinite(bin_hi) || !(bin_lo < bin_hi)) {
    throw ConfigError("losse: bin range requires finite lo < hi");
  }
  const long long cells = int_pow(lambda, rho);
  if (cells < 0 || cells * kappa > std::numeric_limits<int>::max()) {
    throw ConfigError("losse: feature dimension kappa * lambda^rho overflows");
  }
}

int LosseConfig::cells_per_grid() const { return static_cast<int>(int_pow(lambda, rho)); }

int LosseConfig::feature_dim() const { return kappa * cells_per_grid(); }

int LosseConfig::max_nonzeros() const { return kappa * (1 << rho); }

void to_json(nlohmann::json& j, const LosseConfig& c) {
  j = nlohmann::json{{"input_dim", c.input_dim},
                     {"kappa", c.kappa},
                     {"rho", c.rho},
                     {"lambda", c.lambda},
                     {"input_bound", c.input_bound},
                     {"bin_range", {c.bin_lo, c.bin_hi}},
                     {"bin_mode", c.bin_mode == BinMode::Interpolation ? "interpolation"
                                                                       : "edge_distance"},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, LosseConfig& c) {
  c.input_dim = j.value("input_dim", c.input_dim);
  c.kappa = j.value("kappa", c.kappa);
  c.rho = j.value("rho", c.rho);
  c.lambda = j.value("lambda", c.lambda);
  c.input_bound = j.value("input_bound", c.input_bound);
  if (j.contains("bin_range")) {
    const auto& r = j.at("bin_range");
    if (!r.is_array() || r.size() != 2) throw ConfigError("losse: bin_range must be [lo, hi]");
    c.bin_lo = r[0].get<double>();
    c.bin_hi = r[1].get<double>();
  }
  if (j.contains("bin_mode")) {
    const auto mode = j.at("bin_mode").get<std::string>();
    if (mode == "interpolation") {
      c.bin_mode = BinMode::Interpolation;
    } else if (mode == "edge_distance") {
      c.bin_mode = BinMode::EdgeDistance;
    } else {
      throw ConfigError("losse: unknown bin_mode '" + mode + "'");
    }
  }
  c.seed = j.value("seed", c.seed);
}

std::uint64_t config_hash(const LosseConfig& c) {
  const std::string text = nlohmann::json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

AxisBin soft_bin_axis(double v, int edges, double lo, double hi, BinMode mode) {
  if (std::isnan(v)) throw ValueError("soft_bin_axis: NaN input");
  if (edges < 2) throw ConfigError("soft_bin_axis: need at least two edges");
  const double spacing = (hi - lo) / (edges - 1);
  v = std::clamp(v, lo, hi);
  const double pos = (v - lo) / spacing;
  int left = static_cast<int>(std::floor(pos));
  left = std::clamp(left, 0, edges - 2);
  // Normalized distance from the left edge, in [0, 1].
  const double frac = std::clamp(pos - left, 0.0, 1.0);
  AxisBin out;
  out.left_index = left;
  if (mode == BinMode::Interpolation) {
    out.left_value = 1.0 - frac;
    out.right_value = frac;
  } else {
    out.left_value = frac;
    out.right_value = 1.0 - frac;
  }
  return out;
}

DenseVector clamp_input(const DenseVector& x, double bound) {
  return x.cwiseMax(-bound).cwiseMin(bound);
}

LosseEncoder::LosseEncoder(const LosseConfig& config) : config_(config) {
  config_.validate();
  feature_dim_ = config_.feature_dim();
  cells_per_grid_ = config_.cells_per_grid();
  const double stddev = 1.0 / std::sqrt(static_cast<double>(config_.input_dim));
  Rng rng(config_.seed);
  projection_.resize(config_.projected_dim(), config_.input_dim);
  for (Eigen::Index r = 0; r < projection_.rows(); ++r) {
    for (Eigen::Index c = 0; c < projection_.cols(); ++c) projection_(r, c) = rng.normal(0.0, stddev);
  }
}

LosseEncoder::LosseEncoder(const LosseConfig& config, Eigen::MatrixXd projection)
    : config_(config), projection_(std::move(projection)) {
  config_.validate();
  if (projection_.rows() != config_.projected_dim() || projection_.cols() != config_.input_dim) {
    throw ShapeError("losse: projection must be (kappa*rho) x input_dim");
  }
  feature_dim_ = config_.feature_dim();
  cells_per_grid_ = config_.cells_per_grid();
}

DenseVector LosseEncoder::project(const DenseVector& x) const {
  check_input(x, config_.input_dim);
  return projection_ * x;
}

SparseVector LosseEncoder::encode(const DenseVector& x) const {
  const DenseVector z = project(x);
  const int rho = config_.rho;
  const int lambda = config_.lambda;
  const int corners = 1 << rho;

  SparseVector out;
  out.dim = feature_dim_;
  out.indices.reserve(static_cast<std::size_t>(config_.kappa) * corners);
  out.values.reserve(static_cast<std::size_t>(config_.kappa) * corners);

  AxisBin bins[16];
  int stride[16];
  for (int j = rho - 1, s = 1; j >= 0; --j, s *= lambda) stride[j] = s;

  for (int g = 0; g < config_.kappa; ++g) {
    for (int j = 0; j < rho; ++j) {
      bins[j] = soft_bin_axis(z[g * rho + j], lambda, config_.bin_lo, config_.bin_hi,
                              config_.bin_mode);
    }
    const int offset = g * cells_per_grid_;
    // Axis 0 is the most significant digit of the flattened cell index, so
    // enumerating corner masks in order yields increasing indices.
    for (int mask = 0; mask < corners; ++mask) {
      int index = offset;
      double value = 1.0;
      for (int j = 0; j < rho; ++j) {
        const bool right = (mask >> (rho - 1 - j)) & 1;
        index += (bins[j].left_index + (right ? 1 : 0)) * stride[j];
        value *= right ? bins[j].right_value : bins[j].left_value;
      }
      if (value != 0.0) {
        out.indices.push_back(index);
        out.values.push_back(value);
      }
    }
  }
  return out;
}

SparseVector LosseEncoder::encode_clamped(const DenseVector& x) const {
  return encode(clamp_input(x, config_.input_bound));
}

void BaselineEncoderConfig::validate() const {
  if (input_dim <= 0) throw ConfigError("baseline encoder: input_dim must be positive");
  if (!(projection_scale > 0.0)) throw ConfigError("baseline encoder: projection_scale must be positive");
  if (kind == BaselineKind::TileCode) {
    if (tilings <= 0 || tile_rho <= 0 || tile_bins <= 0) {
      throw ConfigError("tile coder: tilings, tile_rho and tile_bins must be positive");
    }
    if (!(bin_lo < bin_hi)) throw ConfigError("tile coder: bin range requires lo < hi");
    const long long cells = int_pow(tile_bins, tile_rho);
    if (cells < 0 || cells * tilings > std::numeric_limits<int>::max()) {
      throw ConfigError("tile coder: feature dimension overflows");
    }
  } else if (output_dim <= 0) {
    throw ConfigError("baseline encoder: output_dim must be positive");
  }
}

int BaselineEncoderConfig::feature_dim() const {
  if (kind == BaselineKind::TileCode) return tilings * static_cast<int>(int_pow(tile_bins, tile_rho));
  return output_dim;
}

namespace {

const char* kind_name(BaselineKind k) {
  switch (k) {
    case BaselineKind::Fourier:
      return "fourier";
    case BaselineKind::Relu:
      return "relu";
    case BaselineKind::TileCode:
      return "tile_code";
  }
  return "";
}

}  // namespace

void to_json(nlohmann::json& j, const BaselineEncoderConfig& c) {
  j = nlohmann::json{{"kind", kind_name(c.kind)},
                     {"input_dim", c.input_dim},
                     {"output_dim", c.output_dim},
                     {"projection_scale", c.projection_scale},
                     {"tilings", c.tilings},
                     {"tile_rho", c.tile_rho},
                     {"tile_bins", c.tile_bins},
                     {"bin_range", {c.bin_lo, c.bin_hi}},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, BaselineEncoderConfig& c) {
  if (j.contains("kind")) {
    const auto k = j.at("kind").get<std::string>();
    if (k == "fourier") {
      c.kind = BaselineKind::Fourier;
    } else if (k == "relu") {
      c.kind = BaselineKind::Relu;
    } else if (k == "tile_code") {
      c.kind = BaselineKind::TileCode;
    } else {
      throw ConfigError("baseline encoder: unknown kind '" + k + "'");
    }
  }
  c.input_dim = j.value("input_dim", c.input_dim);
  c.output_dim = j.value("output_dim", c.output_dim);
  c.projection_scale = j.value("projection_scale", c.projection_scale);
  c.tilings = j.value("tilings", c.tilings);
  c.tile_rho = j.value("tile_rho", c.tile_rho);
  c.tile_bins = j.value("tile_bins", c.tile_bins);
  if (j.contains("bin_range")) {
    c.bin_lo = j.at("bin_range")[0].get<double>();
    c.bin_hi = j.at("bin_range")[1].get<double>();
  }
  c.seed = j.value("seed", c.seed);
}

BaselineEncoder::BaselineEncoder(const BaselineEncoderConfig& config) : config_(config) {
  config_.validate();
  Rng rng(config_.seed);
  const bool tiles = config_.kind == BaselineKind::TileCode;
  const int rows = tiles ? config_.tilings * config_.tile_rho : config_.output_dim;
  const double stddev = tiles ? config_.projection_scale / std::sqrt(double(config_.input_dim))
                              : config_.projection_scale;
  projection_.resize(rows, config_.input_dim);
  for (Eigen::Index r = 0; r < projection_.rows(); ++r) {
    for (Eigen::Index c = 0; c < projection_.cols(); ++c) projection_(r, c) = rng.normal(0.0, stddev);
  }
  offset_.resize(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    switch (config_.kind) {
      case BaselineKind::Fourier:
        offset_[r] = rng.uniform(0.0, 2.0 * std::numbers::pi);
        break;
      case BaselineKind::Relu:
        offset_[r] = rng.normal(0.0, config_.projection_scale);
        break;
      case BaselineKind::TileCode:
        // Random tiling displacement within one bin.
        offset_[r] = rng.uniform(0.0, (config_.bin_hi - config_.bin_lo) / config_.tile_bins);
        break;
    }
  }
}

BaselineEncoder::BaselineEncoder(const BaselineEncoderConfig& config, Eigen::MatrixXd projection,
                                 Eigen::VectorXd offset)
    : config_(config), projection_(std::move(projection)), offset_(std::move(offset)) {
  config_.validate();
  const int rows = config_.kind == BaselineKind::TileCode ? config_.tilings * config_.tile_rho
                                                          : config_.output_dim;
  if (projection_.rows() != rows || projection_.cols() != config_.input_dim ||
      offset_.size() != rows) {
    throw ShapeError("baseline encoder: projection/offset shape mismatch");
  }
}

SparseVector BaselineEncoder::encode_tiles(const DenseVector& x) const {
  const DenseVector z = projection_ * x + offset_;
  const int rho = config_.tile_rho;
  const int bins = config_.tile_bins;
  const int cells = static_cast<int>(int_pow(bins, rho));
  const double width = (config_.bin_hi - config_.bin_lo) / bins;
  SparseVector out;
  out.dim = feature_dim();
  out.indices.reserve(config_.tilings);
  out.values.assign(config_.tilings, 1.0);
  for (int g = 0; g < config_.tilings; ++g) {
    int index = 0;
    for (int j = 0; j < rho; ++j) {
      int cell = static_cast<int>(std::floor((z[g * rho + j] - config_.bin_lo) / width));
      index = index * bins + std::clamp(cell, 0, bins - 1);
    }
    out.indices.push_back(g * cells + index);
  }
  return out;
}

Encoding BaselineEncoder::encode(const DenseVector& x) const {
  check_input(x, config_.input_dim);
  if (config_.kind == BaselineKind::TileCode) return encode_tiles(x);
  return encode_dense(x);
}

DenseVector BaselineEncoder::encode_dense(const DenseVector& x) const {
  check_input(x, config_.input_dim);
  switch (config_.kind) {
    case BaselineKind::Fourier:
      return (projection_ * x + offset_).array().cos().matrix();
    case BaselineKind::Relu:
      return (projection_ * x + offset_).cwiseMax(0.0);
    case BaselineKind::TileCode:
      return encode_tiles(x).to_dense();
  }
  return {};
}

}  // namespace losse
