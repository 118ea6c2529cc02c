#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <json.hpp>
#include <utility>
#include <variant>

#include "losse/sparse_vector.hpp"

namespace losse {

// How the two neighbouring edges of a projected coordinate are weighted.
//  Interpolation: weight of an edge is one minus the normalized distance to
//                 it (linear interpolation, continuous in the input).
//  EdgeDistance: weight of an edge is the normalized distance to it; the
//                value 1.7 over edges {0,1,2,3} becomes [0, 0.7, 0.3, 0].
enum class BinMode { Interpolation, EdgeDistance };

struct LosseConfig {
  int input_dim = 1;
  int kappa = 1;   // number of grids
  int rho = 1;     // grid dimensionality
  int lambda = 2;  // edges per axis
  double input_bound = 3.0;
  double bin_lo = -3.0;
  double bin_hi = 3.0;
  BinMode bin_mode = BinMode::Interpolation;
  std::uint64_t seed = 0;

  // Throws ConfigError when an invariant is violated.
  void validate() const;

  int feature_dim() const;        // kappa * lambda^rho
  int cells_per_grid() const;     // lambda^rho
  int max_nonzeros() const;       // kappa * 2^rho
  int projected_dim() const { return kappa * rho; }

  friend bool operator==(const LosseConfig&, const LosseConfig&) = default;
};

void to_json(nlohmann::json& j, const LosseConfig& c);
void from_json(const nlohmann::json& j, LosseConfig& c);

// Stable 64-bit fingerprint of a config, used to tag learner snapshots.
std::uint64_t config_hash(const LosseConfig& c);

struct AxisBin {
  int left_index = 0;
  double left_value = 0.0;
  double right_value = 0.0;
};

// Soft-bins one coordinate against `edges` evenly spaced edges spanning
// [lo, hi]. Values outside the span are clamped to it. Throws ValueError on
// NaN.
AxisBin soft_bin_axis(double v, int edges, double lo, double hi, BinMode mode);

DenseVector clamp_input(const DenseVector& x, double bound);

// Locality sensitive sparse encoder: a frozen Gaussian random projection
// followed by soft binning of each rho-dimensional block of the projection
// into its own lambda^rho lattice. The lattice outputs are flattened and
// stacked grid after grid.
class LosseEncoder {
 public:
  explicit LosseEncoder(const LosseConfig& config);

  // Uses the given projection instead of sampling one; its shape must be
  // (kappa * rho) x input_dim.
  LosseEncoder(const LosseConfig& config, Eigen::MatrixXd projection);

  const LosseConfig& config() const { return config_; }
  const Eigen::MatrixXd& projection() const { return projection_; }
  int feature_dim() const { return feature_dim_; }
  int input_dim() const { return config_.input_dim; }

  DenseVector project(const DenseVector& x) const;

  // Encodes x as given; callers are expected to have clamped it.
  SparseVector encode(const DenseVector& x) const;

  // clamp_input followed by encode.
  SparseVector encode_clamped(const DenseVector& x) const;

 private:
  LosseConfig config_;
  Eigen::MatrixXd projection_;
  int feature_dim_;
  int cells_per_grid_;
};

enum class BaselineKind { Fourier, Relu, TileCode };

struct BaselineEncoderConfig {
  BaselineKind kind = BaselineKind::Fourier;
  int input_dim = 1;
  // Fourier / ReLU: number of random features.
  int output_dim = 1;
  // Standard deviation of the Fourier / ReLU projection entries.
  double projection_scale = 1.0;
  // TileCode geometry: `tilings` grids of dimension `tile_rho` with
  // `tile_bins` bins per axis over [bin_lo, bin_hi].
  int tilings = 1;
  int tile_rho = 1;
  int tile_bins = 2;
  double bin_lo = -3.0;
  double bin_hi = 3.0;
  std::uint64_t seed = 0;

  void validate() const;
  int feature_dim() const;
};

void to_json(nlohmann::json& j, const BaselineEncoderConfig& c);
void from_json(const nlohmann::json& j, BaselineEncoderConfig& c);

using Encoding = std::variant<SparseVector, DenseVector>;

// Random Fourier features cos(Px + b), random ReLU features max(0, Px + b) and
// random tile coding (one-hot cell per projected grid).
class BaselineEncoder {
 public:
  explicit BaselineEncoder(const BaselineEncoderConfig& config);
  BaselineEncoder(const BaselineEncoderConfig& config, Eigen::MatrixXd projection,
                  Eigen::VectorXd offset);

  const BaselineEncoderConfig& config() const { return config_; }
  int feature_dim() const { return config_.feature_dim(); }
  bool is_sparse() const { return config_.kind == BaselineKind::TileCode; }

  // TileCode yields a SparseVector, the dense kinds a DenseVector.
  Encoding encode(const DenseVector& x) const;
  DenseVector encode_dense(const DenseVector& x) const;

 private:
  SparseVector encode_tiles(const DenseVector& x) const;

  BaselineEncoderConfig config_;
  Eigen::MatrixXd projection_;
  Eigen::VectorXd offset_;
};

}  // namespace losse
