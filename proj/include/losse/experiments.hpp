#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "losse/dyna.hpp"
#include "losse/encoding.hpp"
#include "losse/environments.hpp"

namespace losse {

inline constexpr const char* kVersion = "losse-ftl 0.1.0";

// ------------------------------------------------------------------ configs

// Defaults for one experiment kind: stream, denoise, encoder-bench,
// gd-vs-ftl or dyna. Throws ConfigError for an unknown kind.
nlohmann::json default_config(const std::string& kind);

// Sets a dotted key, e.g. "dyna.epochs=100" or "seeds=[1,2]". The value is
// parsed as JSON when possible and kept as a string otherwise.
void apply_override(nlohmann::json& cfg, const std::string& assignment);

// Defaults, then the user file (a plain config or a run manifest), then the
// overrides. Unknown top-level keys are rejected.
nlohmann::json resolve_config(const std::string& kind, const nlohmann::json& user,
                              const std::vector<std::string>& overrides);

std::vector<std::uint64_t> config_seeds(const nlohmann::json& cfg);

struct RunOptions {
  std::filesystem::path out = "runs";
  int workers = 0;  // 0: hardware concurrency
  std::optional<std::string> dataset_path;
  bool log_progress = false;
};

int effective_workers(int requested);

// Runs fn(0..n-1) on up to `workers` threads. Jobs are claimed in index order;
// the first exception is rethrown after all threads stop.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(effective_workers(workers)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------- csv

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Throws ParseError (line 1) when the column is missing.
  std::size_t column(const std::string& name) const;
  double number(std::size_t row, const std::string& name) const;
};

// Comma separated, no quoting. Throws ParseError carrying the 1-based line
// number on ragged rows or an empty header.
CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

// manifest.json: version, kind and the fully resolved config.
void write_manifest(const std::filesystem::path& dir, const std::string& kind, const nlohmann::json& cfg);

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
};
MeanStderr mean_stderr(const std::vector<double>& xs);

// ------------------------------------------------------------------- stream

struct PrwRunSettings {
  PrwConfig prw;
  LosseConfig encoder;
  double epsilon = 1e-6;
  int stream_length = 20000;
  int holdout = 500;
  bool sgd = true;
  double sgd_learning_rate = 0.05;
  int sgd_batch = 50;
  int oracle_interval = 0;  // 0: no oracle comparisons
  std::uint64_t holdout_seed = 0;
};

struct PrwRunResult {
  double ftl_mse = 0.0;
  double sgd_mse = 0.0;
  // Relative Frobenius distance to the batch solution at each checkpoint.
  std::vector<std::pair<int, double>> oracle_gaps;
  double max_oracle_gap = 0.0;
};

// One seeded pass of the piecewise random walk through Losse-FTL (and the
// mini-batch gradient baseline on the same features), then holdout MSE.
PrwRunResult run_prw(const PrwRunSettings& s);

// Settings for (d, seed) taken from a stream / gd-vs-ftl config.
PrwRunSettings prw_settings(const nlohmann::json& cfg, double d, std::uint64_t seed);

struct StreamRow {
  double d = 0.0;
  MeanStderr ftl, sgd;
  std::vector<double> ftl_runs, sgd_runs;
};

// Writes stream.csv (one row per d), stream_runs.csv and manifest.json.
std::vector<StreamRow> run_stream(const nlohmann::json& cfg, const RunOptions& opt);

struct GdVsFtlRow {
  int lambda = 0;
  std::string method;
  double d = 0.0;
  MeanStderr mse;
};

// Writes gd_vs_ftl.csv with lambda x method x d rows.
std::vector<GdVsFtlRow> run_gd_vs_ftl(const nlohmann::json& cfg, const RunOptions& opt);

// ------------------------------------------------------------------ denoise

struct DenoiseRow {
  int patch = 0;  // input dimension, patch_side^2
  std::string encoder;
  MeanStderr mse;
  std::string selected;  // chosen lambda or projection scale
};

// Writes denoise.csv and manifest.json. Throws IoError when a dataset path
// is given, missing and fallback is disabled.
std::vector<DenoiseRow> run_denoise(const nlohmann::json& cfg, const RunOptions& opt);

// ------------------------------------------------------------ encoder bench

struct EncoderBenchRow {
  std::string encoder;
  int feature_dim = 0;
  int samples = 0;
  int max_nnz = 0;
  double mean_nnz = 0.0;
  double max_density = 0.0;
  int nnz_bound = 0;          // -1 when the encoder has no guarantee
  double density_bound = 0.0; // -1 when the encoder has no guarantee
  bool within_bounds = true;
  double encode_microseconds = 0.0;  // reported on stdout only
};

// Writes encoder_bench.csv (no timing columns) and manifest.json.
std::vector<EncoderBenchRow> run_encoder_bench(const nlohmann::json& cfg, const RunOptions& opt);

// --------------------------------------------------------------------- dyna

struct DynaArmSummary {
  std::string arm;
  MeanStderr normalized;
  MeanStderr error_fraction;
  std::vector<double> runs;
};

struct DynaReport {
  std::vector<DynaArmSummary> arms;
};

// Builds the environment, agent and model for one (arm, seed) from a dyna
// config and runs it.
DynaResult run_dyna_arm(const nlohmann::json& cfg, const std::string& arm, std::uint64_t seed);

// Runs every (arm, seed), writing per-run metrics under runs/, error maps,
// timing under timing/ (wall clock, excluded from determinism checks),
// dyna_summary.csv, dyna.csv, the plots and manifest.json.
DynaReport run_dyna_cmd(const nlohmann::json& cfg, const RunOptions& opt);

// --------------------------------------------------------------------- plot

struct PlotOptions {
  std::string title = "normalized return";
  int bins = 50;
  double width = 640.0;
  double height = 400.0;
};

// Learning curves from per-run metrics CSVs (columns arm, seed, step,
// normalized): per arm, the mean over runs with a standard-error band.
std::string plot_learning_curves(const std::vector<CsvTable>& runs, const PlotOptions& opt);

// Return against cumulative wall-clock seconds. Each metrics table is paired
// with the timing table of the same run.
std::string plot_wallclock(const std::vector<CsvTable>& metrics, const std::vector<CsvTable>& timing,
                           const PlotOptions& opt);

}  // namespace losse
