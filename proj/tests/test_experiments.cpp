#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>

#include "losse/errors.hpp"
#include "losse/experiments.hpp"

using namespace losse;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("losse_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunOptions quiet(const fs::path& out, int workers = 1) {
  RunOptions o;
  o.out = out;
  o.workers = workers;
  return o;
}

json small(const std::string& kind, const std::vector<std::string>& sets) {
  return resolve_config(kind, json(), sets);
}

int cli(const std::string& args) {
  const std::string cmd = std::string(LOSSE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("overrides and config resolution") {
  json cfg = default_config("stream");
  apply_override(cfg, "encoder.kappa=3");
  apply_override(cfg, "seeds=[4,5]");
  apply_override(cfg, "note=plain text");
  apply_override(cfg, "a.b.c=1.5");
  CHECK(cfg["encoder"]["kappa"] == 3);
  CHECK(config_seeds(cfg) == std::vector<std::uint64_t>{4, 5});
  CHECK(cfg["note"] == "plain text");
  CHECK(cfg["a"]["b"]["c"] == 1.5);
  CHECK_THROWS_AS(apply_override(cfg, "novalue"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "a..b=1"), ConfigError);

  CHECK_THROWS_AS(default_config("nope"), ConfigError);
  CHECK_THROWS_AS(resolve_config("stream", json{{"bogus", 1}}, {}), ConfigError);
  CHECK_THROWS_AS(resolve_config("stream", json{{"kind", "dyna"}}, {}), ConfigError);
  CHECK_THROWS_AS(resolve_config("stream", json(), {"seeds=[]"}), ConfigError);
  CHECK_THROWS_AS(resolve_config("stream", json(), {"seeds=[-1]"}), ConfigError);
  CHECK_THROWS_AS(resolve_config("stream", json::array(), {}), ConfigError);

  // A manifest's config block is accepted as a config file.
  const json manifest = {{"version", kVersion}, {"kind", "stream"}, {"config", {{"stream_length", 77}}}};
  CHECK(resolve_config("stream", manifest, {})["stream_length"] == 77);
  CHECK(resolve_config("dyna", json(), {"dyna.epochs=9"})["dyna"]["epochs"] == 9);
}

TEST_CASE("csv parsing") {
  const CsvTable t = parse_csv("a,b\n1,2\r\n\n3,4\n");
  CHECK(t.header == std::vector<std::string>{"a", "b"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.number(1, "b") == 4.0);
  try {
    (void)parse_csv("a,b\n1,2\n3\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.position() == 3);
  }
  CHECK_THROWS_AS(parse_csv(""), ParseError);
  CHECK_THROWS_AS(parse_csv("\na"), ParseError);
  CHECK_THROWS_AS(t.column("c"), ParseError);
  const CsvTable bad = parse_csv("a\nx\n");
  try {
    (void)bad.number(0, "a");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.position() == 2);
  }
}

TEST_CASE("mean and standard error") {
  const MeanStderr m = mean_stderr({1.0, 2.0, 3.0, 4.0});
  CHECK(m.mean == 2.5);
  // sample sd sqrt(5/3), over sqrt(4)
  CHECK(m.stderr_ == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
  CHECK(mean_stderr({7.0}).stderr_ == 0.0);
}

TEST_CASE("stream experiment") {
  const fs::path out = scratch("stream");
  const json cfg = small("stream", {"seeds=[0,1]", "stream_length=400", "holdout=100"});
  const auto rows = run_stream(cfg, quiet(out));
  REQUIRE(rows.size() == 4);
  for (const auto& r : rows) {
    CHECK(r.ftl_runs.size() == 2);
    CHECK(std::isfinite(r.ftl.mean));
    CHECK(std::isfinite(r.sgd.mean));
  }
  const CsvTable t = read_csv(out / "stream.csv");
  CHECK(t.rows.size() == 4);
  CHECK(fs::exists(out / "manifest.json"));
  const json manifest = json::parse(read_text(out / "manifest.json"));
  CHECK(manifest["config"] == cfg);

  const fs::path again = scratch("stream_again");
  (void)run_stream(cfg, quiet(again, 2));
  CHECK(read_text(out / "stream.csv") == read_text(again / "stream.csv"));
  CHECK(read_text(out / "stream_runs.csv") == read_text(again / "stream_runs.csv"));
}

TEST_CASE("gd-vs-ftl experiment") {
  const fs::path out = scratch("gdftl");
  const json cfg = small("gd-vs-ftl", {"seeds=[0]", "stream_length=300", "holdout=50", "lambda_grid=[5,6,7]",
                                       "d_grid=[0.0,0.9]"});
  const auto rows = run_gd_vs_ftl(cfg, quiet(out));
  CHECK(rows.size() == 3 * 2 * 2);
  CHECK(read_csv(out / "gd_vs_ftl.csv").rows.size() == 12);
}

TEST_CASE("denoise experiment") {
  const fs::path out = scratch("denoise");
  const json cfg = small("denoise", {"seeds=[0]", "patch_sides=[3]", "synthetic_count=300", "dense.epochs=2",
                                     "losse.lambda_grid=[5,6]", "tile.bins_grid=[5]", "dense.scale_grid=[1.0]"});
  const auto rows = run_denoise(cfg, quiet(out));
  REQUIRE(rows.size() == 4);
  for (const auto& r : rows) {
    CHECK(r.patch == 9);
    CHECK(std::isfinite(r.mse.mean));
    CHECK(r.mse.mean >= 0.0);
  }
  RunOptions missing = quiet(out);
  missing.dataset_path = "/nonexistent/train-images.idx";
  const json strict = small("denoise", {"seeds=[0]", "patch_sides=[3]", "allow_fallback=false"});
  CHECK_THROWS_AS(run_denoise(strict, missing), IoError);
}

TEST_CASE("encoder bench") {
  const fs::path out = scratch("bench");
  const json cfg = small("encoder-bench", {"samples=500"});
  const auto rows = run_encoder_bench(cfg, quiet(out));
  REQUIRE(rows.size() >= 3);
  for (const auto& r : rows) {
    CHECK(r.within_bounds);
    if (r.nnz_bound >= 0) CHECK(r.max_nnz <= r.nnz_bound);
  }
  const std::string csv = read_text(out / "encoder_bench.csv");
  CHECK(csv.find("microseconds") == std::string::npos);
}

TEST_CASE("dyna experiment, plots and determinism") {
  const fs::path out = scratch("dyna");
  const json cfg = small("dyna", {"seeds=[0,1]", "dyna.epochs=150", "dyna.error_interval=200",
                                  "dyna.eval_episodes=2", "model.encoder.kappa=10"});
  const DynaReport report = run_dyna_cmd(cfg, quiet(out));
  REQUIRE(report.arms.size() == 2);
  CHECK(report.arms[0].arm == "dyna");
  CHECK(report.arms[1].arm == "model_free");
  CHECK(report.arms[0].runs.size() == 2);
  for (const char* f : {"dyna.csv", "dyna_summary.csv", "learning_curves.svg", "manifest.json",
                        "runs/dyna_seed0.csv", "runs/model_free_seed1.csv", "error_maps/dyna_seed1.csv",
                        "timing/dyna_seed0.csv", "timing/wallclock.svg"}) {
    CHECK_MESSAGE(fs::exists(out / f), f);
  }
  const std::string svg = read_text(out / "learning_curves.svg");
  std::size_t bands = 0;
  for (auto p = svg.find("<polygon"); p != std::string::npos; p = svg.find("<polygon", p + 1)) ++bands;
  CHECK(bands == 2);

  std::vector<CsvTable> runs;
  for (const char* f : {"runs/dyna_seed0.csv", "runs/dyna_seed1.csv", "runs/model_free_seed0.csv",
                        "runs/model_free_seed1.csv"}) {
    runs.push_back(read_csv(out / f));
  }
  PlotOptions po;
  po.title = "gridworld: normalized return";
  CHECK(plot_learning_curves(runs, po) == svg);
  po.bins = 0;
  CHECK_THROWS_AS(plot_learning_curves(runs, po), ConfigError);

  const fs::path again = scratch("dyna_again");
  (void)run_dyna_cmd(cfg, quiet(again, 2));
  for (const char* f : {"dyna.csv", "dyna_summary.csv", "learning_curves.svg", "runs/dyna_seed1.csv",
                        "error_maps/model_free_seed0.csv"}) {
    CHECK_MESSAGE(read_text(out / f) == read_text(again / f), f);
  }

  CHECK_THROWS_AS(run_dyna_cmd(small("dyna", {"arms=[\"planner\"]"}), quiet(out)), ConfigError);
  CHECK_THROWS_AS(run_dyna_cmd(small("dyna", {"environment=cartpole"}), quiet(out)), ConfigError);
  CHECK_THROWS_AS(run_dyna_cmd(small("dyna", {"dyna.epochs=0"}), quiet(out)), ConfigError);
}

TEST_CASE("parallel_for covers every index and rethrows") {
  std::vector<int> hits(100, 0);
  parallel_for(hits.size(), 3, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) CHECK(h == 1);
  CHECK_THROWS_AS(parallel_for(10, 2, [](std::size_t i) {
                    if (i == 5) throw ValueError("boom");
                  }),
                  ValueError);
}

TEST_CASE("cli exit codes") {
  const fs::path out = scratch("cli");
  CHECK(cli("--version") == 0);
  CHECK(cli("stream --print-config") == 0);
  CHECK(cli("stream --set seeds=[] --out " + out.string()) == 2);
  CHECK(cli("dyna --set environment=cartpole --out " + out.string()) == 2);
  write_text(out / "broken.json", "{ not json");
  CHECK(cli("stream --config " + (out / "broken.json").string()) == 3);
  write_text(out / "ragged.csv", "arm,seed,step,normalized\ndyna,0,1\n");
  CHECK(cli("plot " + (out / "ragged.csv").string() + " --out " + (out / "p.svg").string()) == 3);
  write_text(out / "ok.csv", "arm,seed,step,normalized\ndyna,0,1,0.5\ndyna,0,2,0.7\n");
  CHECK(cli("plot " + (out / "ok.csv").string() + " --out " + (out / "p.svg").string()) == 0);
  CHECK(fs::exists(out / "p.svg"));
  CHECK(cli("denoise --set allow_fallback=false --dataset-path /nonexistent.idx --set seeds=[0] --out " +
            out.string()) == 3);
  CHECK(cli("") != 0);
}
