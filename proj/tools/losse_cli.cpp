// Command-line front end for the experiments.

#include <CLI11.hpp>
#include <iostream>
#include <json.hpp>

#include "losse/errors.hpp"
#include "losse/experiments.hpp"
#include "losse/format.hpp"

namespace {

using nlohmann::json;

struct Common {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::string out = "runs";
  int workers = 0;
  std::string dataset_path;
  std::vector<std::string> sets;
  bool print_config = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config file or a run manifest")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seeds, "seed(s); replaces the config's seed list");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--workers", c.workers, "parallel workers (0: all cores)")->check(CLI::NonNegativeNumber);
  cmd->add_option("--dataset-path", c.dataset_path, "IDX image file for denoise");
  cmd->add_option("--set", c.sets, "override, e.g. --set dyna.epochs=100");
  cmd->add_flag("--print-config", c.print_config, "print the resolved config and exit");
  cmd->add_flag("--quiet", c.quiet, "no progress on stderr");
}

json load_config(const std::string& kind, const Common& c) {
  json user;
  if (!c.config.empty()) {
    const std::string text = losse::read_text(c.config);
    try {
      user = json::parse(text);
    } catch (const json::parse_error& e) {
      throw losse::ParseError(std::string("config: ") + e.what(), e.byte);
    }
  }
  std::vector<std::string> sets = c.sets;
  if (!c.seeds.empty()) sets.push_back("seeds=" + json(c.seeds).dump());
  return losse::resolve_config(kind, user, sets);
}

losse::RunOptions options(const Common& c) {
  losse::RunOptions o;
  o.out = c.out;
  o.workers = c.workers;
  if (!c.dataset_path.empty()) o.dataset_path = c.dataset_path;
  o.log_progress = !c.quiet;
  return o;
}

int run_kind(const std::string& kind, const Common& c) {
  const json cfg = load_config(kind, c);
  if (c.print_config) {
    std::cout << cfg.dump(2) << "\n";
    return 0;
  }
  const auto opt = options(c);
  using losse::fmt_double;
  if (kind == "stream") {
    for (const auto& r : losse::run_stream(cfg, opt)) {
      std::cout << "d=" << fmt_double(r.d) << "  ftl mse " << fmt_double(r.ftl.mean) << " +- "
                << fmt_double(r.ftl.stderr_) << "  sgd mse " << fmt_double(r.sgd.mean) << " +- "
                << fmt_double(r.sgd.stderr_) << "\n";
    }
  } else if (kind == "gd-vs-ftl") {
    for (const auto& r : losse::run_gd_vs_ftl(cfg, opt)) {
      std::cout << "lambda=" << r.lambda << " " << r.method << " d=" << fmt_double(r.d) << "  mse "
                << fmt_double(r.mse.mean) << " +- " << fmt_double(r.mse.stderr_) << "\n";
    }
  } else if (kind == "denoise") {
    for (const auto& r : losse::run_denoise(cfg, opt)) {
      std::cout << "patch " << r.patch << " " << r.encoder << "  mse " << fmt_double(r.mse.mean) << " +- "
                << fmt_double(r.mse.stderr_) << "  [" << r.selected << "]\n";
    }
  } else if (kind == "encoder-bench") {
    for (const auto& r : losse::run_encoder_bench(cfg, opt)) {
      std::cout << r.encoder << "  D=" << r.feature_dim << "  max nnz " << r.max_nnz << "  max density "
                << fmt_double(r.max_density) << (r.within_bounds ? "" : "  BOUND VIOLATED") << "  "
                << losse::fmt_fixed(r.encode_microseconds, 2) << " us/encode\n";
    }
  } else {
    for (const auto& a : losse::run_dyna_cmd(cfg, opt).arms) {
      std::cout << a.arm << "  normalized return " << fmt_double(a.normalized.mean) << " +- "
                << fmt_double(a.normalized.stderr_) << "  model error fraction " << fmt_double(a.error_fraction.mean)
                << "\n";
    }
  }
  std::cout << "wrote " << opt.out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse encoding + Follow-The-Leader online learning experiments"};
  app.set_version_flag("--version", losse::kVersion);
  app.require_subcommand(1);

  const std::vector<std::string> kinds = {"stream", "denoise", "encoder-bench", "gd-vs-ftl", "dyna"};
  std::map<std::string, Common> commons;
  std::map<std::string, CLI::App*> cmds;
  const std::map<std::string, std::string> help = {
      {"stream", "piecewise random walk stream learning"},
      {"denoise", "image denoising encoder comparison"},
      {"encoder-bench", "sparsity of the encoders"},
      {"gd-vs-ftl", "FTL vs mini-batch gradient descent across lambda"},
      {"dyna", "Dyna and model-free arms on a control task"}};
  for (const auto& k : kinds) {
    cmds[k] = app.add_subcommand(k, help.at(k));
    add_common(cmds[k], commons[k]);
  }

  std::vector<std::string> metrics, timing;
  std::string plot_out = "learning_curves.svg", title = "normalized return";
  int bins = 50;
  auto* plot = app.add_subcommand("plot", "SVG learning curves from per-run metrics CSVs");
  plot->add_option("metrics", metrics, "per-run metrics CSVs")->required()->check(CLI::ExistingFile);
  plot->add_option("--timing", timing, "matching timing CSVs; plots return against wall clock instead")
      ->check(CLI::ExistingFile);
  plot->add_option("--out", plot_out, "output SVG");
  plot->add_option("--title", title);
  plot->add_option("--bins", bins)->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    for (const auto& k : kinds) {
      if (*cmds[k]) return run_kind(k, commons[k]);
    }
    if (*plot) {
      std::vector<losse::CsvTable> m, t;
      for (const auto& f : metrics) {
        try {
          m.push_back(losse::read_csv(f));
        } catch (const losse::ParseError& e) {
          throw losse::ParseError(f + ": " + e.what(), e.position());
        }
      }
      for (const auto& f : timing) t.push_back(losse::read_csv(f));
      losse::PlotOptions po;
      po.title = title;
      po.bins = bins;
      losse::write_text(plot_out, t.empty() ? losse::plot_learning_curves(m, po) : losse::plot_wallclock(m, t, po));
      std::cout << "wrote " << plot_out << "\n";
    }
  } catch (const losse::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const losse::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 3;
  } catch (const losse::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
