// relaxlab: run experiments from JSON configs, diff summaries, emit plot data.

#include "relaxlab/experiments.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <cstdlib>
#include <iostream>

namespace {

void apply_thread_cap() {
  const char* env = std::getenv("RELAXLAB_THREADS");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) {
    std::cerr << "ignoring RELAXLAB_THREADS='" << env << "': expected a positive integer\n";
    return;
  }
  omp_set_num_threads(static_cast<int>(std::min<long>(n, omp_get_max_threads())));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relaxlab: Ginzburg-Landau type relaxation of harmonic-map problems"};
  app.require_subcommand(1);

  std::string config;
  bool fast = false;
  std::string out_dir;
  auto* run = app.add_subcommand("run", "relax along the eps schedule and compute all diagnostics");
  run->add_option("config", config, "run configuration (JSON)")->required();
  run->add_flag("--fast", fast, "coarse grid and reduced time budget");
  run->add_option("--out", out_dir, "artifact directory (overrides output_dir)");

  std::string dir_a, dir_b;
  auto* cmp = app.add_subcommand("compare", "list summary entries that differ between two runs");
  cmp->add_option("A", dir_a, "first run directory")->required();
  cmp->add_option("B", dir_b, "second run directory")->required();

  std::string plot_dir;
  auto* plot = app.add_subcommand("plot", "write .dat and .svg charts from the CSV tables of a run");
  plot->add_option("DIR", plot_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  apply_thread_cap();

  if (*run) {
    relaxlab::RunOptions opts;
    opts.fast = fast;
    if (!out_dir.empty()) opts.out = out_dir;
    return relaxlab::run_command(config, opts);
  }

  if (*cmp) {
    try {
      const auto rows = relaxlab::compare(dir_a, dir_b);
      for (const auto& r : rows) std::cout << r.key << '\t' << r.a << '\t' << r.b << '\n';
      std::cerr << rows.size() << " differing entries\n";
      return rows.empty() ? 0 : 1;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 1;
    }
  }

  try {
    const auto res = relaxlab::emit_plot_data(plot_dir);
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
    for (const auto& f : res.files) std::cout << f.string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
