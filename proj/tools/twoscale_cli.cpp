#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "twoscale/error.hpp"
#include "twoscale/experiment.hpp"

// Command-line experiment runner.
//
//   twoscale run --dataset mnist --variant two-scale --variant single-scale
//       --eta 0.01 --seeds 0 1 2 --iterations 1000 --out runs/mnist
//   twoscale compare runs/mnist/single-scale_eta0.01_seed0_report.json
//       runs/mnist/two-scale_eta0.01_seed0_report.json
//
// `run` trains every (variant, eta, seed) cell and writes per-run CSV logs,
// per-run JSON reports, and a cross-seed summary.json. `compare` diffs two or
// more report files metric by metric.

int main(int argc, char** argv) {
  CLI::App app{"Two-scale loss experiment runner"};
  app.require_subcommand(1);

  twoscale::ExperimentConfig cfg;
  CLI::App* run = app.add_subcommand("run", "Train a (variant x eta x seed) matrix");
  twoscale::attach_run_options(*run, cfg);

  std::vector<std::string> report_paths;
  std::string compare_out;
  CLI::App* cmp = app.add_subcommand("compare", "Diff final reports (first is baseline)");
  cmp->add_option("reports", report_paths, "Two or more *_report.json files")
      ->required()
      ->expected(-2);
  cmp->add_option("--out", compare_out, "Write the CSV here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      if (cfg.variants.empty() || cfg.etas.empty() || cfg.seeds.empty()) {
        std::cerr << "usage error: variant, eta, and seed lists must be nonempty\n";
        return 2;
      }
      return twoscale::run_matrix(cfg);
    }
    std::vector<std::filesystem::path> paths(report_paths.begin(), report_paths.end());
    const std::string table = twoscale::compare_reports(paths);
    if (compare_out.empty()) {
      std::cout << table;
    } else {
      twoscale::detail::write_text_file(compare_out, table);
    }
    return 0;
  } catch (const twoscale::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
