#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "twoscale/dataset.hpp"
#include "twoscale/error.hpp"
#include "twoscale/loss.hpp"
#include "twoscale/metrics.hpp"
#include "twoscale/presets.hpp"
#include "twoscale/train.hpp"

// Experiment runner: expands a (variant x eta x seed) matrix into seeded
// training runs and writes their logs as CSV (time series) and JSON (final
// reports), plus a cross-seed summary. All file output is deterministic:
// rerunning the same configuration reproduces the bytes.

namespace twoscale {

enum class DatasetChoice { Mnist, Cifar10, Cifar100, Synthetic };

struct ExperimentConfig {
  DatasetChoice dataset = DatasetChoice::Synthetic;
  std::string data_dir;  // empty: $TWOSCALE_DATA_DIR, then ./data
  std::size_t hidden = 128;
  std::vector<LossKind> variants{LossKind::TwoScale};
  std::vector<double> etas{0.01};
  std::vector<std::uint64_t> seeds{0};
  double learning_rate = 0.1;
  std::size_t batch_size = 128;
  std::size_t iterations = 1000;
  std::size_t epochs = 0;  // 0 means the iteration count is used directly
  double scale_mult = 10.0;
  std::size_t eval_every = 100;
  double trunc_k = 0.1;
  double init_std = 0.0;
  bool branch_on_normalized = false;
  std::string out_dir = "runs";
  // synthetic-dataset shape
  std::size_t blob_classes = 4;
  std::size_t blob_per_class = 200;
  std::size_t blob_dim = 8;
  double blob_spread = 1.0;
  std::uint64_t blob_seed = 1;
};

inline const std::map<std::string, LossKind>& loss_kind_names() {
  static const std::map<std::string, LossKind> names = {
      {"vanilla-ce", LossKind::VanillaCE},
      {"single-scale", LossKind::SingleScale},
      {"two-scale", LossKind::TwoScale},
      {"fixed-two-scale", LossKind::FixedTwoScale},
      {"separation", LossKind::Separation},
      {"truncated", LossKind::Truncated},
  };
  return names;
}

inline const std::map<std::string, DatasetChoice>& dataset_names() {
  static const std::map<std::string, DatasetChoice> names = {
      {"mnist", DatasetChoice::Mnist},
      {"cifar10", DatasetChoice::Cifar10},
      {"cifar100", DatasetChoice::Cifar100},
      {"synthetic", DatasetChoice::Synthetic},
  };
  return names;
}

inline const char* dataset_name(DatasetChoice d) {
  switch (d) {
    case DatasetChoice::Mnist: return "mnist";
    case DatasetChoice::Cifar10: return "cifar10";
    case DatasetChoice::Cifar100: return "cifar100";
    case DatasetChoice::Synthetic: return "synthetic";
  }
  return "?";
}

// Registers every `run` flag on the app, bound into `cfg`.
inline void attach_run_options(CLI::App& app, ExperimentConfig& cfg) {
  app.add_option("--dataset", cfg.dataset, "Dataset: mnist, cifar10, cifar100, synthetic")
      ->transform(CLI::CheckedTransformer(dataset_names(), CLI::ignore_case));
  app.add_option("--data-dir", cfg.data_dir,
                 "Dataset root (default: $TWOSCALE_DATA_DIR, then ./data)");
  app.add_option("--variant", cfg.variants,
                 "Loss variant(s): vanilla-ce, single-scale, two-scale, fixed-two-scale, "
                 "separation, truncated (repeatable)")
      ->transform(CLI::CheckedTransformer(loss_kind_names(), CLI::ignore_case));
  app.add_option("--eta", cfg.etas, "Confidence threshold(s) eta > 0 (repeatable)");
  app.add_option("--seeds", cfg.seeds, "Run seed(s) (repeatable)");
  auto* iters = app.add_option("--iterations", cfg.iterations, "SGD steps per run");
  auto* epochs = app.add_option("--epochs", cfg.epochs,
                                "Epochs per run (ceil(#train/batch) steps each)");
  iters->excludes(epochs);
  epochs->excludes(iters);
  app.add_option("--batch-size", cfg.batch_size, "Objects per SGD step");
  app.add_option("--lr", cfg.learning_rate, "Learning rate tau");
  app.add_option("--hidden", cfg.hidden, "Hidden width of the fully connected presets");
  app.add_option("--out", cfg.out_dir, "Output directory for logs and reports");
  app.add_option("--eval-every", cfg.eval_every, "Iterations between test-accuracy samples");
  app.add_option("--scale-mult", cfg.scale_mult, "Initial R2/R1 (or R_s) multiplier");
  app.add_option("--trunc-k", cfg.trunc_k, "Probability floor for the truncated variant");
  app.add_option("--init-std", cfg.init_std,
                 "Flat weight-init std (default 0: per-layer sqrt(2/fan_in))");
  app.add_flag("--branch-normalized", cfg.branch_on_normalized,
               "Branch on delta_X_hat instead of delta_X");
  app.add_option("--blob-classes", cfg.blob_classes, "Synthetic: class count");
  app.add_option("--blob-per-class", cfg.blob_per_class, "Synthetic: training objects per class");
  app.add_option("--blob-dim", cfg.blob_dim, "Synthetic: input dimension");
  app.add_option("--blob-spread", cfg.blob_spread, "Synthetic: within-class std");
  app.add_option("--blob-seed", cfg.blob_seed, "Synthetic: dataset seed");
  app.set_config("--config", "", "Read options from a config file");
}

// Parses `run` arguments (without the program or subcommand name). Throws
// InvalidConfig on any usage error; used directly by tests.
inline ExperimentConfig parse_run_config(const std::vector<std::string>& args) {
  ExperimentConfig cfg;
  CLI::App app{"two-scale experiment run"};
  attach_run_options(app, cfg);
  std::vector<const char*> argv;
  argv.push_back("run");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    throw InvalidConfig(std::string("usage error: ") + e.what());
  }
  if (cfg.variants.empty() || cfg.etas.empty() || cfg.seeds.empty()) {
    throw InvalidConfig("usage error: variant, eta, and seed lists must be nonempty");
  }
  return cfg;
}

namespace detail {

inline std::string dtos(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string key_string(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

inline nlohmann::json histogram_json(const Histogram& h) {
  return nlohmann::json{{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}};
}

inline nlohmann::json report_json(const MetricReport& report) {
  nlohmann::json top_k = nlohmann::json::object();
  for (const auto& [k, v] : report.top_k) top_k[std::to_string(k)] = v;
  nlohmann::json close = nlohmann::json::object();
  for (const auto& [at, v] : report.close_enough) close[key_string(at)] = v;
  nlohmann::json j{
      {"accuracy", report.accuracy},
      {"top_k", std::move(top_k)},
      {"close_enough", std::move(close)},
      {"partition",
       {{"mu", report.partition_mu},
        {"well", report.partition.well},
        {"poor", report.partition.poor},
        {"marginal", report.partition.marginal}}},
      {"histograms",
       {{"max_prob", histogram_json(report.histograms.max_prob)},
        {"correct_prob", histogram_json(report.histograms.correct_prob)},
        {"delta_p", histogram_json(report.histograms.delta_p)}}},
  };
  if (report.superclass.has_value()) {
    j["superclass_accuracy"] = *report.superclass;
  } else {
    j["superclass_accuracy"] = nullptr;
  }
  return j;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw InvalidInput("failed writing " + path.string());
}

inline std::string run_csv(const MetricLog& log) {
  std::ostringstream out;
  out << "iteration,batch_accuracy,batch_loss,r1,r2,test_accuracy\n";
  for (const IterationRecord& rec : log.records) {
    out << rec.iteration << ',' << dtos(rec.batch_accuracy) << ',' << dtos(rec.batch_loss)
        << ',' << dtos(rec.r1) << ',' << dtos(rec.r2) << ',';
    if (rec.test_accuracy.has_value()) out << dtos(*rec.test_accuracy);
    out << '\n';
  }
  return out.str();
}

struct CellKey {
  LossKind variant;
  double eta;
  std::uint64_t seed;

  std::string stem() const {
    return std::string(loss_kind_name(variant)) + "_eta" + key_string(eta) + "_seed" +
           std::to_string(seed);
  }
};

struct Moments {
  double mean = 0.0;
  double std_dev = 0.0;
};

inline Moments moments(const std::vector<double>& xs) {
  Moments m;
  if (xs.empty()) return m;
  double sum = 0.0;
  for (double x : xs) sum += x;
  m.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double sq = 0.0;
    for (double x : xs) sq += (x - m.mean) * (x - m.mean);
    m.std_dev = std::sqrt(sq / static_cast<double>(xs.size() - 1));
  }
  return m;
}

inline nlohmann::json moments_json(const std::vector<double>& xs) {
  const Moments m = moments(xs);
  return nlohmann::json{{"mean", m.mean}, {"std", m.std_dev}};
}

}  // namespace detail

// Resolves the dataset root: flag, then environment, then ./data.
inline std::filesystem::path resolve_data_dir(const ExperimentConfig& cfg) {
  if (!cfg.data_dir.empty()) return cfg.data_dir;
  if (const char* env = std::getenv("TWOSCALE_DATA_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return "data";
}

inline std::pair<Dataset, Dataset> load_experiment_data(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path root = resolve_data_dir(cfg);
  const auto prefer = [&](const char* sub) {
    return fs::is_directory(root / sub) ? root / sub : root;
  };
  switch (cfg.dataset) {
    case DatasetChoice::Mnist: {
      const fs::path dir = prefer("mnist");
      return {load_mnist(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte",
                         Split::Train),
              load_mnist(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte",
                         Split::Test)};
    }
    case DatasetChoice::Cifar10: {
      const fs::path dir = prefer("cifar-10-batches-bin");
      std::vector<fs::path> batches;
      for (int b = 1; b <= 5; ++b) {
        const fs::path p = dir / ("data_batch_" + std::to_string(b) + ".bin");
        if (fs::exists(p)) batches.push_back(p);
      }
      if (batches.empty()) {
        throw InvalidConfig("no cifar10 data_batch_*.bin under " + dir.string());
      }
      return {load_cifar10(batches, Split::Train),
              load_cifar10({dir / "test_batch.bin"}, Split::Test)};
    }
    case DatasetChoice::Cifar100: {
      const fs::path dir = prefer("cifar-100-binary");
      return {load_cifar100(dir / "train.bin", Split::Train),
              load_cifar100(dir / "test.bin", Split::Test)};
    }
    case DatasetChoice::Synthetic:
      return synthetic_blobs(cfg.blob_classes, cfg.blob_per_class, cfg.blob_dim,
                             cfg.blob_spread, cfg.blob_seed);
  }
  throw InvalidConfig("unknown dataset");
}

inline NetworkSpec experiment_network(const ExperimentConfig& cfg) {
  switch (cfg.dataset) {
    case DatasetChoice::Mnist: return mnist_fc_spec(cfg.hidden);
    case DatasetChoice::Cifar10: return lenet_spec(10);
    case DatasetChoice::Cifar100: return lenet_spec(100);
    case DatasetChoice::Synthetic:
      return blobs_fc_spec(cfg.blob_dim, cfg.blob_classes, cfg.hidden);
  }
  throw InvalidConfig("unknown dataset");
}

// Runs every (variant, eta, seed) cell, writing per-run CSV + JSON and a
// cross-seed summary.json. Returns 0 when every cell completed, 3 when some
// cell diverged (its failure is recorded in the summary).
inline int run_matrix(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  if (cfg.variants.empty() || cfg.etas.empty() || cfg.seeds.empty()) {
    throw InvalidConfig("run_matrix: variant, eta, and seed lists must be nonempty");
  }
  const auto [train, test] = load_experiment_data(cfg);
  const NetworkSpec spec = experiment_network(cfg);

  std::size_t iterations = cfg.iterations;
  if (cfg.epochs > 0) {
    const std::size_t per_epoch = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
    iterations = cfg.epochs * per_epoch;
  }

  fs::create_directories(cfg.out_dir);
  bool any_diverged = false;
  nlohmann::json summary_cells = nlohmann::json::array();

  for (LossKind variant : cfg.variants) {
    for (double eta : cfg.etas) {
      std::vector<double> acc, superclass;
      std::map<std::size_t, std::vector<double>> top_k;
      std::map<std::string, std::vector<double>> close_enough;
      std::vector<double> well, poor, marginal;
      nlohmann::json diverged_seeds = nlohmann::json::array();

      for (std::uint64_t seed : cfg.seeds) {
        TrainingConfig tc;
        tc.variant.kind = variant;
        tc.variant.eta = eta;
        tc.variant.trunc_k = cfg.trunc_k;
        tc.variant.branch_on_normalized = cfg.branch_on_normalized;
        tc.learning_rate = cfg.learning_rate;
        tc.batch_size = cfg.batch_size;
        tc.iterations = iterations;
        tc.init_scale_multiplier = cfg.scale_mult;
        tc.init_std = cfg.init_std;
        tc.seed = seed;
        tc.eval_every = cfg.eval_every;

        const MetricLog log = run_experiment(spec, tc, train, test);
        const detail::CellKey key{variant, eta, seed};

        detail::write_text_file(fs::path(cfg.out_dir) / (key.stem() + ".csv"),
                                detail::run_csv(log));

        nlohmann::json report{
            {"cell",
             {{"variant", loss_kind_name(variant)}, {"eta", eta}, {"seed", seed}}},
            {"config",
             {{"dataset", dataset_name(cfg.dataset)},
              {"hidden", cfg.hidden},
              {"learning_rate", cfg.learning_rate},
              {"batch_size", cfg.batch_size},
              {"iterations", iterations},
              {"scale_mult", cfg.scale_mult},
              {"eval_every", cfg.eval_every},
              {"trunc_k", cfg.trunc_k},
              {"init_std", cfg.init_std},
              {"branch_normalized", cfg.branch_on_normalized}}},
            {"diverged", log.diverged},
        };
        if (log.diverged) {
          report["divergence"] = log.divergence_message;
          report["final"] = nullptr;
          diverged_seeds.push_back(seed);
          any_diverged = true;
        } else {
          report["final"] = detail::report_json(*log.final_report);
          const MetricReport& r = *log.final_report;
          acc.push_back(r.accuracy);
          for (const auto& [k, v] : r.top_k) top_k[k].push_back(v);
          for (const auto& [at, v] : r.close_enough) {
            close_enough[detail::key_string(at)].push_back(v);
          }
          if (r.superclass.has_value()) superclass.push_back(*r.superclass);
          well.push_back(r.partition.well);
          poor.push_back(r.partition.poor);
          marginal.push_back(r.partition.marginal);
        }
        detail::write_text_file(fs::path(cfg.out_dir) / (key.stem() + "_report.json"),
                                report.dump(2) + "\n");
      }

      nlohmann::json cell{
          {"variant", loss_kind_name(variant)},
          {"eta", eta},
          {"seeds", cfg.seeds},
          {"diverged_seeds", diverged_seeds},
      };
      if (!acc.empty()) {
        nlohmann::json tk = nlohmann::json::object();
        for (const auto& [k, xs] : top_k) tk[std::to_string(k)] = detail::moments_json(xs);
        nlohmann::json ce = nlohmann::json::object();
        for (const auto& [at, xs] : close_enough) ce[at] = detail::moments_json(xs);
        cell["metrics"] = nlohmann::json{
            {"accuracy", detail::moments_json(acc)},
            {"top_k", std::move(tk)},
            {"close_enough", std::move(ce)},
            {"partition_well", detail::moments_json(well)},
            {"partition_poor", detail::moments_json(poor)},
            {"partition_marginal", detail::moments_json(marginal)},
        };
        if (!superclass.empty()) {
          cell["metrics"]["superclass_accuracy"] = detail::moments_json(superclass);
        }
      } else {
        cell["metrics"] = nullptr;
      }
      summary_cells.push_back(std::move(cell));
    }
  }

  nlohmann::json summary{
      {"dataset", dataset_name(cfg.dataset)},
      {"iterations", iterations},
      {"cells", std::move(summary_cells)},
  };
  detail::write_text_file(fs::path(cfg.out_dir) / "summary.json", summary.dump(2) + "\n");
  return any_diverged ? 3 : 0;
}

// Side-by-side metric deltas of two or more run reports (first = baseline):
// accuracy, the top-k grid, the at-grid, and the partition masses, as CSV.
// Reports must share identical metric grids.
inline std::string compare_reports(const std::vector<std::filesystem::path>& paths) {
  if (paths.size() < 2) throw InvalidInput("compare: need at least two reports");
  std::vector<nlohmann::json> finals;
  std::vector<std::string> names;
  for (const auto& path : paths) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("compare: cannot open " + path.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw InvalidInput("compare: " + path.string() + " is not valid JSON: " + e.what());
    }
    if (!j.contains("final") || j["final"].is_null()) {
      throw InvalidInput("compare: " + path.string() + " has no final metrics");
    }
    finals.push_back(j["final"]);
    std::string stem = path.stem().string();
    if (const auto pos = stem.rfind("_report"); pos != std::string::npos &&
                                                pos + 7 == stem.size()) {
      stem = stem.substr(0, pos);
    }
    names.push_back(stem);
  }

  const auto keys_of = [](const nlohmann::json& obj) {
    std::vector<std::string> keys;
    for (auto it = obj.begin(); it != obj.end(); ++it) keys.push_back(it.key());
    return keys;
  };
  const auto base_topk = keys_of(finals[0]["top_k"]);
  const auto base_close = keys_of(finals[0]["close_enough"]);
  for (std::size_t i = 1; i < finals.size(); ++i) {
    if (keys_of(finals[i]["top_k"]) != base_topk ||
        keys_of(finals[i]["close_enough"]) != base_close) {
      throw InvalidInput("compare: metric grids of " + names[0] + " and " + names[i] +
                         " differ");
    }
  }

  std::ostringstream out;
  out << "metric," << names[0];
  for (std::size_t i = 1; i < names.size(); ++i) {
    out << ',' << names[i] << ",delta_" << names[i];
  }
  out << '\n';
  const auto row = [&](const std::string& label, auto getter) {
    const double base = getter(finals[0]);
    out << label << ',' << detail::dtos(base);
    for (std::size_t i = 1; i < finals.size(); ++i) {
      const double v = getter(finals[i]);
      out << ',' << detail::dtos(v) << ',' << detail::dtos(v - base);
    }
    out << '\n';
  };

  row("accuracy", [](const nlohmann::json& f) { return f["accuracy"].get<double>(); });
  for (const std::string& k : base_topk) {
    row("top_k_" + k,
        [&k](const nlohmann::json& f) { return f["top_k"][k].get<double>(); });
  }
  for (const std::string& at : base_close) {
    row("acc_at_" + at,
        [&at](const nlohmann::json& f) { return f["close_enough"][at].get<double>(); });
  }
  bool all_super = true;
  for (const auto& f : finals) {
    if (!f.contains("superclass_accuracy") || f["superclass_accuracy"].is_null()) {
      all_super = false;
    }
  }
  if (all_super) {
    row("superclass_accuracy",
        [](const nlohmann::json& f) { return f["superclass_accuracy"].get<double>(); });
  }
  row("partition_well",
      [](const nlohmann::json& f) { return f["partition"]["well"].get<double>(); });
  row("partition_poor",
      [](const nlohmann::json& f) { return f["partition"]["poor"].get<double>(); });
  row("partition_marginal",
      [](const nlohmann::json& f) { return f["partition"]["marginal"].get<double>(); });
  return out.str();
}

}  // namespace twoscale
