// Command-line driver: train / eval / fuse / synth-data / report.
//
// Exit codes: 0 ok, 1 other failure, 2 config or usage error, 3 training
// diverged, 4 missing artifact, 5 inconsistent data.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ecnn/binary_io.hpp"
#include "ecnn/ensemble.hpp"
#include "ecnn/errors.hpp"
#include "ecnn/experiment.hpp"
#include "ecnn/metrics.hpp"

namespace fs = std::filesystem;
using namespace ecnn;

namespace {

enum Exit : int { kOk = 0, kFailure = 1, kConfig = 2, kDiverged = 3, kMissing = 4, kData = 5 };

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string checkpoints;
  std::vector<std::string> inputs;
};

ExperimentConfig load_config(const Options& opt) {
  ExperimentConfig cfg = default_experiment_config();
  if (!opt.config_path.empty()) {
    std::string text;
    try {
      text = read_file(opt.config_path);
    } catch (const Error& e) {
      throw ConfigError(0, e.what());
    }
    cfg = parse_experiment_config(text);
  }
  if (opt.seed) override_seed(cfg, *opt.seed);
  if (!opt.out.empty()) cfg.output_dir = opt.out;
  return cfg;
}

int cmd_train(const Options& opt) {
  const auto cfg = load_config(opt);
  run_training(cfg, std::cerr);
  std::cerr << "checkpoints written to " << cfg.output_dir << "\n";
  return kOk;
}

int cmd_eval(const Options& opt) {
  const auto cfg = load_config(opt);
  const auto summary = run_evaluation(cfg, opt.checkpoints.empty() ? cfg.output_dir : opt.checkpoints);
  std::cout << format_table(summary.rows);
  return kOk;
}

int cmd_fuse(const Options& opt) {
  std::vector<ProbTable> tables;
  for (const auto& path : opt.inputs) {
    if (!fs::exists(path)) throw MissingArtifact("missing probability file '" + path + "'");
    try {
      tables.push_back(parse_prob_csv(read_file(path)));
    } catch (const DataMismatch& e) {
      throw DataMismatch(path + ": " + e.what());
    }
  }
  const std::string csv = format_fused_csv(fuse_tables(tables));
  if (opt.out.empty()) {
    std::cout << csv;
  } else {
    fs::create_directories(opt.out);
    write_file((fs::path(opt.out) / "fused_predictions.csv").string(), csv);
  }
  return kOk;
}

int cmd_synth(const Options& opt) {
  const auto cfg = load_config(opt);
  export_synthetic_dataset(cfg, cfg.output_dir);
  std::cerr << "wrote " << cfg.data.per_class * kNumTissueClasses << " patches to " << cfg.output_dir << "\n";
  return kOk;
}

int cmd_report(const Options& opt) {
  std::vector<std::string> files = opt.inputs;
  if (files.empty()) files.push_back((fs::path(opt.out.empty() ? "out" : opt.out) / "metrics.csv").string());
  std::vector<ReportRow> rows;
  for (const auto& f : files) {
    if (!fs::exists(f)) throw MissingArtifact("missing metrics file '" + f + "'");
    auto part = parse_report_csv(read_file(f));
    rows.insert(rows.end(), part.begin(), part.end());
  }
  std::cout << format_table(rows);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ensemble CNN toolkit: train three CNN families, fuse their class probabilities, report metrics"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", opt.config_path, "Experiment config file (section.key = value)");
    if (config_required) c->required();
    sub->add_option("--seed", opt.seed, "Overrides data.seed and train.seed");
    sub->add_option("--out", opt.out, "Output directory (overrides output.dir)");
  };

  auto* train = app.add_subcommand("train", "Train the three models and write checkpoints");
  add_common(train, true);
  auto* eval = app.add_subcommand("eval", "Evaluate checkpoints and the sum-of-probabilities ensemble");
  add_common(eval, true);
  eval->add_option("--checkpoints", opt.checkpoints, "Checkpoint directory (default: output dir)");
  auto* fuse = app.add_subcommand("fuse", "Fuse per-model probability CSVs offline");
  fuse->add_option("files", opt.inputs, "Probability CSVs (sample_id,p0,...)")->required();
  fuse->add_option("--out", opt.out, "Directory for fused_predictions.csv (default: stdout)");
  auto* synth = app.add_subcommand("synth-data", "Write the synthetic ROI dataset as PGM files + annotations.csv");
  add_common(synth, false);
  auto* report = app.add_subcommand("report", "Render metrics CSV files as a table");
  report->add_option("files", opt.inputs, "metrics.csv files (default: <out>/metrics.csv)");
  report->add_option("--out", opt.out, "Directory holding metrics.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*train) return cmd_train(opt);
    if (*eval) return cmd_eval(opt);
    if (*fuse) return cmd_fuse(opt);
    if (*synth) return cmd_synth(opt);
    if (*report) return cmd_report(opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const InvalidSpec& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const Diverged& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kDiverged;
  } catch (const MissingArtifact& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kMissing;
  } catch (const IncompatibleCheckpoint& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const CorruptCheckpoint& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const DataMismatch& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const InvalidAnnotation& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const UnsupportedFormat& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const InvalidSplit& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
