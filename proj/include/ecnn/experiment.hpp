#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "ecnn/arch_spec.hpp"
#include "ecnn/data.hpp"
#include "ecnn/metrics.hpp"
#include "ecnn/training.hpp"

namespace ecnn {

enum class DataSource { synthetic, directory };

struct DataConfig {
  DataSource source = DataSource::synthetic;
  std::uint64_t seed = 7;
  std::size_t per_class = 40;
  double test_fraction = 0.5;
  std::size_t resolution = 16;
  std::string directory;    // images, for DataSource::directory
  std::string annotations;  // CSV, for DataSource::directory
};

struct ModelEntry {
  std::string display_name;  // row label in reports
  ArchSpec spec;
};

/// Line-oriented `section.key = value` file; `#` starts a comment.
/// Sections: data, train, output, densenet, efficientnet, xception.
struct ExperimentConfig {
  DataConfig data;
  TrainConfig train;
  std::string output_dir = "out";
  /// Always densenet, efficientnet, xception in that order.
  std::vector<ModelEntry> models;
};

ExperimentConfig default_experiment_config();
/// Throws ConfigError carrying the offending line number.
ExperimentConfig parse_experiment_config(std::string_view text);
/// `--seed` semantics: replaces both the data seed and the training seed.
void override_seed(ExperimentConfig& config, std::uint64_t seed);

/// Initialization seed of the i-th model, derived from the training seed.
std::uint64_t model_init_seed(std::uint64_t train_seed, std::size_t index);

DatasetSplit prepare_data(const ExperimentConfig& config);

std::string checkpoint_path(const std::string& dir, const ArchSpec& spec);

/// Trains every model in sequence and writes `<family>.ckpt` plus
/// `train_log.csv` to config.output_dir. Progress goes to `log`.
std::vector<TrainReport> run_training(const ExperimentConfig& config, std::ostream& log);

struct EvalSummary {
  std::vector<ReportRow> rows;  // one per model, then "Ensembling"
  std::vector<ConfusionMatrix> confusion;
  std::size_t test_size = 0;
};

/// Loads checkpoints from `checkpoint_dir`, evaluates on the test split and
/// writes metrics.txt, metrics.csv, confusion_*.csv, probs_*.csv and
/// predictions_ensemble.csv to config.output_dir.
EvalSummary run_evaluation(const ExperimentConfig& config, const std::string& checkpoint_dir);

/// Writes the synthetic dataset as PGM files plus annotations.csv, loadable
/// with `data.source = directory`.
void export_synthetic_dataset(const ExperimentConfig& config, const std::string& dir);

}  // namespace ecnn
