#include "ecnn/experiment.hpp"

#include <charconv>
#include <filesystem>
#include <map>
#include <ostream>
#include <set>

#include "ecnn/binary_io.hpp"
#include "ecnn/checkpoint.hpp"
#include "ecnn/ensemble.hpp"
#include "ecnn/errors.hpp"
#include "ecnn/random.hpp"

namespace fs = std::filesystem;

namespace ecnn {
namespace {

constexpr const char* kArchSections[] = {"densenet", "efficientnet", "xception"};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <class T>
T parse_number(const std::string& value, std::size_t line, const std::string& key) {
  T v{};
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (value.empty() || res.ec != std::errc() || res.ptr != value.data() + value.size())
    throw ConfigError(line, "'" + key + "': cannot parse '" + value + "' as a number");
  return v;
}

bool parse_flag(const std::string& value, std::size_t line, const std::string& key) {
  if (value == "true" || value == "on" || value == "1") return true;
  if (value == "false" || value == "off" || value == "0") return false;
  throw ConfigError(line, "'" + key + "': expected true or false, got '" + value + "'");
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory '" + dir + "': " + ec.message());
}

std::string join(const std::string& dir, const std::string& file) { return (fs::path(dir) / file).string(); }

}  // namespace

ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  cfg.models = {{"DenseNet121", DenseSpec::toy()}, {"EfficientNet_B4", EffSpec::toy()}, {"XceptionNet", XceptionSpec::toy()}};
  return cfg;
}

ExperimentConfig parse_experiment_config(std::string_view text) {
  ExperimentConfig cfg = default_experiment_config();
  std::map<std::string, std::map<std::string, std::string>> arch_fields;
  std::map<std::string, std::size_t> arch_line;
  std::set<std::string> seen;

  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view raw = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;

    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(line_no, "expected 'section.key = value'");
    const std::string lhs = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const auto dot = lhs.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == lhs.size())
      throw ConfigError(line_no, "key '" + lhs + "' must have the form section.key");
    if (!seen.insert(lhs).second) throw ConfigError(line_no, "duplicate key '" + lhs + "'");
    const std::string section = lhs.substr(0, dot), key = lhs.substr(dot + 1);

    if (section == "data") {
      auto& d = cfg.data;
      if (key == "source") {
        if (value == "synthetic") d.source = DataSource::synthetic;
        else if (value == "directory") d.source = DataSource::directory;
        else throw ConfigError(line_no, "data.source must be 'synthetic' or 'directory', got '" + value + "'");
      } else if (key == "seed") d.seed = parse_number<std::uint64_t>(value, line_no, lhs);
      else if (key == "per_class") d.per_class = parse_number<std::size_t>(value, line_no, lhs);
      else if (key == "test_fraction") d.test_fraction = parse_number<double>(value, line_no, lhs);
      else if (key == "resolution") d.resolution = parse_number<std::size_t>(value, line_no, lhs);
      else if (key == "directory") d.directory = value;
      else if (key == "annotations") d.annotations = value;
      else throw ConfigError(line_no, "unknown key '" + lhs + "'");
    } else if (section == "train") {
      auto& t = cfg.train;
      if (key == "learning_rate") t.learning_rate = parse_number<double>(value, line_no, lhs);
      else if (key == "epochs") t.epochs = parse_number<std::size_t>(value, line_no, lhs);
      else if (key == "batch_size") t.batch_size = parse_number<std::size_t>(value, line_no, lhs);
      else if (key == "seed") t.seed = parse_number<std::uint64_t>(value, line_no, lhs);
      else if (key == "shuffle") t.shuffle = parse_flag(value, line_no, lhs);
      else throw ConfigError(line_no, "unknown key '" + lhs + "'");
    } else if (section == "output") {
      if (key == "dir") cfg.output_dir = value;
      else throw ConfigError(line_no, "unknown key '" + lhs + "'");
    } else if (std::find(std::begin(kArchSections), std::end(kArchSections), section) != std::end(kArchSections)) {
      const std::size_t idx = static_cast<std::size_t>(
          std::find(std::begin(kArchSections), std::end(kArchSections), section) - std::begin(kArchSections));
      if (key == "name") {
        if (value.empty() || value.find(',') != std::string::npos)
          throw ConfigError(line_no, "'" + lhs + "' must be non-empty and contain no commas");
        cfg.models[idx].display_name = value;
        continue;
      }
      try {
        // Field-level check so the diagnostic can point at this line.
        spec_from_fields(section, {{key, value}});
      } catch (const InvalidSpec& e) {
        throw ConfigError(line_no, section + ": " + e.what());
      }
      arch_fields[section][key] = value;
      arch_line.emplace(section, line_no);
    } else {
      throw ConfigError(line_no, "unknown section '" + section + "'");
    }
  }

  for (std::size_t i = 0; i < std::size(kArchSections); ++i) {
    const std::string section = kArchSections[i];
    if (!arch_fields.count(section)) continue;
    try {
      cfg.models[i].spec = spec_from_fields(section, arch_fields[section]);
      validate(cfg.models[i].spec);
    } catch (const InvalidSpec& e) {
      throw ConfigError(arch_line[section], section + ": " + e.what());
    }
  }

  const auto& d = cfg.data;
  if (d.source == DataSource::directory && (d.directory.empty() || d.annotations.empty()))
    throw ConfigError(0, "data.source = directory requires data.directory and data.annotations");
  if (d.source == DataSource::synthetic && d.per_class == 0) throw ConfigError(0, "data.per_class must be positive");
  if (!(d.test_fraction > 0.0 && d.test_fraction < 1.0))
    throw ConfigError(0, "data.test_fraction must lie strictly between 0 and 1");
  if (d.resolution < 4) throw ConfigError(0, "data.resolution must be at least 4");
  if (cfg.train.epochs == 0) throw ConfigError(0, "train.epochs must be at least 1");
  if (cfg.train.batch_size == 0) throw ConfigError(0, "train.batch_size must be at least 1");
  if (!(cfg.train.learning_rate >= 0.0)) throw ConfigError(0, "train.learning_rate must be non-negative");
  if (cfg.output_dir.empty()) throw ConfigError(0, "output.dir must not be empty");
  return cfg;
}

void override_seed(ExperimentConfig& config, std::uint64_t seed) {
  config.data.seed = seed;
  config.train.seed = seed;
}

std::uint64_t model_init_seed(std::uint64_t train_seed, std::size_t index) {
  return SplitMix64::mix(train_seed, 0x1A17ULL + index);
}

DatasetSplit prepare_data(const ExperimentConfig& config) {
  const auto& d = config.data;
  const auto samples = d.source == DataSource::synthetic
                           ? synthesize_dataset(d.seed, d.per_class, d.resolution)
                           : load_roi_dataset(d.directory, d.annotations, d.resolution);
  return train_test_split(samples, d.test_fraction, d.seed);
}

std::string checkpoint_path(const std::string& dir, const ArchSpec& spec) {
  return join(dir, family_name(spec) + ".ckpt");
}

std::vector<TrainReport> run_training(const ExperimentConfig& config, std::ostream& log) {
  const DatasetSplit split = prepare_data(config);
  ensure_dir(config.output_dir);
  std::string train_log = "model,epoch,loss,accuracy\n";
  std::vector<TrainReport> reports;
  for (std::size_t i = 0; i < config.models.size(); ++i) {
    const auto& entry = config.models[i];
    Model model = build_model(entry.spec, model_init_seed(config.train.seed, i));
    const auto train_set = resample(split.train, model.resolution());
    TrainConfig tc = config.train;
    tc.checkpoint_path = checkpoint_path(config.output_dir, entry.spec);
    log << "training " << entry.display_name << " (" << count_parameters(model) << " parameters, "
        << train_set.size() << " samples)" << std::endl;
    auto report = train_model(model, train_set, tc);
    for (std::size_t e = 0; e < report.epoch_loss.size(); ++e)
      train_log += entry.display_name + "," + std::to_string(e + 1) + "," + format_real(report.epoch_loss[e]) + "," +
                   format_real(report.epoch_accuracy[e]) + "\n";
    log << "  final loss " << report.epoch_loss.back() << ", train accuracy " << report.epoch_accuracy.back()
        << ", " << report.elapsed_seconds << " s" << std::endl;
    reports.push_back(std::move(report));
  }
  write_file(join(config.output_dir, "train_log.csv"), train_log);
  return reports;
}

EvalSummary run_evaluation(const ExperimentConfig& config, const std::string& checkpoint_dir) {
  std::vector<Model> models;
  for (const auto& entry : config.models) {
    const auto path = checkpoint_path(checkpoint_dir, entry.spec);
    if (!fs::exists(path)) throw MissingArtifact("missing checkpoint '" + path + "'");
    models.push_back(load_checkpoint(path, entry.spec));
  }
  const DatasetSplit split = prepare_data(config);
  ensure_dir(config.output_dir);

  std::vector<std::size_t> truth;
  std::vector<std::string> ids;
  for (const auto& s : split.test) {
    truth.push_back(s.label);
    ids.push_back(s.source_id);
  }
  const std::size_t k = models.front().num_classes();

  EvalSummary summary;
  summary.test_size = truth.size();
  std::vector<ProbTable> tables;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto test_set = resample(split.test, models[i].resolution());
    auto ev = evaluate_model(models[i], test_set);
    auto cm = confusion_from(truth, ev.predictions, models[i].num_classes());
    summary.rows.emplace_back(config.models[i].display_name, compute_report(cm));
    write_file(join(config.output_dir, "confusion_" + models[i].family() + ".csv"), format_confusion_csv(cm));
    summary.confusion.push_back(std::move(cm));
    ProbTable table{ids, std::move(ev.probabilities)};
    write_file(join(config.output_dir, "probs_" + models[i].family() + ".csv"), format_prob_csv(table));
    tables.push_back(std::move(table));
  }

  const FusedTable fused = fuse_tables(tables);
  auto cm = confusion_from(truth, fused.predictions, k);
  summary.rows.emplace_back("Ensembling", compute_report(cm));
  write_file(join(config.output_dir, "confusion_ensemble.csv"), format_confusion_csv(cm));
  write_file(join(config.output_dir, "predictions_ensemble.csv"), format_fused_csv(fused));
  summary.confusion.push_back(std::move(cm));

  write_file(join(config.output_dir, "metrics.txt"), format_table(summary.rows));
  write_file(join(config.output_dir, "metrics.csv"), format_report_csv(summary.rows));
  return summary;
}

void export_synthetic_dataset(const ExperimentConfig& config, const std::string& dir) {
  const auto& d = config.data;
  const auto samples = synthesize_dataset(d.seed, d.per_class, d.resolution);
  ensure_dir(dir);
  const long half = static_cast<long>(d.resolution / 2);
  std::string csv = "image,cx,cy,radius,label\n";
  for (const auto& s : samples) {
    const std::string file = s.source_id + ".pgm";
    GrayImage img{d.resolution, d.resolution, std::vector<double>(s.patch.data().begin(), s.patch.data().end())};
    write_file(join(dir, file), encode_pgm(img));
    csv += file + "," + std::to_string(half) + "," + std::to_string(half) + "," + std::to_string(half) + "," +
           std::string(kTissueClassNames[s.label]) + "\n";
  }
  write_file(join(dir, "annotations.csv"), csv);
}

}  // namespace ecnn
