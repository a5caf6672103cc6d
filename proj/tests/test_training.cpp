#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "ecnn/checkpoint.hpp"
#include "ecnn/errors.hpp"
#include "ecnn/experiment.hpp"
#include "ecnn/metrics.hpp"
#include "ecnn/training.hpp"
#include "support/oracles.hpp"

using namespace ecnn;

namespace {

std::vector<double> snapshot(std::span<const NamedTensor> tensors) {
  std::vector<double> out;
  for (const auto& t : tensors) out.insert(out.end(), t.tensor.data().begin(), t.tensor.data().end());
  return out;
}

const std::vector<ArchSpec>& toy_specs() {
  static const std::vector<ArchSpec> specs{XceptionSpec::toy(), DenseSpec::toy(), EffSpec::toy()};
  return specs;
}

DatasetSplit seed7_split() {
  ExperimentConfig cfg = default_experiment_config();
  override_seed(cfg, 7);
  return prepare_data(cfg);
}

}  // namespace

TEST(Sgd, SingleStepArithmetic) {
  const Tensor w({1}, {1.0}, true);
  sum(mul(w, Tensor({1}, {0.5}))).backward();
  const std::vector<NamedTensor> params{{"w", w}};
  sgd_step(params, 0.001);
  EXPECT_DOUBLE_EQ(w.item(), 0.9995);
}

TEST(Sgd, ZeroLearningRateIsIdentity) {
  SplitMix64 rng(1);
  const Tensor w = oracle::random_tensor({3, 3}, rng, -1, 1, true);
  const auto before = std::vector<double>(w.data().begin(), w.data().end());
  sum(mul(w, w)).backward();
  const std::vector<NamedTensor> params{{"w", w}};
  sgd_step(params, 0.0);
  EXPECT_EQ(std::vector<double>(w.data().begin(), w.data().end()), before);
}

TEST(Sgd, TwoStepsEqualOneDoubledStep) {
  SplitMix64 rng(2);
  const Tensor a = oracle::random_tensor({5}, rng, -1, 1, true);
  const Tensor b({5}, std::vector<double>(a.data().begin(), a.data().end()), true);
  const Tensor g = oracle::random_tensor({5}, rng);
  sum(mul(a, g)).backward();
  sum(mul(b, g)).backward();
  const std::vector<NamedTensor> pa{{"a", a}}, pb{{"b", b}};
  sgd_step(pa, 0.01);
  sgd_step(pa, 0.01);
  sgd_step(pb, 0.02);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
}

TEST(Sgd, MissingGradientIsAnError) {
  const std::vector<NamedTensor> params{{"w", Tensor({2}, {1, 2}, true)}};
  EXPECT_THROW(sgd_step(params, 0.1), InvalidState);
}

TEST(TrainModel, DeterministicForFixedSeed) {
  const auto split = seed7_split();
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 11;
  for (const auto& spec : toy_specs()) {
    Model a = build_model(spec, 4), b = build_model(spec, 4);
    const TrainReport ra = train_model(a, split.train, cfg);
    const TrainReport rb = train_model(b, split.train, cfg);
    EXPECT_EQ(ra.epoch_loss, rb.epoch_loss);
    EXPECT_EQ(ra.epoch_accuracy, rb.epoch_accuracy);
    EXPECT_EQ(ra.parameter_checksum, rb.parameter_checksum);
    EXPECT_EQ(snapshot(a.parameters()), snapshot(b.parameters()));
    EXPECT_EQ(snapshot(a.buffers()), snapshot(b.buffers()));
  }
}

TEST(TrainModel, ZeroLearningRateLeavesParameters) {
  const auto split = seed7_split();
  Model m = build_model(DenseSpec::toy(), 1);
  const auto before = snapshot(m.parameters());
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.learning_rate = 0.0;
  train_model(m, split.train, cfg);
  EXPECT_EQ(snapshot(m.parameters()), before);
}

// Same models, seeds and schedule as a default `train --seed 7` run.
TEST(TrainModel, ReachesHighTrainAccuracyOnSeed7) {
  ExperimentConfig cfg = default_experiment_config();
  override_seed(cfg, 7);
  const auto split = prepare_data(cfg);
  for (std::size_t i = 0; i < cfg.models.size(); ++i) {
    Model m = build_model(cfg.models[i].spec, model_init_seed(7, i));
    train_model(m, split.train, cfg.train);
    const Evaluation ev = evaluate_model(m, split.train);
    std::size_t correct = 0;
    for (std::size_t j = 0; j < split.train.size(); ++j) correct += ev.predictions[j] == split.train[j].label;
    EXPECT_GE(static_cast<double>(correct) / static_cast<double>(split.train.size()), 0.95) << m.family();
  }
}

TEST(TrainModel, SmallStepDoesNotIncreaseMinibatchLoss) {
  const auto data = synthesize_dataset(3, 4, 16);
  std::size_t failures = 0;
  for (std::size_t trial = 0; trial < 20; ++trial) {
    const Model m = build_model(toy_specs()[trial % 3], 100 + trial);
    SplitMix64 rng(trial);
    std::vector<std::size_t> idx(4);
    for (auto& i : idx) i = rng.below(data.size());
    std::vector<std::size_t> labels;
    for (auto i : idx) labels.push_back(data[i].label);
    const Tensor batch = stack_patches(data, idx);
    const Tensor loss = cross_entropy(m.forward(batch, Mode::train), labels);
    loss.backward();
    sgd_step(m.parameters(), 1e-4);
    m.zero_grad();
    const double after = cross_entropy(m.forward(batch, Mode::train), labels).item();
    failures += after > loss.item();
  }
  EXPECT_EQ(failures, 0u);
}

TEST(TrainModel, NonFiniteLossRaisesDiverged) {
  const auto split = seed7_split();
  Model m = build_model(EffSpec::toy(), 0);
  m.parameters()[0].tensor.mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  cfg.epochs = 1;
  try {
    train_model(m, split.train, cfg);
    FAIL();
  } catch (const Diverged& e) {
    EXPECT_EQ(e.epoch(), 1u);
    EXPECT_EQ(e.batch(), 1u);
  }
}

TEST(TrainModel, RejectsBadConfiguration) {
  const auto split = seed7_split();
  Model m = build_model(EffSpec::toy(), 0);
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(train_model(m, split.train, cfg), InvalidArgument);
  cfg.epochs = 1;
  EXPECT_THROW(train_model(m, {}, cfg), InvalidArgument);
}

TEST(Evaluate, PredictionsAreArgmaxAndPure) {
  const auto split = seed7_split();
  Model m = build_model(XceptionSpec::toy(), 2);
  TrainConfig cfg;
  cfg.epochs = 2;
  train_model(m, split.train, cfg);
  const Evaluation a = evaluate_model(m, split.test), b = evaluate_model(m, split.test);
  ASSERT_EQ(a.predictions.size(), split.test.size());
  EXPECT_EQ(a.predictions, b.predictions);
  std::vector<std::size_t> truth;
  for (std::size_t i = 0; i < split.test.size(); ++i) {
    EXPECT_EQ(a.predictions[i], argmax_class(a.probabilities[i]));
    EXPECT_TRUE(std::equal(a.probabilities[i].values().begin(), a.probabilities[i].values().end(),
                           b.probabilities[i].values().begin()));
    truth.push_back(split.test[i].label);
  }
  const MetricReport r = compute_report(confusion_from(truth, a.predictions, 3));
  const auto o = oracle::brute_force_metrics(truth, a.predictions, 3);
  EXPECT_EQ(r.accuracy, o.accuracy);
  EXPECT_NEAR(r.macro_precision, o.precision, 1e-15);
  EXPECT_NEAR(r.macro_recall, o.recall, 1e-15);
  EXPECT_NEAR(r.macro_f1, o.f1, 1e-15);
}

class CheckpointRoundTrip : public ::testing::TestWithParam<ArchSpec> {};

TEST_P(CheckpointRoundTrip, PreservesStateAndForward) {
  const auto split = seed7_split();
  Model m = build_model(GetParam(), 9);
  TrainConfig cfg;
  cfg.epochs = 1;
  train_model(m, split.train, cfg);
  const auto path = (std::filesystem::temp_directory_path() / ("ecnn_rt_" + m.family() + ".ckpt")).string();
  save_checkpoint(m, path);
  const Model loaded = load_checkpoint(path, GetParam());
  std::filesystem::remove(path);
  EXPECT_EQ(count_parameters(loaded), count_parameters(m));
  EXPECT_EQ(snapshot(loaded.parameters()), snapshot(m.parameters()));
  EXPECT_EQ(snapshot(loaded.buffers()), snapshot(m.buffers()));
  SplitMix64 rng(1);
  const Tensor x = oracle::random_tensor({3, 1, 16, 16}, rng, 0, 1);
  const Tensor ya = m.forward(x), yb = loaded.forward(x);
  EXPECT_TRUE(std::equal(ya.data().begin(), ya.data().end(), yb.data().begin()));
}

INSTANTIATE_TEST_SUITE_P(ToyFamilies, CheckpointRoundTrip,
                         ::testing::Values(ArchSpec{XceptionSpec::toy()}, ArchSpec{DenseSpec::toy()},
                                           ArchSpec{EffSpec::toy()}),
                         [](const auto& info) { return family_name(info.param); });

TEST(Checkpoint, GuardsAgainstMismatchAndCorruption) {
  const Model m = build_model(DenseSpec::toy(), 1);
  const std::string bytes = encode_checkpoint(m);
  EXPECT_NO_THROW(decode_checkpoint(bytes, DenseSpec::toy()));

  try {
    decode_checkpoint(bytes, XceptionSpec::toy());
    FAIL();
  } catch (const IncompatibleCheckpoint& e) {
    EXPECT_NE(std::string(e.what()).find("densenet"), std::string::npos);
  }
  DenseSpec wider = DenseSpec::toy();
  wider.growth_rate = 6;
  EXPECT_THROW(decode_checkpoint(bytes, wider), IncompatibleCheckpoint);

  EXPECT_THROW(decode_checkpoint("XXXX" + bytes.substr(4), DenseSpec::toy()), CorruptCheckpoint);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3), DenseSpec::toy()), CorruptCheckpoint);
  EXPECT_THROW(decode_checkpoint(bytes + "x", DenseSpec::toy()), CorruptCheckpoint);
  std::string bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(decode_checkpoint(bad_version, DenseSpec::toy()), CorruptCheckpoint);
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/x.ckpt", DenseSpec::toy()), Error);
}

TEST(Checkpoint, EncodingIsStable) {
  EXPECT_EQ(encode_checkpoint(build_model(EffSpec::toy(), 3)), encode_checkpoint(build_model(EffSpec::toy(), 3)));
  const std::string bytes = encode_checkpoint(build_model(EffSpec::toy(), 3));
  EXPECT_EQ(bytes.substr(0, 4), "ENSB");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1);
}
