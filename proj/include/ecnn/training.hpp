#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecnn/architectures.hpp"
#include "ecnn/data.hpp"
#include "ecnn/ensemble.hpp"

namespace ecnn {

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t epochs = 100;
  std::size_t batch_size = 4;
  std::uint64_t seed = 0;
  bool shuffle = true;
  std::optional<std::string> checkpoint_path;
};

struct TrainReport {
  std::vector<double> epoch_loss;      // mean over samples
  std::vector<double> epoch_accuracy;  // train-mode predictions during the epoch
  std::uint64_t parameter_checksum = 0;
  double elapsed_seconds = 0;  // wall clock, excluded from determinism checks
};

/// Plain SGD: w -= lr * dL/dw. Gradients are left for the caller to zero.
void sgd_step(std::span<const NamedTensor> params, double learning_rate);

/// epochs x (shuffle, then per minibatch: forward, cross-entropy, backward,
/// SGD step, zero grads). Bit-reproducible for a fixed (config, model).
/// Throws Diverged on a non-finite loss.
TrainReport train_model(Model& model, std::span<const RoiSample> train_set, const TrainConfig& config);

struct Evaluation {
  std::vector<std::size_t> predictions;
  std::vector<ProbVector> probabilities;
};

/// Eval-mode probabilities and argmax predictions in dataset order.
Evaluation evaluate_model(const Model& model, std::span<const RoiSample> test_set);

/// FNV-1a over the raw bytes of every parameter and buffer.
std::uint64_t parameter_checksum(const Model& model);

}  // namespace ecnn
