#include "ecnn/training.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <numeric>

#include "ecnn/checkpoint.hpp"
#include "ecnn/errors.hpp"
#include "ecnn/random.hpp"

namespace ecnn {

void sgd_step(std::span<const NamedTensor> params, double learning_rate) {
  for (const auto& p : params) {
    if (!p.tensor.requires_grad()) continue;
    if (!p.tensor.has_grad()) throw InvalidState("sgd_step: parameter '" + p.name + "' has no gradient");
  }
  for (const auto& p : params) {
    if (!p.tensor.requires_grad()) continue;
    auto w = p.tensor.mutable_data();
    const auto g = p.tensor.grad();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= learning_rate * g[i];
  }
}

TrainReport train_model(Model& model, std::span<const RoiSample> train_set, const TrainConfig& config) {
  if (train_set.empty()) throw InvalidArgument("train_model: training set is empty");
  if (config.epochs == 0) throw InvalidArgument("train_model: epochs must be at least 1");
  if (config.batch_size == 0) throw InvalidArgument("train_model: batch_size must be at least 1");
  if (!(config.learning_rate >= 0.0) || !std::isfinite(config.learning_rate))
    throw InvalidArgument("train_model: learning rate must be finite and non-negative");
  for (const auto& s : train_set)
    if (s.label >= model.num_classes())
      throw InvalidArgument("train_model: label " + std::to_string(s.label) + " of '" + s.source_id +
                            "' exceeds class count " + std::to_string(model.num_classes()));

  const auto start = std::chrono::steady_clock::now();
  // Data order has its own stream, independent of weight initialization.
  SplitMix64 order_rng(SplitMix64::mix(config.seed, 0x5348554646ULL));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainReport report;
  model.zero_grad();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.shuffle)
      for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[order_rng.below(i + 1)]);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0, batch_no = 0; b < order.size(); b += config.batch_size, ++batch_no) {
      const std::span<const std::size_t> idx(order.data() + b, std::min(config.batch_size, order.size() - b));
      std::vector<std::size_t> labels;
      for (auto i : idx) labels.push_back(train_set[i].label);

      const Tensor logits = model.forward(stack_patches(train_set, idx), Mode::train);
      const Tensor loss = cross_entropy(logits, labels);
      if (!std::isfinite(loss.item()))
        throw Diverged(epoch + 1, batch_no + 1,
                       "non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                           std::to_string(batch_no + 1));
      loss.backward();
      sgd_step(model.parameters(), config.learning_rate);
      model.zero_grad();

      loss_sum += loss.item() * static_cast<double>(idx.size());
      const std::size_t k = logits.dim(1);
      for (std::size_t r = 0; r < idx.size(); ++r)
        correct += argmax_class(logits.data().subspan(r * k, k)) == labels[r];
    }
    report.epoch_loss.push_back(loss_sum / static_cast<double>(train_set.size()));
    report.epoch_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(train_set.size()));
  }
  report.parameter_checksum = parameter_checksum(model);
  report.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (config.checkpoint_path) save_checkpoint(model, *config.checkpoint_path);
  return report;
}

Evaluation evaluate_model(const Model& model, std::span<const RoiSample> test_set) {
  if (test_set.empty()) throw InvalidArgument("evaluate_model: test set is empty");
  constexpr std::size_t kChunk = 32;
  Evaluation ev;
  std::vector<std::size_t> idx;
  for (std::size_t b = 0; b < test_set.size(); b += kChunk) {
    idx.clear();
    for (std::size_t i = b; i < std::min(b + kChunk, test_set.size()); ++i) idx.push_back(i);
    for (auto& p : predict_probabilities(model, stack_patches(test_set, idx))) {
      ev.predictions.push_back(argmax_class(p));
      ev.probabilities.push_back(std::move(p));
    }
  }
  return ev;
}

std::uint64_t parameter_checksum(const Model& model) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto feed = [&h](std::span<const NamedTensor> tensors) {
    for (const auto& t : tensors)
      for (double v : t.tensor.data()) {
        unsigned char raw[sizeof v];
        std::memcpy(raw, &v, sizeof v);
        for (auto byte : raw) {
          h ^= byte;
          h *= 0x100000001B3ULL;
        }
      }
  };
  feed(model.parameters());
  feed(model.buffers());
  return h;
}

}  // namespace ecnn
