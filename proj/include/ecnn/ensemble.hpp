#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ecnn/architectures.hpp"

namespace ecnn {

/// Class-probability distribution produced by one model for one input.
class ProbVector {
 public:
  /// Throws InvalidArgument unless every value is >= 0 and they sum to 1 within 1e-6.
  explicit ProbVector(std::vector<double> values);

  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

 private:
  std::vector<double> values_;
};

/// Elementwise sum of M probability vectors.
class FusedScores {
 public:
  FusedScores(std::vector<double> values, std::size_t model_count);

  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  std::size_t model_count() const { return model_count_; }
  double operator[](std::size_t i) const { return values_[i]; }

 private:
  std::vector<double> values_;
  std::size_t model_count_;
};

/// Sum of the class probabilities of every member. Each class total is
/// accumulated in ascending order of its addends, so the result is
/// bit-identical for every ordering of `probs`.
FusedScores fuse_sum(std::span<const ProbVector> probs);

/// Index of the largest score; ties go to the lowest index.
std::size_t argmax_class(std::span<const double> scores);
inline std::size_t argmax_class(const FusedScores& scores) { return argmax_class(scores.values()); }
inline std::size_t argmax_class(const ProbVector& probs) { return argmax_class(probs.values()); }

/// softmax(forward(model, batch)) in eval mode, one ProbVector per row.
std::vector<ProbVector> predict_probabilities(const Model& model, const Tensor& batch);

/// Sum-then-argmax over the members, per sample of `batch`.
std::vector<std::size_t> predict_ensemble(std::span<const Model* const> models, const Tensor& batch);

/// Per-model probability table: header `sample_id,p0,...,p{K-1}`.
struct ProbTable {
  std::vector<std::string> sample_ids;
  std::vector<ProbVector> rows;
};

std::string format_prob_csv(const ProbTable& table);
/// Throws DataMismatch on malformed rows or inconsistent class counts.
ProbTable parse_prob_csv(std::string_view csv);

struct FusedTable {
  std::vector<std::string> sample_ids;
  std::vector<FusedScores> scores;
  std::vector<std::size_t> predictions;
};

/// Offline fusion of tables that list the same sample ids in the same order.
/// Throws DataMismatch naming the first offending id.
FusedTable fuse_tables(std::span<const ProbTable> tables);
/// Header `sample_id,prediction,s0,...,s{K-1}`.
std::string format_fused_csv(const FusedTable& table);

}  // namespace ecnn
