#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ecnn {

/// K x K counts; rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);

  void accumulate(std::size_t true_label, std::size_t predicted_label);

  std::size_t num_classes() const { return k_; }
  std::size_t count(std::size_t true_label, std::size_t predicted_label) const;
  std::size_t total() const { return total_; }
  std::size_t trace() const;
  std::size_t row_sum(std::size_t true_label) const;
  std::size_t column_sum(std::size_t predicted_label) const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t k_;
  std::vector<std::size_t> counts_;
  std::size_t total_ = 0;
};

ConfusionMatrix confusion_from(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                               std::size_t num_classes);

struct MetricReport {
  double accuracy = 0;
  double macro_precision = 0;
  double macro_recall = 0;
  double macro_f1 = 0;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
};

/// Accuracy plus macro-averaged precision/recall/F1. A class with no
/// predictions (or no true samples) scores 0 precision (or recall) and 0 F1.
MetricReport compute_report(const ConfusionMatrix& cm);

using ReportRow = std::pair<std::string, MetricReport>;

/// Fixed-width table, percentages with two decimals:
/// Model | Accuracy | Precision | Recall | F1 Score
std::string format_table(std::span<const ReportRow> rows);
/// `model,accuracy,precision,recall,f1` with 4-decimal fractions.
std::string format_report_csv(std::span<const ReportRow> rows);
/// Parses format_report_csv output back into rows (per-class lists empty).
std::vector<ReportRow> parse_report_csv(std::string_view csv);
/// K lines of K comma-separated integers.
std::string format_confusion_csv(const ConfusionMatrix& cm);

}  // namespace ecnn
