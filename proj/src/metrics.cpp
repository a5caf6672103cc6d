#include "ecnn/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "ecnn/errors.hpp"

namespace ecnn {
namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes) : k_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes == 0) throw InvalidArgument("confusion matrix needs at least one class");
}

void ConfusionMatrix::accumulate(std::size_t true_label, std::size_t predicted_label) {
  if (true_label >= k_ || predicted_label >= k_)
    throw InvalidArgument("label pair (" + std::to_string(true_label) + "," + std::to_string(predicted_label) +
                          ") out of range for " + std::to_string(k_) + " classes");
  ++counts_[true_label * k_ + predicted_label];
  ++total_;
}

std::size_t ConfusionMatrix::count(std::size_t t, std::size_t p) const {
  if (t >= k_ || p >= k_) throw InvalidArgument("confusion matrix index out of range");
  return counts_[t * k_ + p];
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t s = 0;
  for (std::size_t j = 0; j < k_; ++j) s += counts_[j * k_ + j];
  return s;
}

std::size_t ConfusionMatrix::row_sum(std::size_t t) const {
  std::size_t s = 0;
  for (std::size_t p = 0; p < k_; ++p) s += count(t, p);
  return s;
}

std::size_t ConfusionMatrix::column_sum(std::size_t p) const {
  std::size_t s = 0;
  for (std::size_t t = 0; t < k_; ++t) s += count(t, p);
  return s;
}

ConfusionMatrix confusion_from(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                               std::size_t num_classes) {
  if (truth.size() != predicted.size())
    throw InvalidArgument("confusion_from: " + std::to_string(truth.size()) + " labels vs " +
                          std::to_string(predicted.size()) + " predictions");
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) cm.accumulate(truth[i], predicted[i]);
  return cm;
}

MetricReport compute_report(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw InvalidArgument("compute_report: confusion matrix is empty");
  const std::size_t k = cm.num_classes();
  MetricReport r;
  r.accuracy = ratio(cm.trace(), cm.total());
  for (std::size_t j = 0; j < k; ++j) {
    const double p = ratio(cm.count(j, j), cm.column_sum(j));
    const double rc = ratio(cm.count(j, j), cm.row_sum(j));
    r.precision.push_back(p);
    r.recall.push_back(rc);
    r.f1.push_back(p + rc > 0.0 ? 2.0 * p * rc / (p + rc) : 0.0);
  }
  auto mean = [k](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(k);
  };
  r.macro_precision = mean(r.precision);
  r.macro_recall = mean(r.recall);
  r.macro_f1 = mean(r.f1);
  return r;
}

std::string format_table(std::span<const ReportRow> rows) {
  static constexpr const char* kHeaders[] = {"Accuracy", "Precision", "Recall", "F1 Score"};
  std::size_t name_width = 5;
  for (const auto& [name, _] : rows) name_width = std::max(name_width, name.size());

  std::ostringstream out;
  auto pad_right = [](const std::string& s, std::size_t w) { return s + std::string(w - s.size(), ' '); };
  auto pad_left = [](const std::string& s, std::size_t w) {
    return std::string(s.size() < w ? w - s.size() : 0, ' ') + s;
  };
  out << pad_right("Model", name_width);
  for (const char* h : kHeaders) out << "  " << pad_left(h, 9);
  out << "\n";
  for (const auto& [name, r] : rows) {
    out << pad_right(name, name_width);
    for (double v : {r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1})
      out << "  " << pad_left(fixed(100.0 * v, 2), 9);
    out << "\n";
  }
  return out.str();
}

std::string format_report_csv(std::span<const ReportRow> rows) {
  std::string out = "model,accuracy,precision,recall,f1\n";
  for (const auto& [name, r] : rows)
    out += name + "," + fixed(r.accuracy, 4) + "," + fixed(r.macro_precision, 4) + "," + fixed(r.macro_recall, 4) +
           "," + fixed(r.macro_f1, 4) + "\n";
  return out;
}

std::vector<ReportRow> parse_report_csv(std::string_view csv) {
  std::istringstream in{std::string(csv)};
  std::string line;
  std::vector<ReportRow> rows;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != "model,accuracy,precision,recall,f1")
        throw DataMismatch("metrics file: expected header 'model,accuracy,precision,recall,f1'");
      continue;
    }
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
    if (cells.size() != 5) throw DataMismatch("metrics file line " + std::to_string(line_no) + ": expected 5 fields");
    MetricReport r;
    try {
      r.accuracy = std::stod(cells[1]);
      r.macro_precision = std::stod(cells[2]);
      r.macro_recall = std::stod(cells[3]);
      r.macro_f1 = std::stod(cells[4]);
    } catch (const std::logic_error&) {
      throw DataMismatch("metrics file line " + std::to_string(line_no) + ": malformed number");
    }
    rows.emplace_back(cells[0], std::move(r));
  }
  if (line_no == 0) throw DataMismatch("metrics file is empty");
  return rows;
}

std::string format_confusion_csv(const ConfusionMatrix& cm) {
  std::string out;
  for (std::size_t t = 0; t < cm.num_classes(); ++t) {
    for (std::size_t p = 0; p < cm.num_classes(); ++p) {
      if (p) out += ",";
      out += std::to_string(cm.count(t, p));
    }
    out += "\n";
  }
  return out;
}

}  // namespace ecnn
