#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "ecnn/errors.hpp"
#include "ecnn/metrics.hpp"
#include "support/oracles.hpp"

using namespace ecnn;

namespace {

double round4(double v) { return std::round(v * 1e4) / 1e4; }

std::vector<std::string> tokens(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

MetricReport report_of(double a, double p, double r, double f) {
  MetricReport m;
  m.accuracy = a;
  m.macro_precision = p;
  m.macro_recall = r;
  m.macro_f1 = f;
  return m;
}

}  // namespace

TEST(Confusion, Accumulation) {
  ConfusionMatrix cm(3);
  cm.accumulate(0, 0);
  EXPECT_EQ(cm.count(0, 0), 1u);
  EXPECT_EQ(cm.total(), 1u);
  for (int i = 0; i < 9; ++i) cm.accumulate(i % 3, (i + 1) % 3);
  EXPECT_EQ(cm.total(), 10u);
  EXPECT_EQ(cm.row_sum(1), 3u);
  EXPECT_EQ(cm.column_sum(0), 4u);
  EXPECT_THROW(cm.accumulate(3, 0), InvalidArgument);
  EXPECT_THROW(ConfusionMatrix(0), InvalidArgument);
}

TEST(Confusion, OrderIndependent) {
  const std::vector<std::size_t> t{0, 1, 2, 2, 1, 0, 1}, p{1, 1, 2, 0, 0, 0, 2};
  std::vector<std::size_t> tr(t.rbegin(), t.rend()), pr(p.rbegin(), p.rend());
  EXPECT_EQ(confusion_from(t, p, 3), confusion_from(tr, pr, 3));
  EXPECT_THROW(confusion_from(t, std::vector<std::size_t>{0}, 3), InvalidArgument);
}

TEST(Report, PerfectDiagonal) {
  const std::vector<std::size_t> y{0, 1, 2, 2, 1};
  const MetricReport r = compute_report(confusion_from(y, y, 3));
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.macro_precision, 1.0);
  EXPECT_EQ(r.macro_recall, 1.0);
  EXPECT_EQ(r.macro_f1, 1.0);
}

TEST(Report, SixSampleExample) {
  const std::vector<std::size_t> t{0, 0, 1, 1, 2, 2}, p{0, 1, 1, 1, 2, 0};
  const MetricReport r = compute_report(confusion_from(t, p, 3));
  EXPECT_EQ(round4(r.accuracy), 0.6667);
  EXPECT_EQ(round4(r.macro_precision), 0.7222);
  EXPECT_EQ(round4(r.macro_recall), 0.6667);
  EXPECT_EQ(round4(r.macro_f1), 0.6556);
}

TEST(Report, ConstantPredictor) {
  const std::vector<std::size_t> t{0, 0, 1, 1, 2, 2}, p(6, 1);
  const MetricReport r = compute_report(confusion_from(t, p, 3));
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0 / 3);
  EXPECT_DOUBLE_EQ(r.macro_recall, 1.0 / 3);
  EXPECT_EQ(r.precision[0], 0.0);
  EXPECT_EQ(r.f1[2], 0.0);
}

TEST(Report, EmptyMatrixIsAnError) { EXPECT_THROW(compute_report(ConfusionMatrix(3)), InvalidArgument); }

TEST(Report, MatchesBruteForceOnRandomInstances) {
  SplitMix64 rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t k = std::vector<std::size_t>{2, 3, 5}[rng.below(3)];
    const std::size_t n = 1 + rng.below(50);
    std::vector<std::size_t> t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = rng.below(k), p[i] = rng.below(k);
    const MetricReport r = compute_report(confusion_from(t, p, k));
    const auto o = oracle::brute_force_metrics(t, p, k);
    EXPECT_EQ(r.accuracy, o.accuracy);
    EXPECT_EQ(r.macro_precision, o.precision);
    EXPECT_EQ(r.macro_recall, o.recall);
    EXPECT_EQ(r.macro_f1, o.f1);
    for (double v : {r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Report, InvariantUnderClassRelabeling) {
  const std::vector<std::size_t> t{0, 0, 1, 1, 2, 2, 2, 1}, p{0, 2, 1, 0, 2, 2, 1, 1};
  const std::vector<std::size_t> perm{2, 0, 1};
  std::vector<std::size_t> tp, pp;
  for (std::size_t i = 0; i < t.size(); ++i) tp.push_back(perm[t[i]]), pp.push_back(perm[p[i]]);
  const MetricReport a = compute_report(confusion_from(t, p, 3)), b = compute_report(confusion_from(tp, pp, 3));
  EXPECT_DOUBLE_EQ(a.macro_precision, b.macro_precision);
  EXPECT_DOUBLE_EQ(a.macro_recall, b.macro_recall);
  EXPECT_DOUBLE_EQ(a.macro_f1, b.macro_f1);
}

TEST(Table, EnsemblingRowRendersTableOneFigures) {
  const std::vector<ReportRow> rows{{"Ensembling", report_of(0.8833, 0.8562, 0.7629, 0.7582)}};
  const std::string table = format_table(rows);
  std::istringstream in(table);
  std::string header, line;
  std::getline(in, header);
  std::getline(in, line);
  EXPECT_EQ(tokens(header), (std::vector<std::string>{"Model", "Accuracy", "Precision", "Recall", "F1", "Score"}));
  EXPECT_EQ(tokens(line), (std::vector<std::string>{"Ensembling", "88.33", "85.62", "76.29", "75.82"}));
}

TEST(Table, PerfectScoreAndRowOrder) {
  const std::vector<ReportRow> rows{{"Zeta", report_of(1, 1, 1, 1)}, {"Alpha", report_of(0.5, 0.25, 0.125, 0)}};
  const std::string table = format_table(rows);
  const auto zeta = table.find("Zeta"), alpha = table.find("Alpha");
  ASSERT_NE(zeta, std::string::npos);
  EXPECT_LT(zeta, alpha);
  EXPECT_NE(table.find("100.00"), std::string::npos);
  EXPECT_NE(table.find("12.50"), std::string::npos);
  std::istringstream in(table);
  std::string first, second;
  std::getline(in, first);
  std::getline(in, second);
  EXPECT_EQ(first.size(), second.size());
}

TEST(ReportCsv, RoundTripAtFourDecimals) {
  const std::vector<ReportRow> rows{{"A", report_of(0.83333333, 0.8165, 0.6593, 0.6411)}};
  const std::string csv = format_report_csv(rows);
  EXPECT_EQ(csv, "model,accuracy,precision,recall,f1\nA,0.8333,0.8165,0.6593,0.6411\n");
  const auto back = parse_report_csv(csv);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].first, "A");
  EXPECT_EQ(back[0].second.accuracy, 0.8333);
  EXPECT_THROW(parse_report_csv("model,acc\n"), DataMismatch);
  EXPECT_THROW(parse_report_csv("model,accuracy,precision,recall,f1\nA,1,2\n"), DataMismatch);
}

TEST(ConfusionCsv, IntegerRows) {
  const std::vector<std::size_t> t{0, 1, 1, 2}, p{0, 1, 2, 2};
  EXPECT_EQ(format_confusion_csv(confusion_from(t, p, 3)), "1,0,0\n0,1,1\n0,0,1\n");
}
