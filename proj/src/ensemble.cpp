#include "ecnn/ensemble.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "ecnn/errors.hpp"

namespace ecnn {
namespace {

std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  for (auto line : split(text, '\n')) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace

ProbVector::ProbVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw InvalidArgument("probability vector is empty");
  double total = 0.0;
  for (double v : values_) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("probability values must be finite and non-negative");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-6)
    throw InvalidArgument("probabilities sum to " + format_real(total) + ", expected 1");
}

FusedScores::FusedScores(std::vector<double> values, std::size_t model_count)
    : values_(std::move(values)), model_count_(model_count) {}

FusedScores fuse_sum(std::span<const ProbVector> probs) {
  if (probs.empty()) throw InvalidArgument("fuse_sum: no probability vectors");
  const std::size_t k = probs.front().size();
  for (const auto& p : probs)
    if (p.size() != k)
      throw InvalidShape("fuse_sum: class count " + std::to_string(p.size()) + " differs from " + std::to_string(k));
  std::vector<double> totals(k);
  std::vector<double> addends(probs.size());
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t m = 0; m < probs.size(); ++m) addends[m] = probs[m][j];
    std::sort(addends.begin(), addends.end());
    double acc = 0.0;
    for (double v : addends) acc += v;
    totals[j] = acc;
  }
  return FusedScores(std::move(totals), probs.size());
}

std::size_t argmax_class(std::span<const double> scores) {
  if (scores.empty()) throw InvalidArgument("argmax_class: no scores");
  std::size_t best = 0;
  for (std::size_t j = 1; j < scores.size(); ++j)
    if (scores[j] > scores[best]) best = j;
  return best;
}

std::vector<ProbVector> predict_probabilities(const Model& model, const Tensor& batch) {
  const Tensor probs = softmax(model.forward(batch, Mode::eval));
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  const auto values = probs.data();
  std::vector<ProbVector> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.emplace_back(std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(i * k),
                                         values.begin() + static_cast<std::ptrdiff_t>((i + 1) * k)));
  return out;
}

std::vector<std::size_t> predict_ensemble(std::span<const Model* const> models, const Tensor& batch) {
  if (models.empty()) throw InvalidArgument("predict_ensemble: no models");
  const Model& ref = *models.front();
  for (const Model* m : models)
    if (m->num_classes() != ref.num_classes() || m->resolution() != ref.resolution() ||
        m->input_channels() != ref.input_channels())
      throw IncompatibleEnsemble("ensemble members disagree: " + ref.family() + " has " +
                                 std::to_string(ref.num_classes()) + " classes at " +
                                 std::to_string(ref.resolution()) + "px, " + m->family() + " has " +
                                 std::to_string(m->num_classes()) + " classes at " + std::to_string(m->resolution()) +
                                 "px");
  std::vector<std::vector<ProbVector>> per_model;
  for (const Model* m : models) per_model.push_back(predict_probabilities(*m, batch));

  const std::size_t n = per_model.front().size();
  std::vector<std::size_t> out(n);
  std::vector<ProbVector> members;
  for (std::size_t i = 0; i < n; ++i) {
    members.clear();
    for (const auto& pm : per_model) members.push_back(pm[i]);
    out[i] = argmax_class(fuse_sum(members));
  }
  return out;
}

std::string format_prob_csv(const ProbTable& table) {
  std::string out = "sample_id";
  const std::size_t k = table.rows.empty() ? 0 : table.rows.front().size();
  for (std::size_t j = 0; j < k; ++j) out += ",p" + std::to_string(j);
  out += "\n";
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    out += table.sample_ids[i];
    for (double v : table.rows[i].values()) out += "," + format_real(v);
    out += "\n";
  }
  return out;
}

ProbTable parse_prob_csv(std::string_view csv) {
  const auto lines = lines_of(csv);
  if (lines.empty()) throw DataMismatch("probability file is empty");
  const auto header = split(lines.front(), ',');
  if (header.size() < 2 || header.front() != "sample_id")
    throw DataMismatch("probability file: expected header 'sample_id,p0,...'");
  const std::size_t k = header.size() - 1;
  for (std::size_t j = 0; j < k; ++j)
    if (header[j + 1] != "p" + std::to_string(j))
      throw DataMismatch("probability file: header column " + std::to_string(j + 2) + " should be p" +
                         std::to_string(j));
  ProbTable table;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split(lines[i], ',');
    if (cells.size() != k + 1)
      throw DataMismatch("probability file line " + std::to_string(i + 1) + ": expected " + std::to_string(k + 1) +
                         " fields");
    std::vector<double> values(k);
    for (std::size_t j = 0; j < k; ++j) {
      const auto cell = cells[j + 1];
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), values[j]);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
        throw DataMismatch("probability file line " + std::to_string(i + 1) + ": bad number '" + std::string(cell) +
                           "'");
    }
    table.sample_ids.emplace_back(cells.front());
    try {
      table.rows.emplace_back(std::move(values));
    } catch (const InvalidArgument& e) {
      throw DataMismatch("probability file line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return table;
}

FusedTable fuse_tables(std::span<const ProbTable> tables) {
  if (tables.empty()) throw InvalidArgument("fuse_tables: no probability tables");
  const ProbTable& ref = tables.front();
  for (std::size_t t = 1; t < tables.size(); ++t) {
    const auto& other = tables[t];
    const std::size_t n = std::max(ref.sample_ids.size(), other.sample_ids.size());
    for (std::size_t i = 0; i < n; ++i) {
      const bool in_ref = i < ref.sample_ids.size(), in_other = i < other.sample_ids.size();
      if (!in_ref || !in_other || ref.sample_ids[i] != other.sample_ids[i])
        throw DataMismatch("sample id mismatch at row " + std::to_string(i + 1) + ": '" +
                           (in_ref ? ref.sample_ids[i] : std::string("<missing>")) + "' vs '" +
                           (in_other ? other.sample_ids[i] : std::string("<missing>")) + "' in file " +
                           std::to_string(t + 1));
      if (ref.rows[i].size() != other.rows[i].size())
        throw DataMismatch("class count mismatch for sample '" + ref.sample_ids[i] + "'");
    }
  }
  FusedTable out;
  out.sample_ids = ref.sample_ids;
  std::vector<ProbVector> members;
  for (std::size_t i = 0; i < ref.sample_ids.size(); ++i) {
    members.clear();
    for (const auto& t : tables) members.push_back(t.rows[i]);
    auto fused = fuse_sum(members);
    out.predictions.push_back(argmax_class(fused));
    out.scores.push_back(std::move(fused));
  }
  return out;
}

std::string format_fused_csv(const FusedTable& table) {
  std::string out = "sample_id,prediction";
  const std::size_t k = table.scores.empty() ? 0 : table.scores.front().size();
  for (std::size_t j = 0; j < k; ++j) out += ",s" + std::to_string(j);
  out += "\n";
  for (std::size_t i = 0; i < table.sample_ids.size(); ++i) {
    out += table.sample_ids[i] + "," + std::to_string(table.predictions[i]);
    for (double v : table.scores[i].values()) out += "," + format_real(v);
    out += "\n";
  }
  return out;
}

}  // namespace ecnn
