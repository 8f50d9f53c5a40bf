#include "camtrap/evaluation.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "camtrap/csv.hpp"
#include "camtrap/error.hpp"
#include "camtrap/fileio.hpp"

namespace camtrap {

using nlohmann::json;

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> class_names)
    : class_names_(std::move(class_names)),
      counts_(class_names_.size() * class_names_.size(), 0) {
  if (class_names_.empty()) throw ValidationError("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted, std::uint64_t n) {
  if (truth >= classes() || predicted >= classes()) {
    throw ValidationError("confusion matrix index out of range");
  }
  counts_[truth * classes() + predicted] += n;
}

std::uint64_t ConfusionMatrix::total() const noexcept {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::uint64_t s = 0;
  for (std::size_t c = 0; c < classes(); ++c) s += at(truth, c);
  return s;
}

std::uint64_t ConfusionMatrix::column_sum(std::size_t predicted) const {
  std::uint64_t s = 0;
  for (std::size_t r = 0; r < classes(); ++r) s += at(r, predicted);
  return s;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t s = 0;
  for (std::size_t c = 0; c < classes(); ++c) s += at(c, c);
  return s;
}

ConfusionMatrix confusion_matrix(std::span<const int> truths, std::span<const int> preds,
                                 std::vector<std::string> class_names) {
  if (truths.size() != preds.size()) {
    throw ValidationError("truths and predictions differ in length (" +
                          std::to_string(truths.size()) + " vs " + std::to_string(preds.size()) +
                          ")");
  }
  ConfusionMatrix cm(std::move(class_names));
  const auto k = static_cast<int>(cm.classes());
  std::vector<std::string> bad;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (truths[i] < 0 || truths[i] >= k || preds[i] < 0 || preds[i] >= k) {
      bad.push_back("position " + std::to_string(i));
      continue;
    }
    cm.add(static_cast<std::size_t>(truths[i]), static_cast<std::size_t>(preds[i]));
  }
  if (!bad.empty()) throw ValidationError("labels outside the class list", bad);
  return cm;
}

ConfusionMatrix confusion_matrix(std::span<const std::string> truths,
                                 std::span<const std::string> preds,
                                 std::vector<std::string> class_names) {
  if (truths.size() != preds.size()) {
    throw ValidationError("truths and predictions differ in length (" +
                          std::to_string(truths.size()) + " vs " + std::to_string(preds.size()) +
                          ")");
  }
  std::map<std::string_view, int> index;
  for (std::size_t i = 0; i < class_names.size(); ++i) {
    index.emplace(class_names[i], static_cast<int>(i));
  }
  std::vector<int> t(truths.size()), p(preds.size());
  std::vector<std::string> unknown;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const auto ti = index.find(truths[i]);
    const auto pi = index.find(preds[i]);
    if (ti == index.end()) unknown.push_back(truths[i]);
    if (pi == index.end()) unknown.push_back(preds[i]);
    t[i] = ti == index.end() ? -1 : ti->second;
    p[i] = pi == index.end() ? -1 : pi->second;
  }
  if (!unknown.empty()) throw ValidationError("unknown class labels", unknown);
  return confusion_matrix(t, p, std::move(class_names));
}

MetricsReport metrics(const ConfusionMatrix& cm) {
  MetricsReport r;
  r.total = cm.total();
  r.accuracy = r.total == 0 ? 0.0
                            : static_cast<double>(cm.trace()) / static_cast<double>(r.total);
  const std::size_t k = cm.classes();
  for (std::size_t c = 0; c < k; ++c) {
    ClassMetrics m;
    m.name = cm.class_names()[c];
    m.support = cm.row_sum(c);
    m.predicted = cm.column_sum(c);
    const auto hits = static_cast<double>(cm.at(c, c));
    m.precision_defined = m.predicted > 0;
    m.recall_defined = m.support > 0;
    m.precision = m.precision_defined ? hits / static_cast<double>(m.predicted) : 0.0;
    m.recall = m.recall_defined ? hits / static_cast<double>(m.support) : 0.0;
    m.f1_defined = m.precision + m.recall > 0.0;
    m.f1 = m.f1_defined ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    r.macro_precision += m.precision;
    r.macro_recall += m.recall;
    r.macro_f1 += m.f1;
    r.per_class.push_back(std::move(m));
  }
  r.macro_precision /= static_cast<double>(k);
  r.macro_recall /= static_cast<double>(k);
  r.macro_f1 /= static_cast<double>(k);
  return r;
}

std::vector<std::size_t> per_class_flags(const MetricsReport& report, double threshold) {
  std::vector<std::size_t> flagged;
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    if (report.per_class[c].f1 < threshold) flagged.push_back(c);
  }
  std::stable_sort(flagged.begin(), flagged.end(), [&](std::size_t a, std::size_t b) {
    return report.per_class[a].f1 < report.per_class[b].f1;
  });
  return flagged;
}

json to_json(const MetricsReport& report) {
  json classes = json::array();
  for (const auto& m : report.per_class) {
    json undefined = json::array();
    if (!m.precision_defined) undefined.push_back("precision");
    if (!m.recall_defined) undefined.push_back("recall");
    if (!m.f1_defined) undefined.push_back("f1");
    classes.push_back({{"class", m.name},
                       {"precision", m.precision},
                       {"recall", m.recall},
                       {"f1", m.f1},
                       {"support", m.support},
                       {"predicted", m.predicted},
                       {"undefined", undefined}});
  }
  return json{{"total", report.total},
              {"accuracy", report.accuracy},
              {"averaging",
               "macro: unweighted mean over classes; a zero denominator counts as 0 and is "
               "listed under \"undefined\""},
              {"macro_precision", report.macro_precision},
              {"macro_recall", report.macro_recall},
              {"macro_f1", report.macro_f1},
              {"per_class", classes}};
}

json to_json(const ConfusionMatrix& cm) {
  json rows = json::array();
  for (std::size_t r = 0; r < cm.classes(); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < cm.classes(); ++c) row.push_back(cm.at(r, c));
    rows.push_back(row);
  }
  return json{{"orientation", "rows=true class, columns=predicted class"},
              {"class_names", cm.class_names()},
              {"counts", rows}};
}

std::string report_to_csv(const MetricsReport& report) {
  std::string out = "class,precision,recall,f1,support,undefined\n";
  for (const auto& m : report.per_class) {
    std::string undefined;
    for (auto [flag, name] : {std::pair{m.precision_defined, "precision"},
                              std::pair{m.recall_defined, "recall"},
                              std::pair{m.f1_defined, "f1"}}) {
      if (flag) continue;
      if (!undefined.empty()) undefined += ";";
      undefined += name;
    }
    out += csv::format_row({m.name, format_real(m.precision), format_real(m.recall),
                            format_real(m.f1), std::to_string(m.support), undefined});
  }
  out += csv::format_row({"macro", format_real(report.macro_precision),
                          format_real(report.macro_recall), format_real(report.macro_f1),
                          std::to_string(report.total), ""});
  return out;
}

std::string confusion_to_csv(const ConfusionMatrix& cm) {
  csv::Row header{"true\\predicted"};
  header.insert(header.end(), cm.class_names().begin(), cm.class_names().end());
  std::string out = csv::format_row(header);
  for (std::size_t r = 0; r < cm.classes(); ++r) {
    csv::Row row{cm.class_names()[r]};
    for (std::size_t c = 0; c < cm.classes(); ++c) row.push_back(std::to_string(cm.at(r, c)));
    out += csv::format_row(row);
  }
  return out;
}

}  // namespace camtrap
