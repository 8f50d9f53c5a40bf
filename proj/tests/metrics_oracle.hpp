#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "camtrap/evaluation.hpp"
#include "camtrap/random.hpp"

namespace testing {

// Exact ratio n / d reduced to lowest terms; 0/0 is represented as 0/1.
struct Ratio {
  std::uint64_t num = 0;
  std::uint64_t den = 1;
  Ratio(std::uint64_t n, std::uint64_t d) {
    if (d == 0) return;
    const auto g = std::gcd(n, d);
    num = n / g;
    den = d / g;
  }
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

// Counts straight from the label lists, without a confusion matrix. F1 uses
// 2 tp / (predicted + actual), which equals the harmonic mean whenever it is defined.
struct BruteForce {
  std::vector<std::vector<std::uint64_t>> cells;
  Ratio accuracy{0, 0};
  std::vector<Ratio> precision, recall, f1;
  double macro_precision = 0, macro_recall = 0, macro_f1 = 0;

  BruteForce(const std::vector<int>& truths, const std::vector<int>& preds, std::size_t k)
      : cells(k, std::vector<std::uint64_t>(k, 0)) {
    std::uint64_t correct = 0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
      if (truths[i] == preds[i]) ++correct;
    }
    accuracy = Ratio(correct, truths.size());
    for (std::size_t c = 0; c < k; ++c) {
      std::uint64_t tp = 0, predicted = 0, actual = 0;
      for (std::size_t i = 0; i < truths.size(); ++i) {
        const bool t = truths[i] == static_cast<int>(c);
        const bool p = preds[i] == static_cast<int>(c);
        tp += t && p;
        predicted += p;
        actual += t;
        for (std::size_t c2 = 0; c2 < k; ++c2) {
          if (t && preds[i] == static_cast<int>(c2)) ++cells[c][c2];
        }
      }
      precision.emplace_back(tp, predicted);
      recall.emplace_back(tp, actual);
      f1.emplace_back(2 * tp, predicted + actual);
    }
    for (std::size_t c = 0; c < k; ++c) {
      macro_precision += precision[c].value();
      macro_recall += recall[c].value();
      macro_f1 += f1[c].value();
    }
    macro_precision /= static_cast<double>(k);
    macro_recall /= static_cast<double>(k);
    macro_f1 /= static_cast<double>(k);
  }
};

struct OracleInstance {
  std::vector<int> truths, preds;
  std::size_t classes = 0;
};

inline OracleInstance random_instance(camtrap::Rng& rng) {
  OracleInstance inst;
  inst.classes = 1 + rng.below(15);
  const auto n = rng.below(200);
  // Skewed predictions so some classes are never predicted or never present.
  const double accuracy = rng.uniform();
  for (std::uint64_t i = 0; i < n; ++i) {
    const int t = static_cast<int>(rng.below(inst.classes));
    const int p = rng.uniform() < accuracy ? t : static_cast<int>(rng.below(inst.classes));
    inst.truths.push_back(t);
    inst.preds.push_back(p);
  }
  return inst;
}

inline std::vector<std::string> class_names(std::size_t k) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back("c" + std::to_string(i));
  return out;
}

// Largest absolute difference between metrics() and the brute-force counter, or
// infinity when the confusion matrix itself differs.
inline double oracle_discrepancy(const OracleInstance& inst) {
  const auto cm = camtrap::confusion_matrix(inst.truths, inst.preds, class_names(inst.classes));
  const BruteForce oracle(inst.truths, inst.preds, inst.classes);
  for (std::size_t r = 0; r < inst.classes; ++r) {
    for (std::size_t c = 0; c < inst.classes; ++c) {
      if (cm.at(r, c) != oracle.cells[r][c]) return INFINITY;
    }
  }
  if (cm.total() != inst.truths.size()) return INFINITY;
  const auto report = camtrap::metrics(cm);
  double worst = std::abs(report.accuracy - oracle.accuracy.value());
  for (std::size_t c = 0; c < inst.classes; ++c) {
    worst = std::max(worst, std::abs(report.per_class[c].precision - oracle.precision[c].value()));
    worst = std::max(worst, std::abs(report.per_class[c].recall - oracle.recall[c].value()));
    worst = std::max(worst, std::abs(report.per_class[c].f1 - oracle.f1[c].value()));
  }
  worst = std::max(worst, std::abs(report.macro_precision - oracle.macro_precision));
  worst = std::max(worst, std::abs(report.macro_recall - oracle.macro_recall));
  worst = std::max(worst, std::abs(report.macro_f1 - oracle.macro_f1));
  return worst;
}

}  // namespace testing
