#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace camtrap {

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::vector<std::string> class_names);

  std::size_t classes() const noexcept { return class_names_.size(); }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }

  std::uint64_t at(std::size_t truth, std::size_t predicted) const {
    return counts_[truth * classes() + predicted];
  }
  void add(std::size_t truth, std::size_t predicted, std::uint64_t n = 1);

  std::uint64_t total() const noexcept;
  std::uint64_t row_sum(std::size_t truth) const;
  std::uint64_t column_sum(std::size_t predicted) const;
  std::uint64_t trace() const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::vector<std::string> class_names_;
  std::vector<std::uint64_t> counts_;
};

/// Throws ValidationError on length mismatch or a label outside [0, K).
ConfusionMatrix confusion_matrix(std::span<const int> truths, std::span<const int> preds,
                                 std::vector<std::string> class_names);

/// Name-based variant; unknown names throw ValidationError.
ConfusionMatrix confusion_matrix(std::span<const std::string> truths,
                                 std::span<const std::string> preds,
                                 std::vector<std::string> class_names);

struct ClassMetrics {
  std::string name;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;    // row sum
  std::uint64_t predicted = 0;  // column sum
  // false where the ratio had a zero denominator and was reported as 0
  bool precision_defined = true;
  bool recall_defined = true;
  bool f1_defined = true;
};

struct MetricsReport {
  std::uint64_t total = 0;
  double accuracy = 0.0;
  std::vector<ClassMetrics> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
};

/// Accuracy plus per-class and macro (unweighted mean) precision, recall and F1.
/// Zero denominators yield 0 and clear the matching *_defined flag.
MetricsReport metrics(const ConfusionMatrix& cm);

/// Indices of classes with f1 < threshold, sorted by f1 ascending then index.
std::vector<std::size_t> per_class_flags(const MetricsReport& report, double threshold);

nlohmann::json to_json(const MetricsReport& report);
nlohmann::json to_json(const ConfusionMatrix& cm);

/// One row per class followed by a "macro" row.
std::string report_to_csv(const MetricsReport& report);

/// Header row and first column carry class names; the corner cell names the orientation.
std::string confusion_to_csv(const ConfusionMatrix& cm);

}  // namespace camtrap
