#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "camtrap/classifier.hpp"
#include "camtrap/embedding.hpp"
#include "camtrap/evaluation.hpp"

namespace camtrap {

enum class Strategy { least_confidence, margin, entropy, random };

std::string_view to_string(Strategy strategy) noexcept;
Strategy strategy_from_string(std::string_view name);

/// 1 - max p.
double score_least_confidence(std::span<const double> probs);
/// 1 - (p(1) - p(2)) over the two largest entries.
double score_margin(std::span<const double> probs);
/// Shannon entropy in nats with 0 ln 0 = 0.
double score_entropy(std::span<const double> probs);
/// Uncertainty score for least_confidence, margin or entropy. random has no score.
double uncertainty(Strategy strategy, std::span<const double> probs);

struct QueryItem {
  std::string crop_id;
  double score = 0.0;
  std::vector<double> probs;

  friend bool operator==(const QueryItem&, const QueryItem&) = default;
};

struct QueryBatch {
  std::size_t round = 0;
  std::vector<QueryItem> items;  // descending score, ties by ascending crop id

  friend bool operator==(const QueryBatch&, const QueryBatch&) = default;
};

nlohmann::json to_json(const QueryBatch& batch);
QueryBatch query_batch_from_json(const nlohmann::json& j);

/// Top-`batch_size` items by score with ties broken by ascending crop id. For the random
/// strategy each candidate's score is replaced by a uniform key drawn from `seed` in
/// crop-id order, which yields a uniform sample without replacement.
/// Throws ValidationError when batch_size is 0.
QueryBatch select_batch(std::vector<QueryItem> candidates, std::size_t batch_size,
                        Strategy strategy, std::uint64_t seed, std::size_t round = 0);

struct PoolState {
  std::map<std::string, int> labeled;  // crop id -> class index
  std::vector<std::string> unlabeled;  // ascending crop id
  std::size_t round = 0;
  std::size_t label_budget = 0;
  Strategy strategy = Strategy::entropy;
  std::size_t batch_size_query = 25;
  std::uint64_t seed = 0;

  std::size_t pool_size() const noexcept { return labeled.size() + unlabeled.size(); }
  bool budget_exhausted() const noexcept { return labeled.size() >= label_budget; }
  bool is_unlabeled(std::string_view crop_id) const;

  friend bool operator==(const PoolState&, const PoolState&) = default;
};

/// Builds a pool with every id unlabeled.
PoolState make_pool(std::vector<std::string> ids, std::size_t label_budget, Strategy strategy,
                    std::size_t batch_size_query, std::uint64_t seed);

/// Moves ids from unlabeled to labeled. All-or-nothing: an id that is already labeled,
/// not in the pool, submitted twice, or paired with an unknown class name throws
/// ValidationError listing every offender, and `state` is left untouched.
PoolState apply_labels(const PoolState& state,
                       std::span<const std::pair<std::string, std::string>> labels,
                       std::span<const std::string> class_names);

/// Index-labelled variant used by simulation.
PoolState apply_labels(const PoolState& state,
                       std::span<const std::pair<std::string, int>> labels,
                       std::size_t classes);

struct CurvePoint {
  std::size_t labels_used = 0;
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;

  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

class LearningCurve {
 public:
  /// Throws ValidationError unless labels_used exceeds the previous point's.
  void append(const CurvePoint& point);
  const std::vector<CurvePoint>& points() const noexcept { return points_; }
  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }

  /// `labels_used,accuracy,macro_precision,macro_recall,macro_f1`, shortest round-trip reals.
  std::string to_csv() const;

  friend bool operator==(const LearningCurve&, const LearningCurve&) = default;

 private:
  std::vector<CurvePoint> points_;
};

nlohmann::json to_json(const CurvePoint& point);
CurvePoint curve_point_from_json(const nlohmann::json& j);

/// Held-out examples; never part of the pool.
struct ValidationSet {
  std::vector<std::string> ids;
  std::vector<int> labels;

  friend bool operator==(const ValidationSet&, const ValidationSet&) = default;
};

struct RoundResult {
  PoolState state;                  // round incremented
  HeadModel model;                  // trained from zero init on the labeled set
  TrainHistory history;
  ConfusionMatrix confusion;        // on the validation set
  MetricsReport report;
  CurvePoint point;
  std::optional<QueryBatch> batch;  // empty when the loop is finished
  bool finished = false;
  std::string stop_reason;          // "budget exhausted" or "pool exhausted"
};

/// One cycle: retrain the head from scratch on the labeled set, evaluate on the
/// validation set, then score the unlabeled pool and select the next query batch
/// (capped by the remaining label budget). Throws ValidationError when nothing is
/// labeled yet.
RoundResult run_round(const PoolState& state, const EmbeddingStore& embeddings,
                      const ValidationSet& validation, const TrainConfig& train_config,
                      const std::vector<std::string>& class_names);

/// Pool items with hidden ground truth.
struct LabeledDataset {
  EmbeddingStore embeddings;
  std::map<std::string, int> labels;
  std::vector<std::string> class_names;
};

/// Class means are seeded random unit vectors scaled by `separation`; each example is
/// its class mean plus N(0, noise_sigma^2) noise. Crop ids are assigned in a seeded
/// random order so id order carries no class information.
LabeledDataset generate_synthetic_pool(std::vector<std::string> class_names, std::size_t dim,
                                       std::span<const std::size_t> counts, double separation,
                                       double noise_sigma, std::uint64_t seed);

/// Counts of the fifteen-grouping benchmark: each divided by `divisor`, rounded half away
/// from zero, floored at `minimum`.
std::vector<std::size_t> benchmark_counts(std::size_t divisor = 10, std::size_t minimum = 2);

/// The fifteen-class benchmark dataset: benchmark_counts(), d = 32, separation 4, sigma 1.
LabeledDataset make_benchmark_dataset(std::uint64_t seed);

struct DataSplit {
  std::vector<std::string> pool;
  ValidationSet validation;
};

/// Stratified split: round(fraction * n_c) examples of each class go to validation.
DataSplit split_validation(const LabeledDataset& data, double fraction, std::uint64_t seed);

/// Up to `per_class` randomly chosen ids of each class (fewer when a class is smaller).
std::vector<std::string> stratified_seed_set(std::span<const std::string> pool,
                                             const std::map<std::string, int>& labels,
                                             std::size_t per_class, std::uint64_t seed);

/// `count` ids drawn uniformly without replacement; the live-mode seed round.
std::vector<std::string> random_seed_set(std::span<const std::string> pool, std::size_t count,
                                         std::uint64_t seed);

struct SimulationConfig {
  Strategy strategy = Strategy::entropy;
  std::size_t batch_size = 25;
  std::size_t budget = 0;  // 0 means the whole pool
  std::size_t seed_per_class = 2;
  std::uint64_t seed = 0;
  TrainConfig train;
};

struct SimulationResult {
  LearningCurve curve;
  std::vector<QueryBatch> batches;
  std::vector<CurvePoint> points;
  HeadModel final_model;
  PoolState final_state;
  MetricsReport final_report;
};

/// Runs the loop to completion, answering every query from the hidden labels.
/// `pool` lists the queryable ids; `validation` must be disjoint from it
/// (ValidationError otherwise).
SimulationResult simulate(const LabeledDataset& data, std::span<const std::string> pool,
                          const ValidationSet& validation, const SimulationConfig& config);

/// split_validation with fraction 0.2 followed by simulate.
SimulationResult simulate(const LabeledDataset& data, const SimulationConfig& config);

}  // namespace camtrap
