#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "camtrap/embedding.hpp"

namespace camtrap {

/// Linear softmax head: logits = W e + b with W stored row-major (classes x dim).
struct HeadModel {
  std::size_t classes = 0;
  std::size_t dim = 0;
  std::vector<double> weights;
  std::vector<double> bias;
  std::vector<std::string> class_names;

  static HeadModel zeros(std::vector<std::string> class_names, std::size_t dim);

  double weight(std::size_t k, std::size_t j) const { return weights[k * dim + j]; }
  std::span<const double> row(std::size_t k) const {
    return std::span<const double>(weights).subspan(k * dim, dim);
  }

  /// Throws ValidationError when shapes disagree, names repeat or a parameter is non-finite.
  void validate() const;

  double frobenius_norm() const;

  friend bool operator==(const HeadModel&, const HeadModel&) = default;
};

enum class WeightMode { none, inverse_frequency };

std::string_view to_string(WeightMode mode) noexcept;
WeightMode weight_mode_from_string(std::string_view name);

struct TrainConfig {
  double learning_rate = 0.1;
  double momentum = 0.9;
  double l2_lambda = 1e-4;
  std::size_t batch_size = 64;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  WeightMode weight_mode = WeightMode::inverse_frequency;
  double weight_cap = 50.0;

  /// Throws ValidationError naming the offending field.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Per-class loss multipliers.
using ClassWeights = std::vector<double>;

/// none: all ones. inverse_frequency: min(cap, N / (K n_c)), which requires n_c >= 1;
/// a zero count throws ValidationError naming the class.
ClassWeights class_weights(std::span<const std::size_t> counts, WeightMode mode, double cap,
                           std::span<const std::string> class_names = {});

/// Weights for a training set that may not cover every class yet: classes without
/// examples get weight 1 and the remaining K present classes are weighted among
/// themselves.
ClassWeights training_weights(std::span<const std::size_t> counts, WeightMode mode, double cap);

/// Numerically stable softmax. Throws ValidationError on non-finite input.
std::vector<double> softmax(std::span<const double> logits);

struct Sample {
  std::span<const double> features;
  int label = 0;
};

struct LossGradient {
  double loss = 0.0;
  std::vector<double> grad_weights;  // classes x dim, row-major
  std::vector<double> grad_bias;
};

/// Weighted mean cross-entropy plus (lambda / 2) ||W||_F^2 and its exact gradient.
LossGradient loss_and_grad(const HeadModel& model, std::span<const Sample> batch,
                           std::span<const double> class_weights, double lambda);

/// Loss only; same value as loss_and_grad(...).loss.
double loss_value(const HeadModel& model, std::span<const Sample> batch,
                  std::span<const double> class_weights, double lambda);

struct TrainHistory {
  std::vector<double> epoch_start_loss;  // full-batch loss before each epoch
  double final_loss = 0.0;
};

struct TrainResult {
  HeadModel model;
  TrainHistory history;
};

/// Mini-batch gradient descent with classical momentum. The per-epoch shuffle is the
/// only randomness and is driven by config.seed, so results are bitwise reproducible.
/// Throws TrainingDiverged as soon as the loss or any parameter becomes non-finite.
TrainResult train(HeadModel init, std::span<const Sample> labeled, const TrainConfig& config,
                  std::span<const double> class_weights);

/// Dense copy of labeled embeddings, ordered by crop id. Samples view into it.
class TrainingSet {
 public:
  TrainingSet(const EmbeddingStore& store, const std::map<std::string, int>& labels);

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const Sample> samples() const noexcept { return samples_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  std::vector<std::size_t> class_counts(std::size_t classes) const;

  TrainingSet(const TrainingSet&) = delete;
  TrainingSet& operator=(const TrainingSet&) = delete;

 private:
  std::size_t dim_;
  std::vector<std::string> ids_;
  std::vector<double> features_;
  std::vector<int> labels_;
  std::vector<Sample> samples_;
};

struct PredictionRecord {
  std::string crop_id;
  std::vector<double> logits;
  std::vector<double> probs;
  std::size_t predicted = 0;  // lowest index among ties
  double confidence = 0.0;
};

PredictionRecord predict_one(const HeadModel& model, std::span<const double> features);

/// Predictions in the order of `ids`. Throws ValidationError listing every id the store
/// lacks, or when the store dimension differs from the model's.
std::vector<PredictionRecord> predict(const HeadModel& model, const EmbeddingStore& store,
                                      std::span<const std::string> ids);

/// Binary "ALHD1" encoding: magic, u32 K, u32 d, K*d float64 W row-major, K float64 b,
/// then K u16-prefixed UTF-8 class names.
std::string serialize_model(const HeadModel& model);
HeadModel parse_model(std::string_view bytes);
void save_model(const HeadModel& model, const std::filesystem::path& path);
HeadModel load_model(const std::filesystem::path& path);

}  // namespace camtrap
