#include "camtrap/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "camtrap/binary_io.hpp"
#include "camtrap/fileio.hpp"
#include "camtrap/random.hpp"

namespace camtrap {

HeadModel HeadModel::zeros(std::vector<std::string> class_names, std::size_t dim) {
  HeadModel m;
  m.classes = class_names.size();
  m.dim = dim;
  m.weights.assign(m.classes * dim, 0.0);
  m.bias.assign(m.classes, 0.0);
  m.class_names = std::move(class_names);
  m.validate();
  return m;
}

void HeadModel::validate() const {
  if (classes < 2) throw ValidationError("a classifier head needs at least two classes");
  if (dim == 0) throw ValidationError("embedding dimension must be positive");
  if (weights.size() != classes * dim || bias.size() != classes ||
      class_names.size() != classes) {
    throw ValidationError("head model shapes disagree with K=" + std::to_string(classes) +
                          ", d=" + std::to_string(dim));
  }
  std::set<std::string_view> seen;
  for (const auto& name : class_names) {
    if (name.empty()) throw ValidationError("class names must be nonempty");
    if (!seen.insert(name).second) throw ValidationError("duplicate class name \"" + name + "\"");
  }
  const auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(weights.begin(), weights.end(), finite) ||
      !std::all_of(bias.begin(), bias.end(), finite)) {
    throw ValidationError("head model has non-finite parameters");
  }
}

double HeadModel::frobenius_norm() const {
  double sum = 0.0;
  for (double w : weights) sum += w * w;
  return std::sqrt(sum);
}

std::string_view to_string(WeightMode mode) noexcept {
  return mode == WeightMode::none ? "none" : "inverse_frequency";
}

WeightMode weight_mode_from_string(std::string_view name) {
  if (name == "none") return WeightMode::none;
  if (name == "inverse_frequency") return WeightMode::inverse_frequency;
  throw ValidationError("unknown weight mode \"" + std::string(name) +
                        "\" (expected none or inverse_frequency)");
}

void TrainConfig::validate() const {
  std::vector<std::string> problems;
  if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
    problems.push_back("learning_rate must be finite and >= 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) problems.push_back("momentum must lie in [0,1)");
  if (!std::isfinite(l2_lambda) || l2_lambda < 0.0) {
    problems.push_back("l2_lambda must be finite and >= 0");
  }
  if (batch_size < 1) problems.push_back("batch_size must be >= 1");
  if (epochs < 1) problems.push_back("epochs must be >= 1");
  if (!std::isfinite(weight_cap) || weight_cap <= 0.0) {
    problems.push_back("weight_cap must be finite and > 0");
  }
  if (!problems.empty()) throw ValidationError("invalid training configuration", problems);
}

ClassWeights class_weights(std::span<const std::size_t> counts, WeightMode mode, double cap,
                           std::span<const std::string> class_names) {
  if (counts.empty()) throw ValidationError("class_weights needs at least one class");
  if (!std::isfinite(cap) || cap <= 0.0) throw ValidationError("weight cap must be > 0");
  ClassWeights w(counts.size(), 1.0);
  if (mode == WeightMode::none) return w;

  std::vector<std::string> empty;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) {
      empty.push_back(c < class_names.size() ? class_names[c] : "class " + std::to_string(c));
    }
  }
  if (!empty.empty()) {
    std::string listed;
    for (const auto& name : empty) listed += (listed.empty() ? "" : ", ") + name;
    throw ValidationError("inverse_frequency weighting needs at least one example per class; none for " +
                              listed,
                          empty);
  }
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(),
                                                           std::size_t{0}));
  const double k = static_cast<double>(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) {
    w[c] = std::min(cap, total / (k * static_cast<double>(counts[c])));
  }
  return w;
}

ClassWeights training_weights(std::span<const std::size_t> counts, WeightMode mode, double cap) {
  ClassWeights w(counts.size(), 1.0);
  std::vector<std::size_t> present;
  std::vector<std::size_t> present_counts;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] > 0) {
      present.push_back(c);
      present_counts.push_back(counts[c]);
    }
  }
  if (present.empty()) return w;
  const auto sub = class_weights(present_counts, mode, cap);
  for (std::size_t i = 0; i < present.size(); ++i) w[present[i]] = sub[i];
  return w;
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw ValidationError("softmax of an empty vector");
  double m = -std::numeric_limits<double>::infinity();
  for (double z : logits) {
    if (!std::isfinite(z)) throw ValidationError("softmax input is not finite");
    m = std::max(m, z);
  }
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = std::exp(logits[k] - m);
    sum += p[k];
  }
  for (double& v : p) v /= sum;
  return p;
}

namespace {

void check_batch(const HeadModel& model, std::span<const Sample> batch,
                 std::span<const double> class_weights) {
  if (batch.empty()) throw ValidationError("loss_and_grad needs a nonempty batch");
  if (class_weights.size() != model.classes) {
    throw ValidationError("class weight vector has " + std::to_string(class_weights.size()) +
                          " entries, model has " + std::to_string(model.classes) + " classes");
  }
  for (const auto& s : batch) {
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= model.classes) {
      throw ValidationError("label " + std::to_string(s.label) + " outside [0, " +
                            std::to_string(model.classes) + ")");
    }
    if (s.features.size() != model.dim) {
      throw ValidationError("sample dimension " + std::to_string(s.features.size()) +
                            " differs from model dimension " + std::to_string(model.dim));
    }
  }
}

// logits into `z`; returns log-sum-exp and leaves exp(z - max) / sum in `p` if given.
double forward(const HeadModel& model, std::span<const double> e, std::vector<double>& z,
               std::vector<double>* p) {
  const std::size_t d = model.dim;
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < model.classes; ++k) {
    const double* w = model.weights.data() + k * d;
    double acc = model.bias[k];
    for (std::size_t j = 0; j < d; ++j) acc += w[j] * e[j];
    z[k] = acc;
    m = std::max(m, acc);
  }
  double sum = 0.0;
  if (p != nullptr) {
    for (std::size_t k = 0; k < model.classes; ++k) sum += ((*p)[k] = std::exp(z[k] - m));
    for (std::size_t k = 0; k < model.classes; ++k) (*p)[k] /= sum;
  } else {
    for (std::size_t k = 0; k < model.classes; ++k) sum += std::exp(z[k] - m);
  }
  return m + std::log(sum);
}

double penalty(const HeadModel& model, double lambda) {
  if (lambda == 0.0) return 0.0;
  double sq = 0.0;
  for (double w : model.weights) sq += w * w;
  return 0.5 * lambda * sq;
}

}  // namespace

LossGradient loss_and_grad(const HeadModel& model, std::span<const Sample> batch,
                           std::span<const double> class_weights, double lambda) {
  check_batch(model, batch, class_weights);
  const std::size_t d = model.dim;
  const std::size_t k_count = model.classes;
  const double n = static_cast<double>(batch.size());

  LossGradient out;
  out.grad_weights.assign(k_count * d, 0.0);
  out.grad_bias.assign(k_count, 0.0);
  std::vector<double> z(k_count), p(k_count);
  double loss = 0.0;
  for (const auto& s : batch) {
    const double lse = forward(model, s.features, z, &p);
    const auto y = static_cast<std::size_t>(s.label);
    const double w = class_weights[y];
    loss += w * (lse - z[y]);
    const double scale = w / n;
    for (std::size_t k = 0; k < k_count; ++k) {
      const double delta = scale * (p[k] - (k == y ? 1.0 : 0.0));
      out.grad_bias[k] += delta;
      double* g = out.grad_weights.data() + k * d;
      for (std::size_t j = 0; j < d; ++j) g[j] += delta * s.features[j];
    }
  }
  out.loss = loss / n + penalty(model, lambda);
  if (lambda != 0.0) {
    for (std::size_t i = 0; i < out.grad_weights.size(); ++i) {
      out.grad_weights[i] += lambda * model.weights[i];
    }
  }
  return out;
}

double loss_value(const HeadModel& model, std::span<const Sample> batch,
                  std::span<const double> class_weights, double lambda) {
  check_batch(model, batch, class_weights);
  std::vector<double> z(model.classes);
  double loss = 0.0;
  for (const auto& s : batch) {
    const double lse = forward(model, s.features, z, nullptr);
    const auto y = static_cast<std::size_t>(s.label);
    loss += class_weights[y] * (lse - z[y]);
  }
  return loss / static_cast<double>(batch.size()) + penalty(model, lambda);
}

TrainResult train(HeadModel init, std::span<const Sample> labeled, const TrainConfig& config,
                  std::span<const double> class_weights) {
  config.validate();
  init.validate();
  if (labeled.empty()) throw ValidationError("cannot train on an empty labeled set");
  check_batch(init, labeled, class_weights);

  TrainResult result{std::move(init), {}};
  HeadModel& model = result.model;
  std::vector<double> vel_w(model.weights.size(), 0.0);
  std::vector<double> vel_b(model.bias.size(), 0.0);
  std::vector<std::size_t> order(labeled.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Sample> batch;
  batch.reserve(config.batch_size);
  Rng rng(config.seed);

  const auto diverged = [&](std::size_t epoch, const std::string& what) {
    return TrainingDiverged(what + " at epoch " + std::to_string(epoch) +
                            " (learning_rate=" + format_real(config.learning_rate) +
                            ", momentum=" + format_real(config.momentum) +
                            "); lower the learning rate");
  };

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double start_loss = loss_value(model, labeled, class_weights, config.l2_lambda);
    if (!std::isfinite(start_loss)) throw diverged(epoch, "non-finite loss");
    result.history.epoch_start_loss.push_back(start_loss);

    rng.shuffle(order);
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) batch.push_back(labeled[order[i]]);
      const auto g = loss_and_grad(model, batch, class_weights, config.l2_lambda);

      bool finite = std::isfinite(g.loss);
      for (std::size_t i = 0; i < model.weights.size(); ++i) {
        vel_w[i] = config.momentum * vel_w[i] - config.learning_rate * g.grad_weights[i];
        model.weights[i] += vel_w[i];
        finite = finite && std::isfinite(model.weights[i]);
      }
      for (std::size_t k = 0; k < model.bias.size(); ++k) {
        vel_b[k] = config.momentum * vel_b[k] - config.learning_rate * g.grad_bias[k];
        model.bias[k] += vel_b[k];
        finite = finite && std::isfinite(model.bias[k]);
      }
      if (!finite) throw diverged(epoch, "non-finite parameters");
    }
  }
  result.history.final_loss = loss_value(model, labeled, class_weights, config.l2_lambda);
  if (!std::isfinite(result.history.final_loss)) throw diverged(config.epochs, "non-finite loss");
  return result;
}

TrainingSet::TrainingSet(const EmbeddingStore& store, const std::map<std::string, int>& labels)
    : dim_(store.dimension()) {
  ids_.reserve(labels.size());
  features_.reserve(labels.size() * dim_);
  labels_.reserve(labels.size());
  std::vector<std::string> missing;
  for (const auto& [id, label] : labels) {
    const auto* v = store.find(id);
    if (v == nullptr) {
      missing.push_back(id);
      continue;
    }
    ids_.push_back(id);
    features_.insert(features_.end(), v->begin(), v->end());
    labels_.push_back(label);
  }
  if (!missing.empty()) throw ValidationError("labeled ids without embeddings", missing);
  samples_.reserve(labels_.size());
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    samples_.push_back({std::span<const double>(features_).subspan(i * dim_, dim_), labels_[i]});
  }
}

std::vector<std::size_t> TrainingSet::class_counts(std::size_t classes) const {
  std::vector<std::size_t> counts(classes, 0);
  for (int y : labels_) {
    if (y >= 0 && static_cast<std::size_t>(y) < classes) ++counts[static_cast<std::size_t>(y)];
  }
  return counts;
}

PredictionRecord predict_one(const HeadModel& model, std::span<const double> features) {
  if (features.size() != model.dim) {
    throw ValidationError("feature dimension " + std::to_string(features.size()) +
                          " differs from model dimension " + std::to_string(model.dim));
  }
  PredictionRecord r;
  r.logits.resize(model.classes);
  for (std::size_t k = 0; k < model.classes; ++k) {
    double acc = model.bias[k];
    const auto w = model.row(k);
    for (std::size_t j = 0; j < model.dim; ++j) acc += w[j] * features[j];
    r.logits[k] = acc;
  }
  r.probs = softmax(r.logits);
  r.predicted = static_cast<std::size_t>(
      std::max_element(r.probs.begin(), r.probs.end()) - r.probs.begin());
  r.confidence = r.probs[r.predicted];
  return r;
}

std::vector<PredictionRecord> predict(const HeadModel& model, const EmbeddingStore& store,
                                      std::span<const std::string> ids) {
  if (store.dimension() != model.dim) {
    throw ValidationError("embedding dimension " + std::to_string(store.dimension()) +
                          " differs from model dimension " + std::to_string(model.dim));
  }
  std::vector<std::string> missing;
  for (const auto& id : ids) {
    if (!store.contains(id)) missing.push_back(id);
  }
  if (!missing.empty()) throw ValidationError("unknown crop ids", missing);

  std::vector<PredictionRecord> out;
  out.reserve(ids.size());
  std::vector<double> e(model.dim);
  for (const auto& id : ids) {
    const auto& v = store.at(id);
    std::copy(v.begin(), v.end(), e.begin());
    out.push_back(predict_one(model, e));
    out.back().crop_id = id;
  }
  return out;
}

namespace {
constexpr std::string_view kModelMagic = "ALHD1";
}

std::string serialize_model(const HeadModel& model) {
  model.validate();
  binary::Writer w;
  w.bytes(kModelMagic);
  w.put(static_cast<std::uint32_t>(model.classes));
  w.put(static_cast<std::uint32_t>(model.dim));
  for (double v : model.weights) w.put(v);
  for (double v : model.bias) w.put(v);
  for (const auto& name : model.class_names) w.short_string(name);
  return w.release();
}

HeadModel parse_model(std::string_view bytes) {
  binary::Reader r(bytes);
  if (r.bytes(kModelMagic.size(), "magic") != kModelMagic) {
    throw ParseError("not an ALHD1 model file (bad magic)", 0);
  }
  HeadModel m;
  m.classes = r.get<std::uint32_t>("K");
  m.dim = r.get<std::uint32_t>("d");
  if (r.remaining() / 8 < m.classes * (m.dim + 1)) {
    throw ParseError("model file shorter than K*(d+1) parameters", r.position());
  }
  m.weights.resize(m.classes * m.dim);
  for (auto& v : m.weights) v = r.get<double>("weight");
  m.bias.resize(m.classes);
  for (auto& v : m.bias) v = r.get<double>("bias");
  for (std::size_t k = 0; k < m.classes; ++k) m.class_names.push_back(r.short_string("class name"));
  if (!r.at_end()) throw ParseError("trailing bytes after model", r.position());
  try {
    m.validate();
  } catch (const ValidationError& e) {
    throw ParseError(std::string("invalid model file: ") + e.what());
  }
  return m;
}

void save_model(const HeadModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_model(model));
}

HeadModel load_model(const std::filesystem::path& path) { return parse_model(read_file(path)); }

}  // namespace camtrap
