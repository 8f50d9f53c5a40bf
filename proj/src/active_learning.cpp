#include "camtrap/active_learning.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "camtrap/fileio.hpp"
#include "camtrap/random.hpp"
#include "parallel.hpp"

namespace camtrap {

using nlohmann::json;

std::string_view to_string(Strategy strategy) noexcept {
  switch (strategy) {
    case Strategy::least_confidence:
      return "least_confidence";
    case Strategy::margin:
      return "margin";
    case Strategy::entropy:
      return "entropy";
    case Strategy::random:
      return "random";
  }
  return "unknown";
}

Strategy strategy_from_string(std::string_view name) {
  for (auto s : {Strategy::least_confidence, Strategy::margin, Strategy::entropy,
                 Strategy::random}) {
    if (to_string(s) == name) return s;
  }
  throw ValidationError("unknown strategy \"" + std::string(name) +
                        "\" (expected least_confidence, margin, entropy or random)");
}

double score_least_confidence(std::span<const double> probs) {
  if (probs.empty()) return 0.0;
  return 1.0 - *std::max_element(probs.begin(), probs.end());
}

double score_margin(std::span<const double> probs) {
  if (probs.size() < 2) return 0.0;
  double first = -1.0;
  double second = -1.0;
  for (double p : probs) {
    if (p > first) {
      second = first;
      first = p;
    } else if (p > second) {
      second = p;
    }
  }
  return 1.0 - (first - second);
}

double score_entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

double uncertainty(Strategy strategy, std::span<const double> probs) {
  switch (strategy) {
    case Strategy::least_confidence:
      return score_least_confidence(probs);
    case Strategy::margin:
      return score_margin(probs);
    case Strategy::entropy:
      return score_entropy(probs);
    case Strategy::random:
      break;
  }
  throw ValidationError("the random strategy has no uncertainty score");
}

json to_json(const QueryBatch& batch) {
  json items = json::array();
  for (const auto& item : batch.items) {
    items.push_back({{"crop_id", item.crop_id}, {"score", item.score}, {"probs", item.probs}});
  }
  return json{{"round", batch.round}, {"items", items}};
}

QueryBatch query_batch_from_json(const json& j) {
  QueryBatch batch;
  batch.round = j.at("round").get<std::size_t>();
  for (const auto& item : j.at("items")) {
    batch.items.push_back({item.at("crop_id").get<std::string>(), item.at("score").get<double>(),
                           item.at("probs").get<std::vector<double>>()});
  }
  return batch;
}

QueryBatch select_batch(std::vector<QueryItem> candidates, std::size_t batch_size,
                        Strategy strategy, std::uint64_t seed, std::size_t round) {
  if (batch_size == 0) throw ValidationError("query batch size must be at least 1");
  if (strategy == Strategy::random) {
    std::sort(candidates.begin(), candidates.end(),
              [](const QueryItem& a, const QueryItem& b) { return a.crop_id < b.crop_id; });
    Rng rng(mix_seed(seed, round));
    for (auto& c : candidates) c.score = rng.uniform();
  }
  const auto before = [](const QueryItem& a, const QueryItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.crop_id < b.crop_id;
  };
  const std::size_t keep = std::min(batch_size, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                    candidates.end(), before);
  candidates.resize(keep);
  return QueryBatch{round, std::move(candidates)};
}

bool PoolState::is_unlabeled(std::string_view crop_id) const {
  return std::binary_search(unlabeled.begin(), unlabeled.end(), crop_id,
                            [](std::string_view a, std::string_view b) { return a < b; });
}

PoolState make_pool(std::vector<std::string> ids, std::size_t label_budget, Strategy strategy,
                    std::size_t batch_size_query, std::uint64_t seed) {
  if (batch_size_query == 0) throw ValidationError("query batch size must be at least 1");
  std::sort(ids.begin(), ids.end());
  if (const auto dup = std::adjacent_find(ids.begin(), ids.end()); dup != ids.end()) {
    throw ValidationError("duplicate pool id " + *dup);
  }
  PoolState state;
  state.unlabeled = std::move(ids);
  state.label_budget = label_budget;
  state.strategy = strategy;
  state.batch_size_query = batch_size_query;
  state.seed = seed;
  return state;
}

namespace {

PoolState move_to_labeled(const PoolState& state,
                          const std::vector<std::pair<std::string, int>>& labels,
                          std::vector<std::string> offenders) {
  std::set<std::string_view> seen;
  for (const auto& [id, label] : labels) {
    if (!seen.insert(id).second) {
      offenders.push_back(id + ": submitted more than once");
    } else if (state.labeled.contains(id)) {
      offenders.push_back(id + ": already labeled");
    } else if (!state.is_unlabeled(id)) {
      offenders.push_back(id + ": not in the pool");
    }
  }
  if (!offenders.empty()) throw ValidationError("labels rejected; nothing applied", offenders);

  PoolState next = state;
  std::set<std::string_view> moved;
  for (const auto& [id, label] : labels) {
    next.labeled.emplace(id, label);
    moved.insert(id);
  }
  std::erase_if(next.unlabeled, [&](const std::string& id) { return moved.contains(id); });
  return next;
}

}  // namespace

PoolState apply_labels(const PoolState& state,
                       std::span<const std::pair<std::string, std::string>> labels,
                       std::span<const std::string> class_names) {
  std::vector<std::pair<std::string, int>> indexed;
  std::vector<std::string> offenders;
  std::string valid;
  for (const auto& name : class_names) valid += (valid.empty() ? "" : ", ") + name;
  for (const auto& [id, species] : labels) {
    const auto it = std::find(class_names.begin(), class_names.end(), species);
    if (it == class_names.end()) {
      offenders.push_back(id + ": unknown class \"" + species + "\" (valid classes: " + valid +
                          ")");
      continue;
    }
    indexed.emplace_back(id, static_cast<int>(it - class_names.begin()));
  }
  return move_to_labeled(state, indexed, std::move(offenders));
}

PoolState apply_labels(const PoolState& state, std::span<const std::pair<std::string, int>> labels,
                       std::size_t classes) {
  std::vector<std::string> offenders;
  for (const auto& [id, label] : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      offenders.push_back(id + ": class index " + std::to_string(label) + " out of range");
    }
  }
  return move_to_labeled(state, {labels.begin(), labels.end()}, std::move(offenders));
}

void LearningCurve::append(const CurvePoint& point) {
  if (!points_.empty() && point.labels_used <= points_.back().labels_used) {
    throw ValidationError("learning curve labels_used must strictly increase (" +
                          std::to_string(points_.back().labels_used) + " then " +
                          std::to_string(point.labels_used) + ")");
  }
  points_.push_back(point);
}

std::string LearningCurve::to_csv() const {
  std::string out = "labels_used,accuracy,macro_precision,macro_recall,macro_f1\n";
  for (const auto& p : points_) {
    out += std::to_string(p.labels_used) + "," + format_real(p.accuracy) + "," +
           format_real(p.macro_precision) + "," + format_real(p.macro_recall) + "," +
           format_real(p.macro_f1) + "\n";
  }
  return out;
}

json to_json(const CurvePoint& point) {
  return json{{"labels_used", point.labels_used},
              {"accuracy", point.accuracy},
              {"macro_precision", point.macro_precision},
              {"macro_recall", point.macro_recall},
              {"macro_f1", point.macro_f1}};
}

CurvePoint curve_point_from_json(const json& j) {
  return {j.at("labels_used").get<std::size_t>(), j.at("accuracy").get<double>(),
          j.at("macro_precision").get<double>(), j.at("macro_recall").get<double>(),
          j.at("macro_f1").get<double>()};
}

RoundResult run_round(const PoolState& state, const EmbeddingStore& embeddings,
                      const ValidationSet& validation, const TrainConfig& train_config,
                      const std::vector<std::string>& class_names) {
  if (state.labeled.empty()) {
    throw ValidationError("cannot run a round before any item is labeled (label the seed set)");
  }
  if (validation.ids.size() != validation.labels.size()) {
    throw ValidationError("validation ids and labels differ in length");
  }
  const std::size_t k = class_names.size();

  const TrainingSet training(embeddings, state.labeled);
  const auto weights = training_weights(training.class_counts(k), train_config.weight_mode,
                                        train_config.weight_cap);
  auto trained = train(HeadModel::zeros(class_names, embeddings.dimension()), training.samples(),
                       train_config, weights);

  const auto val_preds = predict(trained.model, embeddings, validation.ids);
  std::vector<int> predicted;
  predicted.reserve(val_preds.size());
  for (const auto& p : val_preds) predicted.push_back(static_cast<int>(p.predicted));
  ConfusionMatrix cm = confusion_matrix(validation.labels, predicted, class_names);
  MetricsReport report = metrics(cm);

  RoundResult result{state,
                     std::move(trained.model),
                     std::move(trained.history),
                     std::move(cm),
                     std::move(report),
                     {},
                     std::nullopt,
                     false,
                     {}};
  result.state.round = state.round + 1;
  result.point = {state.labeled.size(), result.report.accuracy, result.report.macro_precision,
                  result.report.macro_recall, result.report.macro_f1};

  if (state.budget_exhausted()) {
    result.finished = true;
    result.stop_reason = "budget exhausted";
    return result;
  }
  if (state.unlabeled.empty()) {
    result.finished = true;
    result.stop_reason = "pool exhausted";
    return result;
  }

  std::vector<QueryItem> candidates(state.unlabeled.size());
  detail::parallel_for(state.unlabeled.size(), [&](std::size_t i) {
    const auto& v = embeddings.at(state.unlabeled[i]);
    std::vector<double> features(v.begin(), v.end());
    auto pred = predict_one(result.model, features);
    candidates[i].crop_id = state.unlabeled[i];
    candidates[i].score =
        state.strategy == Strategy::random ? 0.0 : uncertainty(state.strategy, pred.probs);
    candidates[i].probs = std::move(pred.probs);
  });
  const std::size_t quota =
      std::min(state.batch_size_query, state.label_budget - state.labeled.size());
  result.batch = select_batch(std::move(candidates), quota, state.strategy, state.seed,
                              result.state.round);
  return result;
}

SimulationResult simulate(const LabeledDataset& data, std::span<const std::string> pool,
                          const ValidationSet& validation, const SimulationConfig& config) {
  const std::set<std::string_view> held_out(validation.ids.begin(), validation.ids.end());
  std::vector<std::string> problems;
  for (const auto& id : pool) {
    if (held_out.contains(id)) problems.push_back(id + ": in both pool and validation split");
    if (!data.labels.contains(id)) problems.push_back(id + ": no oracle label");
    if (!data.embeddings.contains(id)) problems.push_back(id + ": no embedding");
  }
  if (!problems.empty()) throw ValidationError("invalid simulation dataset", problems);

  const std::size_t budget =
      config.budget == 0 ? pool.size() : std::min(config.budget, pool.size());
  PoolState state = make_pool({pool.begin(), pool.end()}, budget, config.strategy,
                              config.batch_size, mix_seed(config.seed, 3));

  auto seeds = stratified_seed_set(pool, data.labels, config.seed_per_class,
                                   mix_seed(config.seed, 2));
  if (seeds.size() > budget) seeds.resize(budget);
  const auto oracle = [&](const std::vector<std::string>& ids) {
    std::vector<std::pair<std::string, int>> answers;
    for (const auto& id : ids) answers.emplace_back(id, data.labels.at(id));
    return answers;
  };
  state = apply_labels(state, oracle(seeds), data.class_names.size());

  SimulationResult result;
  while (true) {
    RoundResult round = run_round(state, data.embeddings, validation, config.train,
                                  data.class_names);
    result.curve.append(round.point);
    result.points.push_back(round.point);
    const bool stop = round.finished || !round.batch || round.batch->items.empty();
    if (stop) {
      result.final_model = std::move(round.model);
      result.final_state = std::move(round.state);
      result.final_report = std::move(round.report);
      break;
    }
    std::vector<std::string> ids;
    for (const auto& item : round.batch->items) ids.push_back(item.crop_id);
    state = apply_labels(round.state, oracle(ids), data.class_names.size());
    result.batches.push_back(std::move(*round.batch));
  }
  return result;
}

SimulationResult simulate(const LabeledDataset& data, const SimulationConfig& config) {
  const DataSplit split = split_validation(data, 0.2, mix_seed(config.seed, 1));
  return simulate(data, split.pool, split.validation, config);
}

}  // namespace camtrap
