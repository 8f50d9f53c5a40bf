#include <cmath>
#include <numbers>
#include <set>

#include "doctest.h"

#include "camtrap/active_learning.hpp"
#include "camtrap/error.hpp"
#include "camtrap/random.hpp"
#include "camtrap/taxonomy.hpp"

using namespace camtrap;

namespace {

std::vector<std::string> names(std::size_t k) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back("class" + std::to_string(i));
  return out;
}

std::vector<double> random_simplex(Rng& rng, std::size_t k) {
  std::vector<double> p(k);
  double sum = 0;
  for (auto& x : p) {
    x = -std::log(1.0 - rng.uniform());  // exponential draws give a uniform simplex point
    if (rng.below(4) == 0) x = 0.0;      // and some exact zeros
    sum += x;
  }
  if (sum == 0) {
    p[0] = 1;
    return p;
  }
  for (auto& x : p) x /= sum;
  return p;
}

LabeledDataset small_dataset(std::uint64_t seed = 3) {
  const std::vector<std::size_t> counts{40, 25, 15};
  return generate_synthetic_pool(names(3), 4, counts, 4.0, 1.0, seed);
}

TrainConfig quick_train() {
  TrainConfig c;
  c.epochs = 20;
  c.batch_size = 16;
  return c;
}

}  // namespace

TEST_CASE("uncertainty score examples") {
  const std::vector<double> p91{0.9, 0.1}, half{0.5, 0.5}, onehot{0, 1, 0};
  CHECK(score_least_confidence(p91) == doctest::Approx(0.1));
  CHECK(score_least_confidence(onehot) == 0.0);
  std::vector<double> uniform(7, 1.0 / 7);
  CHECK(score_least_confidence(uniform) == doctest::Approx(1 - 1.0 / 7));

  CHECK(score_margin(half) == 1.0);
  CHECK(score_margin(p91) == doctest::Approx(0.2));
  CHECK(score_margin(onehot) == 0.0);

  CHECK(score_entropy(half) == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
  std::vector<double> u15(15, 1.0 / 15);
  CHECK(score_entropy(u15) == doctest::Approx(std::log(15.0)).epsilon(1e-14));
  CHECK(std::abs(score_entropy(u15) - 2.708) < 1e-3);
  CHECK(score_entropy(onehot) == 0.0);
}

TEST_CASE("property: entropy bounds and agreement at the extremes") {
  Rng rng(577);
  for (int trial = 0; trial < 20000; ++trial) {
    const std::size_t k = 2 + rng.below(14);
    const auto p = random_simplex(rng, k);
    const std::vector<double> uniform(k, 1.0 / static_cast<double>(k));
    std::vector<double> onehot(k, 0.0);
    onehot[rng.below(k)] = 1.0;
    const double h = score_entropy(p);
    REQUIRE(h >= 0.0);
    REQUIRE(h <= std::log(static_cast<double>(k)) + 1e-12);
    for (Strategy s : {Strategy::least_confidence, Strategy::margin, Strategy::entropy}) {
      const double v = uncertainty(s, p);
      REQUIRE(v <= uncertainty(s, uniform) + 1e-12);
      REQUIRE(v >= uncertainty(s, onehot) - 1e-12);
      REQUIRE(uncertainty(s, onehot) == 0.0);
    }
  }
}

TEST_CASE("strategy names round-trip") {
  for (Strategy s : {Strategy::least_confidence, Strategy::margin, Strategy::entropy, Strategy::random}) {
    CHECK(strategy_from_string(to_string(s)) == s);
  }
  CHECK_THROWS_AS(strategy_from_string("greedy"), ValidationError);
}

TEST_CASE("every uncertainty strategy picks the uniform item") {
  const auto items = [] {
    return std::vector<QueryItem>{{"a", 0, {1.0, 0.0}}, {"b", 0, {0.5, 0.5}}, {"c", 0, {0.7, 0.3}}};
  };
  for (Strategy s : {Strategy::least_confidence, Strategy::margin, Strategy::entropy}) {
    auto candidates = items();
    for (auto& c : candidates) c.score = uncertainty(s, c.probs);
    const auto batch = select_batch(candidates, 1, s, 0);
    REQUIRE(batch.items.size() == 1);
    CHECK(batch.items[0].crop_id == "b");
  }
}

TEST_CASE("ties go to the smallest ids; short pools return everything") {
  const std::vector<QueryItem> tied{{"d", 0.5, {}}, {"b", 0.5, {}}, {"c", 0.5, {}}, {"a", 0.5, {}}};
  const auto batch = select_batch(tied, 2, Strategy::entropy, 0);
  REQUIRE(batch.items.size() == 2);
  CHECK(batch.items[0].crop_id == "a");
  CHECK(batch.items[1].crop_id == "b");
  CHECK(select_batch(tied, 10, Strategy::entropy, 0).items.size() == 4);
  CHECK_THROWS_AS(select_batch(tied, 0, Strategy::entropy, 0), ValidationError);
}

TEST_CASE("batches are sorted by descending score") {
  Rng rng(4);
  std::vector<QueryItem> items;
  for (int i = 0; i < 100; ++i) items.push_back({"id" + std::to_string(i), rng.uniform(), {}});
  const auto batch = select_batch(items, 25, Strategy::margin, 0);
  REQUIRE(batch.items.size() == 25);
  for (std::size_t i = 1; i < batch.items.size(); ++i) {
    CHECK(batch.items[i - 1].score >= batch.items[i].score);
  }
}

TEST_CASE("random selection: reproducible and uniform") {
  std::vector<QueryItem> items;
  for (int i = 0; i < 20; ++i) items.push_back({"id" + std::to_string(10 + i), 0.0, {}});
  CHECK(select_batch(items, 5, Strategy::random, 42, 3) == select_batch(items, 5, Strategy::random, 42, 3));
  CHECK(select_batch(items, 5, Strategy::random, 42, 3) != select_batch(items, 5, Strategy::random, 43, 3));

  std::map<std::string, int> hits;
  constexpr int kRuns = 4000;
  for (int s = 0; s < kRuns; ++s) {
    const auto batch = select_batch(items, 5, Strategy::random, static_cast<std::uint64_t>(s));
    std::set<std::string> unique;
    for (const auto& it : batch.items) {
      unique.insert(it.crop_id);
      ++hits[it.crop_id];
    }
    REQUIRE(unique.size() == 5);
  }
  // Each id is expected kRuns * 5 / 20 = 1000 times; sd is about 27.
  for (const auto& [id, n] : hits) CHECK(std::abs(n - 1000) < 120);
}

TEST_CASE("apply_labels moves ids atomically") {
  std::vector<std::string> ids;
  for (int i = 0; i < 100; ++i) ids.push_back("id" + std::to_string(100 + i));
  const auto pool = make_pool(ids, 100, Strategy::entropy, 25, 0);
  const auto cls = names(3);
  std::vector<std::pair<std::string, std::string>> five;
  for (int i = 0; i < 5; ++i) five.emplace_back(ids[static_cast<std::size_t>(i * 7)], cls[static_cast<std::size_t>(i % 3)]);
  const auto next = apply_labels(pool, five, cls);
  CHECK(next.labeled.size() == 5);
  CHECK(next.unlabeled.size() == 95);
  CHECK(next.pool_size() == pool.pool_size());
  CHECK(std::is_sorted(next.unlabeled.begin(), next.unlabeled.end()));

  const std::vector<std::pair<std::string, std::string>> again{{ids[0], cls[0]}, {ids[1], cls[0]}};
  try {
    apply_labels(next, again, cls);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.details().size() == 1);
  }
  const std::vector<std::pair<std::string, std::string>> unknown{{ids[1], "Unicorn"}, {"nope", cls[0]}};
  try {
    apply_labels(next, unknown, cls);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.details().size() == 2);
    CHECK(e.details()[0].find("class0") != std::string::npos);  // valid classes are listed
  }
  const std::vector<std::pair<std::string, std::string>> twice{{ids[1], cls[0]}, {ids[1], cls[1]}};
  CHECK_THROWS_AS(apply_labels(next, twice, cls), ValidationError);
  CHECK(next.labeled.size() == 5);
}

TEST_CASE("learning curve requires increasing label counts") {
  LearningCurve curve;
  curve.append({10, 0.5, 0.5, 0.5, 0.5});
  CHECK_THROWS_AS(curve.append({10, 0.6, 0.6, 0.6, 0.6}), ValidationError);
  curve.append({20, 0.75, 0.5, 0.25, 0.125});
  CHECK(curve.to_csv() ==
        "labels_used,accuracy,macro_precision,macro_recall,macro_f1\n"
        "10,0.5,0.5,0.5,0.5\n20,0.75,0.5,0.25,0.125\n");
  CHECK(curve_point_from_json(to_json(curve.points()[1])) == curve.points()[1]);
}

TEST_CASE("query batch JSON round-trip") {
  QueryBatch b{4, {{"x", 0.75, {0.25, 0.75}}, {"y", 0.5, {0.5, 0.5}}}};
  CHECK(query_batch_from_json(to_json(b)) == b);
}

TEST_CASE("benchmark counts follow the grouping table") {
  CHECK(kHongKongGroupings.size() == 15);
  CHECK(benchmark_counts() == std::vector<std::size_t>{19, 40, 145, 8, 7, 391, 127, 7, 273, 2, 17,
                                                       161, 19, 219, 208});
}

TEST_CASE("synthetic pool generator") {
  const auto a = small_dataset(9);
  const auto b = small_dataset(9);
  CHECK(a.embeddings == b.embeddings);
  CHECK(a.labels == b.labels);
  CHECK(a.embeddings.size() == 80);
  CHECK(small_dataset(10).embeddings != a.embeddings);

  const std::vector<std::size_t> counts{5, 5, 5};
  const auto exact = generate_synthetic_pool(names(3), 4, counts, 4.0, 0.0, 1);
  std::map<int, std::vector<float>> means;
  for (const auto& [id, label] : exact.labels) {
    const auto& v = exact.embeddings.at(id);
    if (!means.contains(label)) means[label] = v;
    CHECK(v == means[label]);
  }
  double norm = 0;
  for (float x : means[0]) norm += double(x) * x;
  CHECK(std::abs(std::sqrt(norm) - 4.0) < 1e-5);
  // A head trained on noiseless clusters is perfect.
  SimulationConfig config;
  config.train = quick_train();
  const auto pool = exact.embeddings.ids();
  const auto result = simulate(exact, pool, {}, config);
  for (const auto& [id, label] : exact.labels) {
    const auto& v = exact.embeddings.at(id);
    const std::vector<double> e(v.begin(), v.end());
    CHECK(static_cast<int>(predict_one(result.final_model, e).predicted) == label);
  }
}

TEST_CASE("stratified validation split") {
  const auto data = make_benchmark_dataset(5);
  const auto split = split_validation(data, 0.2, 11);
  std::map<int, std::size_t> held, total;
  for (const auto& [id, label] : data.labels) ++total[label];
  for (int label : split.validation.labels) ++held[label];
  for (const auto& [label, n] : total) {
    CHECK(held[label] == static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n))));
  }
  std::set<std::string> v(split.validation.ids.begin(), split.validation.ids.end());
  for (const auto& id : split.pool) CHECK_FALSE(v.contains(id));
  CHECK(split.pool.size() + v.size() == data.labels.size());
}

TEST_CASE("seed sets") {
  const auto data = small_dataset();
  const auto ids = data.embeddings.ids();
  const auto seeds = stratified_seed_set(ids, data.labels, 2, 1);
  CHECK(seeds.size() == 6);
  std::map<int, int> per;
  for (const auto& id : seeds) ++per[data.labels.at(id)];
  for (const auto& [label, n] : per) CHECK(n == 2);
  const auto live = random_seed_set(ids, 6, 1);
  CHECK(live.size() == 6);
  CHECK(std::set<std::string>(live.begin(), live.end()).size() == 6);
  CHECK(random_seed_set(ids, 6, 1) == live);
}

TEST_CASE("one round adds one curve point and increments the round") {
  const auto data = small_dataset();
  const auto split = split_validation(data, 0.2, 1);
  auto pool = make_pool(split.pool, 40, Strategy::entropy, 10, 0);
  std::vector<std::pair<std::string, int>> seed;
  for (const auto& id : stratified_seed_set(split.pool, data.labels, 2, 2)) {
    seed.emplace_back(id, data.labels.at(id));
  }
  pool = apply_labels(pool, seed, 3);
  const auto r = run_round(pool, data.embeddings, split.validation, quick_train(), data.class_names);
  CHECK(r.state.round == 1);
  CHECK(r.point.labels_used == 6);
  REQUIRE(r.batch);
  CHECK(r.batch->items.size() == 10);
  CHECK(r.batch->round == 1);
  for (const auto& item : r.batch->items) {
    CHECK(r.state.is_unlabeled(item.crop_id));
    CHECK(item.probs.size() == 3);
  }
  CHECK_FALSE(r.finished);
  CHECK(r.confusion.total() == split.validation.ids.size());

  const auto again = run_round(pool, data.embeddings, split.validation, quick_train(), data.class_names);
  CHECK(again.batch == r.batch);
  CHECK(again.model == r.model);
}

TEST_CASE("run_round stopping rules") {
  const auto data = small_dataset();
  const auto ids = data.embeddings.ids();
  auto pool = make_pool(ids, 6, Strategy::entropy, 10, 0);
  CHECK_THROWS_AS(run_round(pool, data.embeddings, {}, quick_train(), data.class_names), ValidationError);

  std::vector<std::pair<std::string, int>> seed;
  for (const auto& id : stratified_seed_set(ids, data.labels, 2, 2)) seed.emplace_back(id, data.labels.at(id));
  pool = apply_labels(pool, seed, 3);
  const auto done = run_round(pool, data.embeddings, {}, quick_train(), data.class_names);
  CHECK(done.finished);
  CHECK_FALSE(done.batch);
  CHECK(done.stop_reason == "budget exhausted");

  // Everything labeled: the pool itself is exhausted.
  auto full = make_pool(ids, 1000, Strategy::entropy, 10, 0);
  std::vector<std::pair<std::string, int>> all;
  for (const auto& [id, label] : data.labels) all.emplace_back(id, label);
  full = apply_labels(full, all, 3);
  const auto empty = run_round(full, data.embeddings, {}, quick_train(), data.class_names);
  CHECK(empty.finished);
  CHECK_FALSE(empty.batch);
  CHECK(empty.stop_reason == "pool exhausted");
}

TEST_CASE("simulation invariants: conservation, no re-query, reproducibility") {
  const auto data = small_dataset();
  for (Strategy s : {Strategy::entropy, Strategy::random, Strategy::margin}) {
    SimulationConfig config;
    config.strategy = s;
    config.batch_size = 7;
    config.seed = 5;
    config.train = quick_train();
    const auto a = simulate(data, config);
    const auto b = simulate(data, config);
    CHECK(a.curve.to_csv() == b.curve.to_csv());
    CHECK(a.batches == b.batches);

    std::set<std::string> seen;
    for (const auto& batch : a.batches) {
      CHECK(batch.items.size() <= 7);
      for (const auto& item : batch.items) CHECK(seen.insert(item.crop_id).second);
    }
    CHECK(a.final_state.labeled.size() + a.final_state.unlabeled.size() == 64);  // 80 - 16 held out
    CHECK(a.final_state.unlabeled.empty());
    CHECK(a.curve.size() == a.batches.size() + 1);
  }
}

TEST_CASE("budget equal to the seed set yields one point") {
  SimulationConfig config;
  config.budget = 6;
  config.train = quick_train();
  const auto r = simulate(small_dataset(), config);
  CHECK(r.curve.size() == 1);
  CHECK(r.curve.points()[0].labels_used == 6);
}

TEST_CASE("overlapping validation is refused") {
  const auto data = small_dataset();
  const auto ids = data.embeddings.ids();
  ValidationSet overlap{{ids[0]}, {data.labels.at(ids[0])}};
  CHECK_THROWS_AS(simulate(data, ids, overlap, SimulationConfig{}), ValidationError);
}

TEST_CASE("full budget matches training once on the whole pool") {
  const auto data = small_dataset(12);
  const auto split = split_validation(data, 0.2, 2);
  SimulationConfig config;
  config.batch_size = 9;
  config.train = quick_train();
  const auto sim = simulate(data, split.pool, split.validation, config);

  std::map<std::string, int> all;
  for (const auto& id : split.pool) all.emplace(id, data.labels.at(id));
  const TrainingSet set(data.embeddings, all);
  const auto weights = training_weights(set.class_counts(3), config.train.weight_mode, config.train.weight_cap);
  const auto direct = train(HeadModel::zeros(data.class_names, 4), set.samples(), config.train, weights);
  CHECK(serialize_model(sim.final_model) == serialize_model(direct.model));
}
