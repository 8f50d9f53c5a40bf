#include <algorithm>
#include <cstdio>
#include <numeric>

#include "camtrap/active_learning.hpp"
#include "camtrap/random.hpp"
#include "camtrap/taxonomy.hpp"

namespace camtrap {

LabeledDataset generate_synthetic_pool(std::vector<std::string> class_names, std::size_t dim,
                                       std::span<const std::size_t> counts, double separation,
                                       double noise_sigma, std::uint64_t seed) {
  if (class_names.size() < 2 || counts.size() != class_names.size()) {
    throw ValidationError("synthetic pool needs K >= 2 class names and one count per class");
  }
  if (std::any_of(counts.begin(), counts.end(), [](std::size_t n) { return n == 0; })) {
    throw ValidationError("synthetic pool needs at least one example per class");
  }
  if (dim == 0) throw ValidationError("synthetic pool dimension must be positive");

  Rng rng(seed);
  std::vector<std::vector<double>> means;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    std::vector<double> direction(dim);
    for (auto& v : direction) v = rng.normal();
    auto mean = l2_normalize(std::span<const double>(direction));
    for (auto& v : mean) v *= separation;
    means.push_back(std::move(mean));
  }

  const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  std::vector<std::size_t> slot(total);
  std::iota(slot.begin(), slot.end(), std::size_t{0});
  rng.shuffle(slot);

  LabeledDataset data{EmbeddingStore(dim, "synthetic-pool/v1 d=" + std::to_string(dim) +
                                              " seed=" + std::to_string(seed)),
                      {},
                      std::move(class_names)};
  std::size_t t = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    for (std::size_t i = 0; i < counts[c]; ++i, ++t) {
      std::vector<float> x(dim);
      for (std::size_t j = 0; j < dim; ++j) {
        x[j] = static_cast<float>(means[c][j] + noise_sigma * rng.normal());
      }
      char id[32];
      std::snprintf(id, sizeof id, "syn-%05zu", slot[t]);
      data.embeddings.insert(id, std::move(x));
      data.labels.emplace(id, static_cast<int>(c));
    }
  }
  return data;
}

std::vector<std::size_t> benchmark_counts(std::size_t divisor, std::size_t minimum) {
  std::vector<std::size_t> out;
  for (std::size_t n : kHongKongCounts) {
    const std::size_t rounded = (2 * n + divisor) / (2 * divisor);  // half away from zero
    out.push_back(std::max(rounded, minimum));
  }
  return out;
}

LabeledDataset make_benchmark_dataset(std::uint64_t seed) {
  const auto counts = benchmark_counts();
  return generate_synthetic_pool({kHongKongGroupings.begin(), kHongKongGroupings.end()}, 32,
                                 counts, 4.0, 1.0, seed);
}

DataSplit split_validation(const LabeledDataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw ValidationError("validation fraction must lie in [0,1)");
  }
  std::vector<std::vector<std::string>> by_class(data.class_names.size());
  for (const auto& [id, label] : data.labels) by_class.at(static_cast<std::size_t>(label)).push_back(id);

  Rng rng(seed);
  DataSplit split;
  std::vector<std::pair<std::string, int>> held_out;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& ids = by_class[c];
    rng.shuffle(ids);
    const auto n_val = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(ids.size())));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i < n_val) {
        held_out.emplace_back(ids[i], static_cast<int>(c));
      } else {
        split.pool.push_back(ids[i]);
      }
    }
  }
  std::sort(split.pool.begin(), split.pool.end());
  std::sort(held_out.begin(), held_out.end());
  for (auto& [id, label] : held_out) {
    split.validation.ids.push_back(id);
    split.validation.labels.push_back(label);
  }
  return split;
}

std::vector<std::string> stratified_seed_set(std::span<const std::string> pool,
                                             const std::map<std::string, int>& labels,
                                             std::size_t per_class, std::uint64_t seed) {
  std::map<int, std::vector<std::string>> by_class;
  std::vector<std::string> sorted(pool.begin(), pool.end());
  std::sort(sorted.begin(), sorted.end());
  for (const auto& id : sorted) by_class[labels.at(id)].push_back(id);

  Rng rng(seed);
  std::vector<std::string> chosen;
  for (auto& [label, ids] : by_class) {
    rng.shuffle(ids);
    const std::size_t take = std::min(per_class, ids.size());
    chosen.insert(chosen.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

std::vector<std::string> random_seed_set(std::span<const std::string> pool, std::size_t count,
                                         std::uint64_t seed) {
  std::vector<std::string> ids(pool.begin(), pool.end());
  std::sort(ids.begin(), ids.end());
  Rng rng(seed);
  rng.shuffle(ids);
  ids.resize(std::min(count, ids.size()));
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace camtrap
