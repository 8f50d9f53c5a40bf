#pragma once

#include <cstdint>
#include <filesystem>

#include "camtrap/project.hpp"

namespace camtrap {

struct SyntheticProjectOptions {
  std::uint64_t seed = 0;
  std::size_t batch_size = 25;
  std::size_t label_budget = 0;
  Strategy strategy = Strategy::entropy;
  bool write_images = true;  // one small PNG tile per crop, for the web client
  TrainConfig train;
};

/// Populates `dir` with a project over the fifteen-class benchmark dataset:
/// embeddings.emb1, crops.csv (+ crops/*.png), project.json, labels.csv and
/// oracle.csv, which holds the hidden label of every pool crop in label-CSV form.
ProjectState create_synthetic_project(const std::filesystem::path& dir,
                                      const SyntheticProjectOptions& options);

}  // namespace camtrap
