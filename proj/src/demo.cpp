#include "camtrap/demo.hpp"

#include <cstdio>

#include <opencv2/imgproc.hpp>

#include "camtrap/fileio.hpp"
#include "camtrap/random.hpp"
#include "image_io.hpp"

namespace camtrap {

namespace fs = std::filesystem;

namespace {

// Class hue plus per-crop speckle, so tiles of one class look alike but not identical.
cv::Mat make_tile(int label, std::size_t classes, std::uint64_t seed) {
  constexpr int kSide = 64;
  const double hue = 180.0 * static_cast<double>(label) / static_cast<double>(classes);
  cv::Mat hsv(kSide, kSide, CV_8UC3, cv::Scalar(hue, 160, 200));
  cv::Mat bgr;
  cv::cvtColor(hsv, bgr, cv::COLOR_HSV2BGR);
  Rng rng(seed);
  for (int i = 0; i < 40; ++i) {
    const int x = static_cast<int>(rng.below(kSide));
    const int y = static_cast<int>(rng.below(kSide));
    cv::circle(bgr, {x, y}, 2, cv::Scalar(40, 40, 40), cv::FILLED);
  }
  cv::putText(bgr, std::to_string(label), {4, kSide - 6}, cv::FONT_HERSHEY_SIMPLEX, 0.6,
              cv::Scalar(255, 255, 255), 1);
  return bgr;
}

}  // namespace

ProjectState create_synthetic_project(const fs::path& dir, const SyntheticProjectOptions& options) {
  const LabeledDataset data = make_benchmark_dataset(options.seed);
  const DataSplit split = split_validation(data, 0.2, mix_seed(options.seed, 1));
  fs::create_directories(dir);
  ProjectLock lock(dir);

  std::vector<CropRecord> crops;
  if (options.write_images) fs::create_directories(dir / "crops");
  std::size_t n = 0;
  for (const auto& [id, label] : data.labels) {
    char source[48];
    std::snprintf(source, sizeof source, "synthetic/IMG_%05zu.JPG", n++);
    CropRecord c;
    c.crop_id = id;
    c.source_image = source;
    c.rect = {0, 0, 64, 64};
    c.detection_confidence = 1.0;
    if (options.write_images) {
      c.crop_path = "crops/" + id + ".png";
      const auto tile = make_tile(label, data.class_names.size(), mix_seed(options.seed, n));
      write_file_atomic(dir / c.crop_path, detail::encode_png(tile));
    }
    crops.push_back(std::move(c));
  }
  write_file_atomic(dir / "crops.csv", format_crop_manifest(crops));
  save_store(data.embeddings, dir / "embeddings.emb1");

  ProjectInit init;
  init.project_id = "synthetic-" + std::to_string(options.seed);
  init.class_names = data.class_names;
  init.pool = split.pool;
  init.validation = split.validation;
  init.crops_manifest = "crops.csv";
  init.label_budget = options.label_budget;
  init.strategy = options.strategy;
  init.batch_size = options.batch_size;
  init.seed = options.seed;
  init.train = options.train;
  ProjectState state = make_project(init);
  save_project(dir, state);

  ProjectState oracle = state;
  for (const auto& id : split.pool) {
    const auto& species = data.class_names[static_cast<std::size_t>(data.labels.at(id))];
    oracle.labels.emplace(id, LabelRecord{id, species, "oracle", 0});
  }
  std::string text = export_labels_csv(oracle, load_crop_index(dir, state));
  write_file_atomic(dir / "oracle.csv", text);
  return state;
}

}  // namespace camtrap
