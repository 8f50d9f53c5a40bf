#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "camtrap/active_learning.hpp"
#include "camtrap/classifier.hpp"
#include "camtrap/detection.hpp"
#include "camtrap/embedding.hpp"

namespace camtrap {

inline constexpr int kProjectFormatVersion = 1;

struct LabelRecord {
  std::string crop_id;
  std::string species;
  std::string labeler;
  std::int64_t timestamp = 0;  // UTC seconds

  friend bool operator==(const LabelRecord&, const LabelRecord&) = default;
};

/// ISO-8601 UTC with a trailing Z, e.g. 2024-03-01T12:00:00Z.
std::string format_utc(std::int64_t seconds);
std::int64_t parse_utc(std::string_view text);
std::int64_t now_utc();

struct RoundArtifacts {
  std::size_t round = 0;
  std::size_t labels_used = 0;
  std::string model;    // paths relative to the project directory
  std::string metrics;
  std::string query;

  friend bool operator==(const RoundArtifacts&, const RoundArtifacts&) = default;
};

struct ProjectState {
  int format_version = kProjectFormatVersion;
  std::string project_id;
  std::vector<std::string> class_names;
  std::string embeddings_path = "embeddings.emb1";
  std::string crops_manifest;  // empty when the project has no crop images
  PoolState pool;
  std::map<std::string, LabelRecord> labels;  // provenance of every labeled pool item
  ValidationSet validation;
  std::optional<QueryBatch> pending;  // items still awaiting labels are those unlabeled
  std::vector<RoundArtifacts> history;
  TrainConfig train;
  bool finished = false;
  std::string stop_reason;

  /// Items of the current batch that are still unlabeled, in batch order.
  std::vector<QueryItem> pending_items() const;

  /// Throws ValidationError when an invariant is broken.
  void validate() const;

  friend bool operator==(const ProjectState&, const ProjectState&) = default;
};

nlohmann::json to_json(const ProjectState& state);
ProjectState project_from_json(const nlohmann::json& j);

/// Writes project.json (temp file then rename) and the derived labels.csv.
void save_project(const std::filesystem::path& dir, const ProjectState& state);

/// Throws Error("not a project") when project.json is absent, Error naming both
/// versions on a format mismatch, and Error listing every referenced file that is missing.
ProjectState load_project(const std::filesystem::path& dir);

/// Exclusive advisory lock on `<dir>/.lock`, released on destruction or process exit.
class ProjectLock {
 public:
  explicit ProjectLock(const std::filesystem::path& dir);
  ~ProjectLock();
  ProjectLock(const ProjectLock&) = delete;
  ProjectLock& operator=(const ProjectLock&) = delete;

 private:
  int fd_ = -1;
};

/// Source-image provenance for label export, keyed by crop id.
using CropIndex = std::map<std::string, CropRecord, std::less<>>;
CropIndex load_crop_index(const std::filesystem::path& dir, const ProjectState& state);

/// Header `File,RelativePath,CropId,Species,Labeler,TimestampUTC`; one row per labeled
/// crop in crop-id order.
std::string export_labels_csv(const ProjectState& state, const CropIndex& crops = {});

struct ImportRowError {
  std::size_t line = 0;
  std::string message;
};

class ImportError : public ValidationError {
 public:
  ImportError(const std::string& what, std::vector<ImportRowError> rows);
  const std::vector<ImportRowError>& rows() const noexcept { return rows_; }

 private:
  std::vector<ImportRowError> rows_;
};

/// Parses the label CSV without touching a project. Species must match a class name
/// exactly; a case-only mismatch is reported with a hint. Duplicate crop ids are errors.
std::vector<LabelRecord> parse_labels_csv(std::string_view text,
                                          std::span<const std::string> class_names);

/// Applies every row atomically via apply_labels. Any error throws ImportError and
/// returns nothing, so the caller's state is unchanged.
ProjectState import_labels_csv(std::string_view text, const ProjectState& state);

struct ProjectInit {
  std::string project_id;
  std::vector<std::string> class_names;
  std::vector<std::string> pool;  // queryable crop ids
  ValidationSet validation;
  std::string crops_manifest;
  std::size_t label_budget = 0;  // 0: whole pool
  Strategy strategy = Strategy::entropy;
  std::size_t batch_size = 25;
  std::uint64_t seed = 0;
  TrainConfig train;
};

/// Fresh project whose first pending batch is a uniform random seed set of two ids per
/// class (the labels are not known yet).
ProjectState make_project(const ProjectInit& init);

/// Label a set of crops on behalf of `labeler` at `timestamp`.
ProjectState label_items(const ProjectState& state,
                         std::span<const std::pair<std::string, std::string>> labels,
                         std::string_view labeler, std::int64_t timestamp);


/// Runs one round on the current labeled set; the embeddings must cover pool and
/// validation ids. Throws ValidationError when nothing was labeled since the last round.
RoundResult compute_round(const ProjectState& state, const EmbeddingStore& embeddings);

/// Writes rounds/NNNN/{model.alhd1,metrics.json,query.json} (refusing to overwrite an
/// existing round), then advances and saves the project.
ProjectState commit_round(const std::filesystem::path& dir, const ProjectState& state,
                          const RoundResult& result);

/// metrics.json body for a round.
nlohmann::json round_metrics_json(const RoundResult& result);

/// Learning curve assembled from every completed round's metrics.json.
LearningCurve load_curve(const std::filesystem::path& dir, const ProjectState& state);

}  // namespace camtrap
