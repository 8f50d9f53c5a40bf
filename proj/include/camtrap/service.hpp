#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "json.hpp"

#include "camtrap/embedding.hpp"
#include "camtrap/project.hpp"

namespace httplib {
class Server;
}

namespace camtrap {

enum class TrainingStatus { idle, training, error };
std::string_view to_string(TrainingStatus status) noexcept;

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

/// Builds the `{code, message, details[]}` error body.
ApiResponse api_error(int status, std::string message, std::vector<std::string> details = {});

/// The human-in-the-loop state machine behind the HTTP API.
///
/// Every mutation runs on one writer thread, in submission order, and is saved to the
/// project directory before its response is produced. Reads copy an immutable snapshot
/// and never wait for training. Retraining runs on its own thread; while it runs, label
/// submissions are rejected with 409 instead of being queued.
class LabelingService {
 public:
  struct Options {
    std::filesystem::path project_dir;  // empty: no active project (endpoints answer 404)
    std::string labeler = "web";
    std::function<std::int64_t()> clock;  // UTC seconds; defaults to the system clock
  };

  explicit LabelingService(Options options);
  ~LabelingService();

  LabelingService(const LabelingService&) = delete;
  LabelingService& operator=(const LabelingService&) = delete;

  ApiResponse get_batch() const;
  /// Body: [{"crop_id": ..., "species": ...}, ...] or {"labels": [...]}.
  ApiResponse post_labels(const nlohmann::json& body);
  ApiResponse post_retrain();
  ApiResponse get_metrics() const;
  ApiResponse get_status() const;

  /// Path of a crop image on disk, if the id is in the manifest.
  std::optional<std::filesystem::path> crop_file(std::string_view crop_id) const;

  /// Blocks until no training job is running. Test helper.
  void wait_until_idle() const;

  /// Registers every /api/v1 route on `server`.
  void install_routes(httplib::Server& server);

 private:
  struct Snapshot {
    std::shared_ptr<const ProjectState> project;
    TrainingStatus status = TrainingStatus::idle;
    std::string error;
  };

  Snapshot snapshot() const;
  ApiResponse session_view(const Snapshot& snap) const;
  std::future<ApiResponse> submit(std::function<ApiResponse()> command);
  void writer_loop();
  void start_training(std::shared_ptr<const ProjectState> project);
  void publish(std::shared_ptr<const ProjectState> project, TrainingStatus status,
               std::string error = {});

  Options options_;
  std::unique_ptr<ProjectLock> lock_;
  std::shared_ptr<const EmbeddingStore> embeddings_;
  CropIndex crops_;

  mutable std::mutex snapshot_mutex_;
  mutable std::condition_variable idle_cv_;
  Snapshot current_;

  std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::deque<std::packaged_task<ApiResponse()>> queue_;
  bool stopping_ = false;
  std::thread writer_;
  std::thread trainer_;
};

}  // namespace camtrap
