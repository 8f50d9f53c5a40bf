#include "camtrap/service.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "httplib.h"

#include "camtrap/fileio.hpp"

namespace camtrap {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(TrainingStatus status) noexcept {
  switch (status) {
    case TrainingStatus::idle: return "idle";
    case TrainingStatus::training: return "training";
    case TrainingStatus::error: return "error";
  }
  return "idle";
}

ApiResponse api_error(int status, std::string message, std::vector<std::string> details) {
  return {status, json{{"code", status}, {"message", std::move(message)}, {"details", details}}};
}

LabelingService::LabelingService(Options options) : options_(std::move(options)) {
  if (!options_.clock) options_.clock = now_utc;
  if (!options_.project_dir.empty()) {
    lock_ = std::make_unique<ProjectLock>(options_.project_dir);
    auto project = std::make_shared<const ProjectState>(load_project(options_.project_dir));
    embeddings_ = std::make_shared<const EmbeddingStore>(
        load_precomputed(options_.project_dir / project->embeddings_path));
    crops_ = load_crop_index(options_.project_dir, *project);
    current_.project = std::move(project);
  }
  writer_ = std::thread([this] { writer_loop(); });
}

LabelingService::~LabelingService() {
  // The trainer commits through the writer queue, so it has to finish first.
  if (trainer_.joinable()) trainer_.join();
  {
    std::lock_guard lock(queue_mutex_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  writer_.join();
}

LabelingService::Snapshot LabelingService::snapshot() const {
  std::lock_guard lock(snapshot_mutex_);
  return current_;
}

void LabelingService::publish(std::shared_ptr<const ProjectState> project, TrainingStatus status,
                              std::string error) {
  {
    std::lock_guard lock(snapshot_mutex_);
    current_.project = std::move(project);
    current_.status = status;
    current_.error = std::move(error);
  }
  idle_cv_.notify_all();
}

void LabelingService::wait_until_idle() const {
  std::unique_lock lock(snapshot_mutex_);
  idle_cv_.wait(lock, [this] { return current_.status != TrainingStatus::training; });
}

std::future<ApiResponse> LabelingService::submit(std::function<ApiResponse()> command) {
  std::packaged_task<ApiResponse()> task(std::move(command));
  auto future = task.get_future();
  {
    std::lock_guard lock(queue_mutex_);
    queue_.push_back(std::move(task));
  }
  queue_cv_.notify_one();
  return future;
}

void LabelingService::writer_loop() {
  for (;;) {
    std::packaged_task<ApiResponse()> task;
    {
      std::unique_lock lock(queue_mutex_);
      queue_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      task = std::move(queue_.front());
      queue_.pop_front();
    }
    task();
  }
}

namespace {

json status_json(TrainingStatus status, const std::string& error) {
  json j{{"state", to_string(status)}};
  if (status == TrainingStatus::error) j["message"] = error;
  return j;
}

json counts_json(const ProjectState& p) {
  return json{{"labeled", p.pool.labeled.size()},
              {"unlabeled", p.pool.unlabeled.size()},
              {"budget", p.pool.label_budget}};
}

ApiResponse training_conflict() {
  auto r = api_error(409, "training in progress; retry when status is idle");
  r.body["status"] = status_json(TrainingStatus::training, {});
  return r;
}

}  // namespace

ApiResponse LabelingService::session_view(const Snapshot& snap) const {
  const ProjectState& p = *snap.project;
  json pending = json::array();
  for (const auto& item : p.pending_items()) {
    json suggestions = json::array();
    std::vector<std::size_t> order(item.probs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return item.probs[a] > item.probs[b]; });
    for (std::size_t i = 0; i < std::min<std::size_t>(3, order.size()); ++i) {
      suggestions.push_back({{"species", p.class_names[order[i]]}, {"prob", item.probs[order[i]]}});
    }
    pending.push_back({{"crop_id", item.crop_id},
                       {"image_url", "/api/v1/crops/" + item.crop_id},
                       {"probs", item.probs},
                       {"score", item.score},
                       {"suggestions", suggestions}});
  }
  return {200, json{{"round", p.pool.round},
                    {"batch_round", p.pending ? json(p.pending->round) : json(nullptr)},
                    {"batch_size", p.pending ? p.pending->items.size() : 0},
                    {"pending", pending},
                    {"counts", counts_json(p)},
                    {"class_names", p.class_names},
                    {"status", status_json(snap.status, snap.error)},
                    {"finished", p.finished},
                    {"stop_reason", p.stop_reason}}};
}

ApiResponse LabelingService::get_batch() const {
  const auto snap = snapshot();
  if (!snap.project) return api_error(404, "no active project");
  if (snap.status == TrainingStatus::training) return training_conflict();
  return session_view(snap);
}

ApiResponse LabelingService::get_status() const {
  const auto snap = snapshot();
  if (!snap.project) return api_error(404, "no active project");
  const ProjectState& p = *snap.project;
  return {200, json{{"round", p.pool.round},
                    {"status", status_json(snap.status, snap.error)},
                    {"counts", counts_json(p)},
                    {"pending", p.pending_items().size()},
                    {"finished", p.finished}}};
}

ApiResponse LabelingService::post_labels(const json& body) {
  return submit([this, body]() -> ApiResponse {
           const auto snap = snapshot();
           if (!snap.project) return api_error(404, "no active project");
           if (snap.status == TrainingStatus::training) return training_conflict();
           const ProjectState& p = *snap.project;

           const json* rows = &body;
           if (body.is_object() && body.contains("labels")) rows = &body.at("labels");
           if (!rows->is_array() || rows->empty()) {
             return api_error(422, "body must be a non-empty list of {crop_id, species}");
           }
           std::set<std::string> pending_ids;
           for (const auto& item : p.pending_items()) pending_ids.insert(item.crop_id);

           std::vector<std::pair<std::string, std::string>> labels;
           std::vector<std::string> problems;
           std::set<std::string> seen;
           for (std::size_t i = 0; i < rows->size(); ++i) {
             const json& row = (*rows)[i];
             const std::string where = "row " + std::to_string(i);
             if (!row.is_object() || !row.contains("crop_id") || !row.contains("species") ||
                 !row["crop_id"].is_string() || !row["species"].is_string()) {
               problems.push_back(where + ": expected {\"crop_id\": string, \"species\": string}");
               continue;
             }
             const auto id = row["crop_id"].get<std::string>();
             const auto species = row["species"].get<std::string>();
             bool ok = true;
             if (!pending_ids.contains(id)) {
               problems.push_back(where + " (" + id + "): not a pending item of the current batch");
               ok = false;
             } else if (!seen.insert(id).second) {
               problems.push_back(where + " (" + id + "): submitted twice");
               ok = false;
             }
             if (std::find(p.class_names.begin(), p.class_names.end(), species) ==
                 p.class_names.end()) {
               problems.push_back(where + " (" + id + "): unknown species \"" + species + "\"");
               ok = false;
             }
             if (ok) labels.emplace_back(id, species);
           }
           if (!problems.empty()) return api_error(422, "labels rejected; nothing applied", problems);

           auto next = std::make_shared<ProjectState>(
               label_items(p, labels, options_.labeler, options_.clock()));
           save_project(options_.project_dir, *next);
           std::shared_ptr<const ProjectState> saved = next;
           if (saved->pending_items().empty()) {
             start_training(saved);
           } else {
             publish(saved, snap.status == TrainingStatus::error ? TrainingStatus::idle : snap.status);
           }
           return session_view(snapshot());
         })
      .get();
}

ApiResponse LabelingService::post_retrain() {
  return submit([this]() -> ApiResponse {
           const auto snap = snapshot();
           if (!snap.project) return api_error(404, "no active project");
           if (snap.status == TrainingStatus::training) return training_conflict();
           if (snap.project->finished) {
             return api_error(409, "labeling is finished: " + snap.project->stop_reason);
           }
           const auto& p = *snap.project;
           if (p.pool.labeled.empty()) return api_error(422, "nothing is labeled yet");
           if (!p.history.empty() && p.pool.labeled.size() <= p.history.back().labels_used) {
             return api_error(422, "no new labels since the last round");
           }
           start_training(snap.project);
           return session_view(snapshot());
         })
      .get();
}

// Runs on the writer thread.
void LabelingService::start_training(std::shared_ptr<const ProjectState> project) {
  if (trainer_.joinable()) trainer_.join();
  publish(project, TrainingStatus::training);
  trainer_ = std::thread([this, project] {
    std::optional<RoundResult> result;
    std::string failure;
    try {
      result = compute_round(*project, *embeddings_);
    } catch (const std::exception& e) {
      failure = e.what();
    }
    submit([this, project, &result, &failure]() -> ApiResponse {
      if (!result) {
        publish(project, TrainingStatus::error, failure);
        return {};
      }
      try {
        auto next = std::make_shared<const ProjectState>(
            commit_round(options_.project_dir, *project, *result));
        publish(next, TrainingStatus::idle);
      } catch (const std::exception& e) {
        publish(project, TrainingStatus::error, e.what());
      }
      return {};
    }).get();
  });
}

ApiResponse LabelingService::get_metrics() const {
  const auto snap = snapshot();
  if (!snap.project) return api_error(404, "no active project");
  const ProjectState& p = *snap.project;
  if (p.history.empty()) return api_error(404, "no round has completed yet");
  json curve = json::array();
  for (const auto& point : load_curve(options_.project_dir, p).points()) {
    curve.push_back(to_json(point));
  }
  return {200, json{{"curve", curve},
                    {"latest", json::parse(read_file(options_.project_dir /
                                                     p.history.back().metrics))}}};
}

std::optional<fs::path> LabelingService::crop_file(std::string_view crop_id) const {
  const auto it = crops_.find(crop_id);
  if (it == crops_.end() || it->second.crop_path.empty()) return std::nullopt;
  fs::path path = options_.project_dir / it->second.crop_path;
  if (!fs::exists(path)) return std::nullopt;
  return path;
}

namespace {

void send(httplib::Response& res, const ApiResponse& r) {
  res.status = r.status;
  res.set_header("Cache-Control", "no-store");
  res.set_content(r.body.dump(), "application/json");
}

}  // namespace

void LabelingService::install_routes(httplib::Server& server) {
  server.Get("/api/v1/batch", [this](const httplib::Request&, httplib::Response& res) {
    send(res, get_batch());
  });
  server.Get("/api/v1/status", [this](const httplib::Request&, httplib::Response& res) {
    send(res, get_status());
  });
  server.Get("/api/v1/metrics", [this](const httplib::Request&, httplib::Response& res) {
    send(res, get_metrics());
  });
  server.Post("/api/v1/labels", [this](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error& e) {
      send(res, api_error(400, "request body is not JSON", {e.what()}));
      return;
    }
    send(res, post_labels(body));
  });
  server.Post("/api/v1/retrain", [this](const httplib::Request&, httplib::Response& res) {
    send(res, post_retrain());
  });
  // httplib answers HEAD through the GET handler and drops the body.
  server.Get(R"(/api/v1/crops/([^/]+))", [this](const httplib::Request& req,
                                                httplib::Response& res) {
    if (!snapshot().project) {
      send(res, api_error(404, "no active project"));
      return;
    }
    const auto path = crop_file(req.matches[1].str());
    if (!path) {
      send(res, api_error(404, "unknown crop id " + req.matches[1].str()));
      return;
    }
    res.status = 200;
    res.set_header("Cache-Control", "public, max-age=31536000, immutable");
    res.set_content(read_file(*path), "image/png");
  });
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res,
                                  std::exception_ptr ep) {
    std::string message = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      message = e.what();
    } catch (...) {
    }
    send(res, api_error(500, message));
  });
}

}  // namespace camtrap
