#include "camtrap/project.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <set>

#include "camtrap/csv.hpp"
#include "camtrap/fileio.hpp"
#include "camtrap/random.hpp"

namespace camtrap {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {
constexpr std::string_view kLabelsHeader = "File,RelativePath,CropId,Species,Labeler,TimestampUTC";
}

std::string format_utc(std::int64_t seconds) {
  const std::time_t t = static_cast<std::time_t>(seconds);
  std::tm tm{};
  if (gmtime_r(&t, &tm) == nullptr) throw ValidationError("timestamp out of range");
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::int64_t parse_utc(std::string_view text) {
  std::tm tm{};
  char z = 0;
  const std::string s(text);
  int consumed = 0;
  if (std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%c%n", &tm.tm_year, &tm.tm_mon, &tm.tm_mday,
                  &tm.tm_hour, &tm.tm_min, &tm.tm_sec, &z, &consumed) != 7 ||
      z != 'Z' || static_cast<std::size_t>(consumed) != s.size()) {
    throw ValidationError("timestamp \"" + s + "\" is not ISO-8601 UTC (YYYY-MM-DDTHH:MM:SSZ)");
  }
  tm.tm_year -= 1900;
  tm.tm_mon -= 1;
  return static_cast<std::int64_t>(timegm(&tm));
}

std::int64_t now_utc() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::vector<QueryItem> ProjectState::pending_items() const {
  std::vector<QueryItem> out;
  if (!pending) return out;
  for (const auto& item : pending->items) {
    if (pool.is_unlabeled(item.crop_id)) out.push_back(item);
  }
  return out;
}

void ProjectState::validate() const {
  std::vector<std::string> problems;
  if (class_names.size() < 2) problems.push_back("a project needs at least two classes");
  if (history.size() != pool.round) {
    problems.push_back("round history has " + std::to_string(history.size()) +
                       " entries but the pool is at round " + std::to_string(pool.round));
  }
  if (labels.size() != pool.labeled.size()) {
    problems.push_back("label records and labeled set differ in size");
  }
  for (const auto& [id, label] : pool.labeled) {
    const auto it = labels.find(id);
    if (it == labels.end() || label < 0 ||
        static_cast<std::size_t>(label) >= class_names.size() ||
        it->second.species != class_names[static_cast<std::size_t>(label)]) {
      problems.push_back(id + ": label record disagrees with the labeled set");
    }
  }
  const std::set<std::string_view> pool_ids(pool.unlabeled.begin(), pool.unlabeled.end());
  for (const auto& id : validation.ids) {
    if (pool_ids.contains(id) || pool.labeled.contains(id)) {
      problems.push_back(id + ": validation item is also in the pool");
    }
  }
  if (!problems.empty()) throw ValidationError("inconsistent project state", problems);
}

namespace {

json train_to_json(const TrainConfig& c) {
  return json{{"learning_rate", c.learning_rate}, {"momentum", c.momentum},
              {"l2_lambda", c.l2_lambda},         {"batch_size", c.batch_size},
              {"epochs", c.epochs},               {"seed", c.seed},
              {"weight_mode", to_string(c.weight_mode)}, {"weight_cap", c.weight_cap}};
}

TrainConfig train_from_json(const json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.l2_lambda = j.at("l2_lambda").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.weight_mode = weight_mode_from_string(j.at("weight_mode").get<std::string>());
  c.weight_cap = j.at("weight_cap").get<double>();
  return c;
}

}  // namespace

json to_json(const ProjectState& s) {
  json labels = json::array();
  for (const auto& [id, r] : s.labels) {
    labels.push_back({{"crop_id", r.crop_id},
                      {"species", r.species},
                      {"labeler", r.labeler},
                      {"timestamp", format_utc(r.timestamp)}});
  }
  json validation = json::array();
  for (std::size_t i = 0; i < s.validation.ids.size(); ++i) {
    validation.push_back({{"crop_id", s.validation.ids[i]},
                          {"species", s.class_names.at(static_cast<std::size_t>(s.validation.labels[i]))}});
  }
  json history = json::array();
  for (const auto& h : s.history) {
    history.push_back({{"round", h.round}, {"labels_used", h.labels_used}, {"model", h.model}, {"metrics", h.metrics},
                       {"query", h.query}});
  }
  return json{
      {"format_version", s.format_version},
      {"project_id", s.project_id},
      {"class_names", s.class_names},
      {"embeddings", s.embeddings_path},
      {"crops_manifest", s.crops_manifest},
      {"pool",
       {{"round", s.pool.round},
        {"label_budget", s.pool.label_budget},
        {"strategy", to_string(s.pool.strategy)},
        {"batch_size_query", s.pool.batch_size_query},
        {"seed", s.pool.seed},
        {"unlabeled", s.pool.unlabeled}}},
      {"labels", labels},
      {"validation", validation},
      {"pending", s.pending ? to_json(*s.pending) : json(nullptr)},
      {"history", history},
      {"train", train_to_json(s.train)},
      {"finished", s.finished},
      {"stop_reason", s.stop_reason},
  };
}

ProjectState project_from_json(const json& j) {
  ProjectState s;
  s.format_version = j.at("format_version").get<int>();
  if (s.format_version != kProjectFormatVersion) {
    throw Error("project format version " + std::to_string(s.format_version) +
                " cannot be migrated; this build reads version " +
                std::to_string(kProjectFormatVersion));
  }
  s.project_id = j.at("project_id").get<std::string>();
  s.class_names = j.at("class_names").get<std::vector<std::string>>();
  s.embeddings_path = j.at("embeddings").get<std::string>();
  s.crops_manifest = j.at("crops_manifest").get<std::string>();

  const auto& pool = j.at("pool");
  s.pool.round = pool.at("round").get<std::size_t>();
  s.pool.label_budget = pool.at("label_budget").get<std::size_t>();
  s.pool.strategy = strategy_from_string(pool.at("strategy").get<std::string>());
  s.pool.batch_size_query = pool.at("batch_size_query").get<std::size_t>();
  s.pool.seed = pool.at("seed").get<std::uint64_t>();
  s.pool.unlabeled = pool.at("unlabeled").get<std::vector<std::string>>();
  if (!std::is_sorted(s.pool.unlabeled.begin(), s.pool.unlabeled.end())) {
    throw ValidationError("project.json: unlabeled ids must be sorted");
  }

  const auto class_index = [&](const std::string& species) {
    const auto it = std::find(s.class_names.begin(), s.class_names.end(), species);
    if (it == s.class_names.end()) {
      throw ValidationError("project.json: unknown species \"" + species + "\"");
    }
    return static_cast<int>(it - s.class_names.begin());
  };
  for (const auto& r : j.at("labels")) {
    LabelRecord rec{r.at("crop_id").get<std::string>(), r.at("species").get<std::string>(),
                    r.at("labeler").get<std::string>(),
                    parse_utc(r.at("timestamp").get<std::string>())};
    s.pool.labeled.emplace(rec.crop_id, class_index(rec.species));
    s.labels.emplace(rec.crop_id, std::move(rec));
  }
  for (const auto& v : j.at("validation")) {
    s.validation.ids.push_back(v.at("crop_id").get<std::string>());
    s.validation.labels.push_back(class_index(v.at("species").get<std::string>()));
  }
  if (!j.at("pending").is_null()) s.pending = query_batch_from_json(j.at("pending"));
  for (const auto& h : j.at("history")) {
    s.history.push_back({h.at("round").get<std::size_t>(), h.at("labels_used").get<std::size_t>(),
                         h.at("model").get<std::string>(),
                         h.at("metrics").get<std::string>(), h.at("query").get<std::string>()});
  }
  s.train = train_from_json(j.at("train"));
  s.finished = j.at("finished").get<bool>();
  s.stop_reason = j.at("stop_reason").get<std::string>();
  s.validate();
  return s;
}

CropIndex load_crop_index(const fs::path& dir, const ProjectState& state) {
  CropIndex index;
  if (state.crops_manifest.empty()) return index;
  for (auto& c : parse_crop_manifest(read_file(dir / state.crops_manifest))) {
    const std::string id = c.crop_id;
    index.emplace(id, std::move(c));
  }
  return index;
}

void save_project(const fs::path& dir, const ProjectState& state) {
  state.validate();
  fs::create_directories(dir);
  write_file_atomic(dir / "project.json", to_json(state).dump(2) + "\n");
  const CropIndex crops = fs::exists(dir / state.crops_manifest) && !state.crops_manifest.empty()
                              ? load_crop_index(dir, state)
                              : CropIndex{};
  write_file_atomic(dir / "labels.csv", export_labels_csv(state, crops));
}

ProjectState load_project(const fs::path& dir) {
  const fs::path file = dir / "project.json";
  if (!fs::exists(file)) throw Error("not a project: " + dir.string() + " has no project.json");
  const std::string text = read_file(file);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("project.json is malformed at byte " + std::to_string(e.byte), e.byte);
  }
  if (!j.is_object() || !j.contains("format_version")) {
    throw Error("not a project: project.json lacks format_version");
  }
  ProjectState state;
  try {
    state = project_from_json(j);
  } catch (const json::exception& e) {
    throw ParseError(std::string("project.json: ") + e.what());
  }

  std::vector<std::string> missing;
  const auto require = [&](const std::string& rel) {
    if (!fs::exists(dir / rel)) missing.push_back((dir / rel).string());
  };
  require(state.embeddings_path);
  if (!state.crops_manifest.empty()) require(state.crops_manifest);
  for (const auto& h : state.history) {
    require(h.model);
    require(h.metrics);
    require(h.query);
  }
  if (!missing.empty()) throw ValidationError("project references missing files", missing);
  return state;
}

ProjectLock::ProjectLock(const fs::path& dir) {
  fs::create_directories(dir);
  const fs::path path = dir / ".lock";
  fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error("cannot open lock file " + path.string());
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw Error("project " + dir.string() + " is locked by another writer");
  }
}

ProjectLock::~ProjectLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

std::string export_labels_csv(const ProjectState& state, const CropIndex& crops) {
  std::string out(kLabelsHeader);
  out.push_back('\n');
  for (const auto& [id, r] : state.labels) {
    std::string file;
    std::string relative;
    if (const auto it = crops.find(id); it != crops.end()) {
      const fs::path source(it->second.source_image);
      file = source.filename().generic_string();
      relative = source.parent_path().generic_string();
    }
    out += csv::format_row({file, relative, r.crop_id, r.species, r.labeler,
                            format_utc(r.timestamp)});
  }
  return out;
}

ImportError::ImportError(const std::string& what, std::vector<ImportRowError> rows)
    : ValidationError(what,
                      [&] {
                        std::vector<std::string> details;
                        for (const auto& r : rows) {
                          details.push_back("line " + std::to_string(r.line) + ": " + r.message);
                        }
                        return details;
                      }()),
      rows_(std::move(rows)) {}

std::vector<LabelRecord> parse_labels_csv(std::string_view text,
                                          std::span<const std::string> class_names) {
  const auto rows = csv::parse(text);
  if (rows.empty() || csv::format_row(rows.front()) != std::string(kLabelsHeader) + "\n") {
    throw ImportError("label CSV header must be " + std::string(kLabelsHeader),
                      {{1, "bad header"}});
  }
  const auto lower = [](std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
  };

  std::vector<LabelRecord> records;
  std::vector<ImportRowError> errors;
  std::map<std::string, std::size_t> first_line;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const std::size_t line = i + 1;
    if (row.size() != 6) {
      errors.push_back({line, "expected 6 fields, found " + std::to_string(row.size())});
      continue;
    }
    LabelRecord r{row[2], row[3], row[4], 0};
    bool ok = true;
    if (r.crop_id.empty()) {
      errors.push_back({line, "empty CropId"});
      ok = false;
    } else if (const auto [it, inserted] = first_line.emplace(r.crop_id, line); !inserted) {
      errors.push_back({line, "duplicate CropId " + r.crop_id + " (first on line " +
                                  std::to_string(it->second) + ")"});
      ok = false;
    }
    if (std::find(class_names.begin(), class_names.end(), r.species) == class_names.end()) {
      std::string message = "unknown species \"" + r.species + "\"";
      for (const auto& name : class_names) {
        if (lower(name) == lower(r.species)) {
          message += "; did you mean \"" + name + "\"? (species names are case-sensitive)";
          break;
        }
      }
      errors.push_back({line, message});
      ok = false;
    }
    if (!row[5].empty()) {
      try {
        r.timestamp = parse_utc(row[5]);
      } catch (const ValidationError& e) {
        errors.push_back({line, e.what()});
        ok = false;
      }
    }
    if (ok) records.push_back(std::move(r));
  }
  if (!errors.empty()) throw ImportError("label CSV rejected; nothing applied", errors);
  return records;
}

ProjectState import_labels_csv(std::string_view text, const ProjectState& state) {
  const auto records = parse_labels_csv(text, state.class_names);
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& r : records) pairs.emplace_back(r.crop_id, r.species);

  ProjectState next = state;
  try {
    next.pool = apply_labels(state.pool, pairs, state.class_names);
  } catch (const ValidationError& e) {
    std::map<std::string, std::size_t> line_of;
    for (std::size_t i = 0; i < records.size(); ++i) line_of[records[i].crop_id] = i + 2;
    std::vector<ImportRowError> rows;
    for (const auto& detail : e.details()) {
      const auto id = detail.substr(0, detail.find(':'));
      rows.push_back({line_of.contains(id) ? line_of[id] : 0, detail});
    }
    throw ImportError("label CSV rejected; nothing applied", rows);
  }
  for (auto r : records) {
    if (r.labeler.empty()) r.labeler = "import";
    const std::string id = r.crop_id;
    next.labels.emplace(id, std::move(r));
  }
  return next;
}

ProjectState make_project(const ProjectInit& init) {
  init.train.validate();
  ProjectState s;
  s.project_id = init.project_id;
  s.class_names = init.class_names;
  s.crops_manifest = init.crops_manifest;
  const std::size_t budget =
      init.label_budget == 0 ? init.pool.size() : std::min(init.label_budget, init.pool.size());
  s.pool = make_pool(init.pool, budget, init.strategy, init.batch_size, init.seed);
  s.validation = init.validation;
  s.train = init.train;

  QueryBatch seed_batch;
  seed_batch.round = 0;
  const auto seeds = random_seed_set(s.pool.unlabeled,
                                     std::min(budget, 2 * init.class_names.size()),
                                     mix_seed(init.seed, 2));
  for (const auto& id : seeds) seed_batch.items.push_back({id, 0.0, {}});
  s.pending = std::move(seed_batch);
  s.validate();
  return s;
}

ProjectState label_items(const ProjectState& state,
                         std::span<const std::pair<std::string, std::string>> labels,
                         std::string_view labeler, std::int64_t timestamp) {
  ProjectState next = state;
  next.pool = apply_labels(state.pool, labels, state.class_names);
  for (const auto& [id, species] : labels) {
    next.labels.emplace(id, LabelRecord{id, species, std::string(labeler), timestamp});
  }
  return next;
}

RoundResult compute_round(const ProjectState& state, const EmbeddingStore& embeddings) {
  if (!state.history.empty() && state.pool.labeled.size() <= state.history.back().labels_used) {
    throw ValidationError("no new labels since round " + std::to_string(state.history.back().round));
  }
  return run_round(state.pool, embeddings, state.validation, state.train, state.class_names);
}

json round_metrics_json(const RoundResult& result) {
  return json{{"round", result.state.round},
              {"labels_used", result.point.labels_used},
              {"point", to_json(result.point)},
              {"report", to_json(result.report)},
              {"confusion", to_json(result.confusion)},
              {"final_train_loss", result.history.final_loss},
              {"finished", result.finished},
              {"stop_reason", result.stop_reason}};
}

ProjectState commit_round(const fs::path& dir, const ProjectState& state,
                          const RoundResult& result) {
  if (result.state.round != state.pool.round + 1) {
    throw ValidationError("round result does not follow the project's current round");
  }
  char name[16];
  std::snprintf(name, sizeof name, "%04zu", result.state.round);
  const fs::path rel = fs::path("rounds") / name;
  const fs::path final_dir = dir / rel;
  const fs::path staging = dir / "rounds" / (std::string(name) + ".tmp");
  if (fs::exists(final_dir)) {
    throw Error("round artifacts " + final_dir.string() + " already exist and are immutable");
  }
  fs::remove_all(staging);
  fs::create_directories(staging);
  save_model(result.model, staging / "model.alhd1");
  write_file_atomic(staging / "metrics.json", round_metrics_json(result).dump(2) + "\n");
  const QueryBatch batch = result.batch.value_or(QueryBatch{result.state.round, {}});
  write_file_atomic(staging / "query.json", to_json(batch).dump(2) + "\n");
  fs::rename(staging, final_dir);

  ProjectState next = state;
  next.pool = result.state;
  next.pending = result.batch;
  next.finished = result.finished;
  next.stop_reason = result.stop_reason;
  next.history.push_back({result.state.round, result.point.labels_used, (rel / "model.alhd1").generic_string(),
                          (rel / "metrics.json").generic_string(),
                          (rel / "query.json").generic_string()});
  save_project(dir, next);
  return next;
}

LearningCurve load_curve(const fs::path& dir, const ProjectState& state) {
  LearningCurve curve;
  for (const auto& h : state.history) {
    const json j = json::parse(read_file(dir / h.metrics));
    curve.append(curve_point_from_json(j.at("point")));
  }
  return curve;
}

}  // namespace camtrap
