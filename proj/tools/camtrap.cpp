#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "httplib.h"
#include "json.hpp"

#include "camtrap/active_learning.hpp"
#include "camtrap/classifier.hpp"
#include "camtrap/demo.hpp"
#include "camtrap/detection.hpp"
#include "camtrap/embedding.hpp"
#include "camtrap/evaluation.hpp"
#include "camtrap/fileio.hpp"
#include "camtrap/onnx_provider.hpp"
#include "camtrap/project.hpp"
#include "camtrap/service.hpp"
#include "camtrap/taxonomy.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace camtrap;

namespace {

constexpr int kUsage = 1;
constexpr int kDataError = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
  } else {
    write_file_atomic(out_path, text);
  }
}

void add_train_options(CLI::App* cmd, TrainConfig& train) {
  cmd->add_option("--lr", train.learning_rate, "learning rate")->capture_default_str();
  cmd->add_option("--momentum", train.momentum)->capture_default_str();
  cmd->add_option("--l2", train.l2_lambda, "L2 penalty on the weights")->capture_default_str();
  cmd->add_option("--batch", train.batch_size, "mini-batch size")->capture_default_str();
  cmd->add_option("--epochs", train.epochs)->capture_default_str();
  cmd->add_option("--train-seed", train.seed, "shuffle seed")->capture_default_str();
  cmd->add_option("--weight-cap", train.weight_cap)->capture_default_str();
}

struct Args {
  std::string project = ".";

  std::string detections, image_dir;
  double threshold = 0.2, padding = 0.05;
  std::string categories = "animal";

  std::string provider = "synthetic", model_path, input_store;
  std::size_t dim = 32;
  bool normalize = false;

  bool synthetic = false, no_images = false;
  std::string classes, validation_csv;
  std::size_t budget = 0, batch_size = 25;
  std::string strategy = "entropy", weight_mode = "inverse_frequency";
  std::uint64_t seed = 0;
  TrainConfig train;

  std::string out, labels_csv, model_file, confusion_csv;
  int port = 8080;
  std::string host = "127.0.0.1", static_dir;
};

int cmd_ingest(const Args& a) {
  IngestOptions options;
  options.min_confidence = a.threshold;
  options.padding_frac = a.padding;
  options.allowed_categories.clear();
  for (const auto& name : split_list(a.categories)) {
    const auto c = category_from_name(name);
    if (!c) throw UsageError("unknown category " + name);
    options.allowed_categories.insert(*c);
  }
  const auto batch = parse_detection_file(read_file(a.detections));
  const fs::path dir = a.project;
  ProjectLock lock(dir);
  const auto result = ingest_detections(batch, a.image_dir, {dir / "crops", "crops/"}, options);
  write_file_atomic(dir / "crops.csv", format_crop_manifest(result.crops));
  json summary = batch.summary.to_json();
  summary["crops"] = result.crops.size();
  summary["errors"] = result.errors;
  write_file_atomic(dir / "ingest_summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_embed(const Args& a) {
  const fs::path dir = a.project;
  ProjectLock lock(dir);
  const auto crops = parse_crop_manifest(read_file(dir / "crops.csv"));
  std::unique_ptr<EmbeddingProvider> provider;
  if (a.provider == "synthetic") {
    provider = std::make_unique<SyntheticProvider>(a.dim, a.seed);
  } else if (a.provider == "onnx") {
    if (a.model_path.empty()) throw UsageError("--model is required for the onnx provider");
    OnnxConfig config;
    config.model_path = a.model_path;
    provider = make_onnx_provider(config);
  } else if (a.provider == "precomputed") {
    if (a.input_store.empty()) throw UsageError("--input is required for precomputed vectors");
    provider = std::make_unique<PrecomputedProvider>(load_precomputed(a.input_store));
  } else {
    throw UsageError("unknown provider " + a.provider);
  }
  const auto result = embed_batch(*provider, crops, dir, {a.normalize});
  save_store(result.store, dir / "embeddings.emb1");
  json report{{"embedded", result.store.size()}, {"tag", result.store.provider_tag()},
              {"skipped", json::array()}};
  for (const auto& s : result.skipped) {
    report["skipped"].push_back({{"crop_id", s.crop_id}, {"reason", s.reason}});
  }
  std::cout << report.dump(2) << "\n";
  return 0;
}

int cmd_init(const Args& a) {
  const fs::path dir = a.project;
  if (fs::exists(dir / "project.json")) throw Error(dir.string() + " already holds a project");
  TrainConfig train = a.train;
  train.weight_mode = weight_mode_from_string(a.weight_mode);
  const Strategy strategy = strategy_from_string(a.strategy);
  if (a.synthetic) {
    SyntheticProjectOptions options;
    options.seed = a.seed;
    options.batch_size = a.batch_size;
    options.label_budget = a.budget;
    options.strategy = strategy;
    options.write_images = !a.no_images;
    options.train = train;
    const auto state = create_synthetic_project(dir, options);
    std::cout << "synthetic project " << state.project_id << ": " << state.pool.pool_size()
              << " pool crops, " << state.validation.ids.size() << " validation crops\n";
    return 0;
  }

  ProjectLock lock(dir);
  ProjectInit init;
  init.project_id = dir.filename().string();
  if (a.classes.empty()) {
    init.class_names.assign(kHongKongGroupings.begin(), kHongKongGroupings.end());
  } else {
    init.class_names = split_list(a.classes);
  }
  const auto store = load_precomputed(dir / "embeddings.emb1");
  if (fs::exists(dir / "crops.csv")) init.crops_manifest = "crops.csv";
  std::set<std::string> held_out;
  if (!a.validation_csv.empty()) {
    for (const auto& r : parse_labels_csv(read_file(a.validation_csv), init.class_names)) {
      if (!store.contains(r.crop_id)) throw ValidationError("validation crop " + r.crop_id + " has no embedding");
      const auto it = std::find(init.class_names.begin(), init.class_names.end(), r.species);
      init.validation.ids.push_back(r.crop_id);
      init.validation.labels.push_back(static_cast<int>(it - init.class_names.begin()));
      held_out.insert(r.crop_id);
    }
  }
  for (auto& id : store.ids()) {
    if (!held_out.contains(id)) init.pool.push_back(std::move(id));
  }
  init.label_budget = a.budget;
  init.strategy = strategy;
  init.batch_size = a.batch_size;
  init.seed = a.seed;
  init.train = train;
  const auto state = make_project(init);
  save_project(dir, state);
  std::cout << "project " << state.project_id << ": " << state.pool.pool_size()
            << " pool crops, first batch of " << state.pending_items().size() << "\n";
  return 0;
}

int cmd_simulate(const Args& a) {
  SimulationConfig config;
  config.strategy = strategy_from_string(a.strategy);
  config.batch_size = a.batch_size;
  config.budget = a.budget;
  config.seed = a.seed;
  config.train = a.train;
  config.train.weight_mode = weight_mode_from_string(a.weight_mode);

  SimulationResult result;
  if (a.labels_csv.empty()) {
    result = simulate(make_benchmark_dataset(a.seed), config);
  } else {
    // Replay a labeled project: its embeddings with the given labels as hidden truth.
    const fs::path dir = a.project;
    const auto state = load_project(dir);
    LabeledDataset data{load_precomputed(dir / state.embeddings_path), {}, state.class_names};
    for (const auto& r : parse_labels_csv(read_file(a.labels_csv), state.class_names)) {
      const auto it = std::find(state.class_names.begin(), state.class_names.end(), r.species);
      data.labels.emplace(r.crop_id, static_cast<int>(it - state.class_names.begin()));
    }
    std::vector<std::string> pool;
    std::set<std::string> held(state.validation.ids.begin(), state.validation.ids.end());
    for (const auto& [id, label] : data.labels) {
      if (!held.contains(id)) pool.push_back(id);
    }
    result = simulate(data, pool, state.validation, config);
  }
  emit(result.curve.to_csv(), a.out);
  return 0;
}

int cmd_train(const Args& a) {
  const fs::path dir = a.project;
  ProjectLock lock(dir);
  const auto state = load_project(dir);
  if (state.finished) throw Error("labeling is finished: " + state.stop_reason);
  const auto store = load_precomputed(dir / state.embeddings_path);
  const auto result = compute_round(state, store);
  const auto next = commit_round(dir, state, result);
  std::cout << round_metrics_json(result).dump(2) << "\n";
  if (next.finished) std::cout << "finished: " << next.stop_reason << "\n";
  return 0;
}

int cmd_evaluate(const Args& a) {
  const fs::path dir = a.project;
  const auto state = load_project(dir);
  fs::path model_path = a.model_file;
  if (model_path.empty()) {
    if (state.history.empty()) throw Error("no trained model yet; run `train` first");
    model_path = dir / state.history.back().model;
  }
  const auto model = load_model(model_path);
  const auto store = load_precomputed(dir / state.embeddings_path);
  const auto records = parse_labels_csv(read_file(a.labels_csv), model.class_names);
  std::vector<std::string> ids;
  std::vector<std::string> truths;
  for (const auto& r : records) {
    ids.push_back(r.crop_id);
    truths.push_back(r.species);
  }
  std::vector<std::string> preds;
  for (const auto& p : predict(model, store, ids)) preds.push_back(model.class_names[p.predicted]);
  const auto cm = confusion_matrix(truths, preds, model.class_names);
  const auto report = metrics(cm);
  if (!a.confusion_csv.empty()) write_file_atomic(a.confusion_csv, confusion_to_csv(cm));
  emit(json{{"report", to_json(report)}, {"confusion", to_json(cm)}}.dump(2) + "\n", a.out);
  return 0;
}

int cmd_export_curve(const Args& a) {
  const fs::path dir = a.project;
  const auto state = load_project(dir);
  emit(load_curve(dir, state).to_csv(), a.out);
  return 0;
}

int cmd_export_labels(const Args& a) {
  const fs::path dir = a.project;
  const auto state = load_project(dir);
  emit(export_labels_csv(state, load_crop_index(dir, state)), a.out);
  return 0;
}

int cmd_import_labels(const Args& a) {
  const fs::path dir = a.project;
  ProjectLock lock(dir);
  const auto state = load_project(dir);
  const auto next = import_labels_csv(read_file(a.labels_csv), state);
  save_project(dir, next);
  std::cout << "imported " << next.labels.size() - state.labels.size() << " labels\n";
  return 0;
}

int cmd_serve(const Args& a) {
  LabelingService::Options options;
  options.project_dir = a.project;
  LabelingService service(options);
  httplib::Server server;
  service.install_routes(server);
  if (!a.static_dir.empty() && !server.set_mount_point("/", a.static_dir)) {
    throw UsageError("cannot serve static files from " + a.static_dir);
  }
  std::cout << "listening on http://" << a.host << ":" << a.port << "\n" << std::flush;
  if (!server.listen(a.host, a.port)) throw Error("cannot listen on port " + std::to_string(a.port));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Camera-trap crop classification with active learning"};
  app.require_subcommand(1);
  Args a;
  app.add_option("-p,--project", a.project, "project directory")
      ->envname("CAMTRAP_PROJECT")
      ->capture_default_str();

  auto* ingest = app.add_subcommand("ingest", "crop detections into <project>/crops and crops.csv");
  ingest->add_option("detections", a.detections, "detector batch output (JSON)")->required();
  ingest->add_option("imagedir", a.image_dir, "root the detector's file paths are relative to")
      ->required();
  ingest->add_option("--threshold", a.threshold, "minimum detection confidence")->capture_default_str();
  ingest->add_option("--padding", a.padding, "padding as a fraction of box side")->capture_default_str();
  ingest->add_option("--categories", a.categories, "comma-separated: animal,person,vehicle")
      ->capture_default_str();

  auto* embed = app.add_subcommand("embed", "embed every crop into embeddings.emb1");
  embed->add_option("--provider", a.provider, "synthetic | onnx | precomputed")->capture_default_str();
  embed->add_option("--model", a.model_path, "ONNX backbone");
  embed->add_option("--input", a.input_store, "EMB1 file with precomputed vectors");
  embed->add_option("--dim", a.dim, "synthetic provider dimension")->capture_default_str();
  embed->add_option("--seed", a.seed)->capture_default_str();
  embed->add_flag("--normalize", a.normalize, "L2-normalize every vector");

  auto* init = app.add_subcommand("init-project", "start a labeling project");
  init->add_flag("--synthetic", a.synthetic, "generate the fifteen-class benchmark project");
  init->add_flag("--no-images", a.no_images, "skip crop tiles for --synthetic");
  init->add_option("--classes", a.classes, "comma-separated species names");
  init->add_option("--validation", a.validation_csv, "label CSV of held-out crops");

  auto* sim = app.add_subcommand("simulate", "replay the labeling loop with known labels");
  sim->add_option("--labels", a.labels_csv, "hidden labels (label CSV); default: benchmark dataset");
  sim->add_option("--out", a.out, "learning-curve CSV (default stdout)");

  for (auto* cmd : {init, sim}) {
    cmd->add_option("--strategy", a.strategy, "entropy | margin | least_confidence | random")
        ->capture_default_str();
    cmd->add_option("--budget", a.budget, "label budget (0: whole pool)")->capture_default_str();
    cmd->add_option("--batch-size", a.batch_size, "query batch size")->capture_default_str();
    cmd->add_option("--seed", a.seed)->capture_default_str();
    cmd->add_option("--weight-mode", a.weight_mode, "none | inverse_frequency")->capture_default_str();
    add_train_options(cmd, a.train);
  }

  auto* train = app.add_subcommand("train", "run one round on the current labels");
  auto* evaluate = app.add_subcommand("evaluate", "score the latest model against a label CSV");
  evaluate->add_option("labels", a.labels_csv)->required();
  evaluate->add_option("--model", a.model_file, "model file (default: latest round)");
  evaluate->add_option("--confusion-csv", a.confusion_csv);
  evaluate->add_option("--out", a.out);

  auto* curve = app.add_subcommand("export-curve", "learning curve of the completed rounds");
  curve->add_option("--out", a.out);
  auto* exp = app.add_subcommand("export-labels", "labels in Timelapse-joinable CSV");
  exp->add_option("--out", a.out);
  auto* imp = app.add_subcommand("import-labels", "apply a label CSV (all or nothing)");
  imp->add_option("labels", a.labels_csv)->required();

  auto* serve = app.add_subcommand("serve", "HTTP API for the labeling client");
  serve->add_option("--port", a.port)->capture_default_str();
  serve->add_option("--host", a.host)->capture_default_str();
  serve->add_option("--static", a.static_dir, "directory served at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*ingest) return cmd_ingest(a);
    if (*embed) return cmd_embed(a);
    if (*init) return cmd_init(a);
    if (*sim) return cmd_simulate(a);
    if (*train) return cmd_train(a);
    if (*evaluate) return cmd_evaluate(a);
    if (*curve) return cmd_export_curve(a);
    if (*exp) return cmd_export_labels(a);
    if (*imp) return cmd_import_labels(a);
    if (*serve) return cmd_serve(a);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    for (const auto& d : e.details()) std::cerr << "  " << d << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}
