#include "camtrap/detection.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <opencv2/core.hpp>

#include "camtrap/binary_io.hpp"
#include "camtrap/csv.hpp"
#include "camtrap/error.hpp"
#include "camtrap/fileio.hpp"
#include "camtrap/hashing.hpp"
#include "image_io.hpp"
#include "parallel.hpp"

namespace camtrap {

using nlohmann::json;

std::string_view to_string(Category category) noexcept {
  switch (category) {
    case Category::animal:
      return "animal";
    case Category::person:
      return "person";
    case Category::vehicle:
      return "vehicle";
  }
  return "unknown";
}

std::optional<Category> category_from_name(std::string_view name) noexcept {
  if (name == "animal") return Category::animal;
  if (name == "person") return Category::person;
  if (name == "vehicle") return Category::vehicle;
  return std::nullopt;
}

std::string check_box(const NormalizedBox& box) {
  if (!std::isfinite(box.x) || !std::isfinite(box.y) || !std::isfinite(box.w) ||
      !std::isfinite(box.h)) {
    return "bbox has a non-finite component";
  }
  if (box.x < 0.0 || box.x > 1.0 || box.y < 0.0 || box.y > 1.0) {
    return "bbox origin outside [0,1]";
  }
  if (!(box.w > 0.0) || !(box.h > 0.0)) return "bbox has non-positive width or height";
  if (box.x + box.w > 1.0 + kBoxEpsilon) return "bbox extends past the right edge";
  if (box.y + box.h > 1.0 + kBoxEpsilon) return "bbox extends past the bottom edge";
  return {};
}

bool PixelRect::contains(const PixelRect& other) const noexcept {
  return left <= other.left && top <= other.top && right() >= other.right() &&
         bottom() >= other.bottom();
}

bool CropEdges::contains(const CropEdges& other) const noexcept {
  return left <= other.left && top <= other.top && right >= other.right &&
         bottom >= other.bottom;
}

json IngestSummary::to_json() const {
  json rejected_json = json::array();
  for (const auto& r : rejected) {
    rejected_json.push_back({{"image", r.image_path}, {"index", r.index}, {"reason", r.reason}});
  }
  return json{{"total_images", total_images},
              {"empty_images", empty_images},
              {"failed_images", failed_images},
              {"detections_seen", detections_seen},
              {"records", records},
              {"warnings", warnings},
              {"rejected", rejected_json}};
}

namespace {

std::size_t line_of(std::string_view raw, std::size_t byte) {
  const std::size_t end = std::min(byte, raw.size());
  return 1 + static_cast<std::size_t>(std::count(raw.begin(), raw.begin() + end, '\n'));
}

[[noreturn]] void structure_error(const std::string& where, const std::string& what) {
  throw ParseError("detector file: " + where + ": " + what);
}

}  // namespace

DetectionBatch parse_detection_file(std::string_view raw) {
  json doc;
  try {
    doc = json::parse(raw);
  } catch (const json::parse_error& e) {
    const std::size_t byte = e.byte;
    const std::size_t line = line_of(raw, byte > 0 ? byte - 1 : 0);
    throw ParseError("malformed detector file at byte " + std::to_string(byte) + ", line " +
                         std::to_string(line) + ": " + e.what(),
                     byte, line);
  }
  if (!doc.is_object()) structure_error("document", "expected a JSON object");
  const auto images_it = doc.find("images");
  if (images_it == doc.end() || !images_it->is_array()) {
    structure_error("document", "missing \"images\" array");
  }

  DetectionBatch batch;
  if (const auto cats = doc.find("detection_categories"); cats != doc.end()) {
    if (!cats->is_object()) structure_error("detection_categories", "expected an object");
    for (const auto& [code, name] : cats->items()) {
      if (!name.is_string()) structure_error("detection_categories." + code, "expected a string");
      batch.categories[code] = name.get<std::string>();
    }
  } else {
    batch.categories = {{"1", "animal"}, {"2", "person"}, {"3", "vehicle"}};
  }

  IngestSummary& summary = batch.summary;
  std::size_t image_index = 0;
  for (const auto& image : *images_it) {
    const std::string where = "images[" + std::to_string(image_index++) + "]";
    if (!image.is_object()) structure_error(where, "expected an object");
    const auto file_it = image.find("file");
    if (file_it == image.end() || !file_it->is_string()) {
      structure_error(where, "missing \"file\" string");
    }
    const std::string file = file_it->get<std::string>();
    ++summary.total_images;

    const auto dets_it = image.find("detections");
    if (image.contains("failure") || dets_it == image.end() || dets_it->is_null()) {
      ++summary.failed_images;
      summary.warnings.push_back(where + " (" + file + "): detector reported no result");
      continue;
    }
    if (!dets_it->is_array()) structure_error(where + ".detections", "expected an array");
    if (dets_it->empty()) {
      ++summary.empty_images;
      continue;
    }

    std::size_t det_index = 0;
    for (const auto& det : *dets_it) {
      const std::size_t index = det_index++;
      const std::string det_where = where + ".detections[" + std::to_string(index) + "]";
      ++summary.detections_seen;
      if (!det.is_object()) structure_error(det_where, "expected an object");

      const auto cat_it = det.find("category");
      if (cat_it == det.end() || !(cat_it->is_string() || cat_it->is_number_integer())) {
        structure_error(det_where, "missing \"category\"");
      }
      const std::string code =
          cat_it->is_string() ? cat_it->get<std::string>() : std::to_string(cat_it->get<long>());
      const auto name_it = batch.categories.find(code);
      const auto category =
          name_it == batch.categories.end() ? std::nullopt : category_from_name(name_it->second);
      if (!category) {
        summary.warnings.push_back(det_where + " (" + file + "): unknown category code \"" +
                                   code + "\", skipped");
        continue;
      }

      const auto conf_it = det.find("conf");
      if (conf_it == det.end() || !conf_it->is_number()) {
        structure_error(det_where, "missing numeric \"conf\"");
      }
      const auto bbox_it = det.find("bbox");
      if (bbox_it == det.end() || !bbox_it->is_array() || bbox_it->size() != 4 ||
          !std::all_of(bbox_it->begin(), bbox_it->end(),
                       [](const json& v) { return v.is_number(); })) {
        structure_error(det_where, "\"bbox\" must be an array of four numbers");
      }

      DetectionRecord record;
      record.image_path = file;
      record.category = *category;
      record.confidence = conf_it->get<double>();
      record.bbox = {(*bbox_it)[0].get<double>(), (*bbox_it)[1].get<double>(),
                     (*bbox_it)[2].get<double>(), (*bbox_it)[3].get<double>()};

      std::string reason;
      if (!std::isfinite(record.confidence) || record.confidence < 0.0 ||
          record.confidence > 1.0) {
        reason = "confidence outside [0,1]";
      } else {
        reason = check_box(record.bbox);
      }
      if (!reason.empty()) {
        summary.rejected.push_back({file, index, reason});
        continue;
      }
      batch.records.push_back(std::move(record));
    }
  }
  summary.records = batch.records.size();
  return batch;
}

std::vector<DetectionRecord> filter_detections(std::span<const DetectionRecord> records,
                                               double min_confidence,
                                               const std::set<Category>& allowed) {
  std::vector<DetectionRecord> kept;
  for (const auto& r : records) {
    if (r.confidence >= min_confidence && allowed.contains(r.category)) kept.push_back(r);
  }
  return kept;
}

namespace {

// Edges along one axis, rounded half away from zero. A span that rounds to nothing
// collapses to the pixel containing the box centre; the centre does not depend on
// padding, so larger padding always yields a superset.
std::pair<std::int64_t, std::int64_t> axis_edges(double origin, double extent, int pixels,
                                                 double padding_frac) {
  const double start = origin * pixels;
  const double length = extent * pixels;
  const double pad = padding_frac * length;
  std::int64_t lo = std::llround(start - pad);
  std::int64_t hi = std::llround(start + length + pad);
  if (hi <= lo) {
    lo = static_cast<std::int64_t>(std::floor(start + length / 2.0));
    hi = lo + 1;
  }
  return {lo, hi};
}

std::pair<int, int> clamp_axis(std::int64_t lo, std::int64_t hi, int pixels) {
  const std::int64_t start = std::clamp<std::int64_t>(lo, 0, pixels - 1);
  const std::int64_t end = std::clamp<std::int64_t>(hi, start + 1, pixels);
  return {static_cast<int>(start), static_cast<int>(end - start)};
}

}  // namespace

CropEdges crop_edges(const NormalizedBox& box, ImageSize image, double padding_frac) {
  const auto [left, right] = axis_edges(box.x, box.w, image.width, padding_frac);
  const auto [top, bottom] = axis_edges(box.y, box.h, image.height, padding_frac);
  return {left, top, right, bottom};
}

PixelRect compute_crop_rect(const NormalizedBox& box, ImageSize image, double padding_frac) {
  if (image.width < 1 || image.height < 1) {
    throw ValidationError("image dimensions must be at least 1x1");
  }
  if (!(padding_frac >= 0.0) || !std::isfinite(padding_frac)) {
    throw ValidationError("padding_frac must be a finite value >= 0");
  }
  const CropEdges edges = crop_edges(box, image, padding_frac);
  const auto [left, width] = clamp_axis(edges.left, edges.right, image.width);
  const auto [top, height] = clamp_axis(edges.top, edges.bottom, image.height);
  return {left, top, width, height};
}

std::string make_crop_id(std::string_view source_image, const PixelRect& rect) {
  binary::Writer w;
  w.bytes(source_image);
  w.put(static_cast<std::int32_t>(rect.left));
  w.put(static_cast<std::int32_t>(rect.top));
  w.put(static_cast<std::int32_t>(rect.width));
  w.put(static_cast<std::int32_t>(rect.height));
  return to_hex(hash128(w.data()));
}

namespace {

ExtractionResult crop_decoded(const cv::Mat& image, std::string_view source_image,
                              std::span<const CropRequest> requests, const CropOutput& out) {
  ExtractionResult result;
  for (const auto& req : requests) {
    const PixelRect& r = req.rect;
    if (r.width < 1 || r.height < 1 || r.left < 0 || r.top < 0 || r.right() > image.cols ||
        r.bottom() > image.rows) {
      result.errors.push_back(std::string(source_image) + ": crop rect outside the image");
      continue;
    }
    CropRecord record;
    record.crop_id = make_crop_id(source_image, r);
    record.source_image = std::string(source_image);
    record.rect = r;
    record.detection_confidence = req.confidence;
    const std::string file_name = record.crop_id + ".png";
    record.crop_path = out.manifest_prefix + file_name;
    try {
      const std::string png = detail::encode_png(image(cv::Rect(r.left, r.top, r.width, r.height)));
      const auto target = out.output_dir / file_name;
      std::ofstream file(target, std::ios::binary | std::ios::trunc);
      file.write(png.data(), static_cast<std::streamsize>(png.size()));
      file.close();
      if (!file) throw Error("cannot write " + target.string());
    } catch (const Error& e) {
      result.errors.push_back(std::string(source_image) + ": " + e.what());
      continue;
    }
    result.crops.push_back(std::move(record));
  }
  return result;
}

}  // namespace

ExtractionResult extract_crops(const std::filesystem::path& image_file,
                               std::string_view source_image,
                               std::span<const CropRequest> requests, const CropOutput& out) {
  std::string error;
  const cv::Mat image = detail::decode_image(image_file, error);
  if (image.empty()) return {{}, {error}};
  std::filesystem::create_directories(out.output_dir);
  return crop_decoded(image, source_image, requests, out);
}

IngestResult ingest_detections(const DetectionBatch& batch,
                               const std::filesystem::path& image_root, const CropOutput& out,
                               const IngestOptions& options) {
  if (!(options.min_confidence >= 0.0 && options.min_confidence <= 1.0)) {
    throw ValidationError("min_confidence must lie in [0,1]");
  }
  const auto kept =
      filter_detections(batch.records, options.min_confidence, options.allowed_categories);

  // Group by image, first-appearance order.
  std::vector<std::string> images;
  std::unordered_map<std::string, std::vector<const DetectionRecord*>> by_image;
  for (const auto& r : kept) {
    auto [it, inserted] = by_image.try_emplace(r.image_path);
    if (inserted) images.push_back(r.image_path);
    it->second.push_back(&r);
  }

  std::filesystem::create_directories(out.output_dir);
  std::vector<ExtractionResult> per_image(images.size());
  detail::parallel_for(images.size(), [&](std::size_t i) {
    std::string error;
    const cv::Mat image = detail::decode_image(image_root / images[i], error);
    if (image.empty()) {
      per_image[i].errors.push_back(error);
      return;
    }
    const ImageSize size{image.cols, image.rows};
    std::vector<CropRequest> requests;
    for (const DetectionRecord* r : by_image.at(images[i])) {
      requests.push_back({compute_crop_rect(r->bbox, size, options.padding_frac), r->confidence});
    }
    per_image[i] = crop_decoded(image, images[i], requests, out);
  });

  IngestResult result;
  for (auto& r : per_image) {
    std::move(r.crops.begin(), r.crops.end(), std::back_inserter(result.crops));
    std::move(r.errors.begin(), r.errors.end(), std::back_inserter(result.errors));
  }
  return result;
}

namespace {

constexpr std::string_view kManifestHeader =
    "crop_id,source_image,left,top,width,height,confidence,crop_path";

template <typename T>
T parse_number(const std::string& field, std::size_t line, const char* name) {
  T value{};
  const auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || end != field.data() + field.size()) {
    throw ParseError("crop manifest line " + std::to_string(line) + ": bad " + name + " \"" +
                         field + "\"",
                     0, line);
  }
  return value;
}

}  // namespace

std::string format_crop_manifest(std::span<const CropRecord> crops) {
  std::string out(kManifestHeader);
  out.push_back('\n');
  for (const auto& c : crops) {
    out += csv::format_row({c.crop_id, c.source_image, std::to_string(c.rect.left),
                            std::to_string(c.rect.top), std::to_string(c.rect.width),
                            std::to_string(c.rect.height), format_real(c.detection_confidence),
                            c.crop_path});
  }
  return out;
}

std::vector<CropRecord> parse_crop_manifest(std::string_view text) {
  const auto rows = csv::parse(text);
  if (rows.empty() || csv::format_row(rows.front()) != std::string(kManifestHeader) + "\n") {
    throw ParseError("crop manifest: expected header " + std::string(kManifestHeader), 0, 1);
  }
  std::vector<CropRecord> crops;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const std::size_t line = i + 1;
    if (row.size() != 8) {
      throw ParseError("crop manifest line " + std::to_string(line) + ": expected 8 fields", 0,
                       line);
    }
    CropRecord c;
    c.crop_id = row[0];
    c.source_image = row[1];
    c.rect = {parse_number<int>(row[2], line, "left"), parse_number<int>(row[3], line, "top"),
              parse_number<int>(row[4], line, "width"), parse_number<int>(row[5], line, "height")};
    c.detection_confidence = parse_number<double>(row[6], line, "confidence");
    c.crop_path = row[7];
    crops.push_back(std::move(c));
  }
  return crops;
}

}  // namespace camtrap
