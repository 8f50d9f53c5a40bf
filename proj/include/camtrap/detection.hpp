#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace camtrap {

enum class Category { animal, person, vehicle };

std::string_view to_string(Category category) noexcept;
std::optional<Category> category_from_name(std::string_view name) noexcept;

/// Normalized detector box: top-left origin, each component a fraction of the image side.
struct NormalizedBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
};

/// Tolerance on x + w and y + h for detector rounding.
inline constexpr double kBoxEpsilon = 1e-6;

/// Returns an empty string when the box is valid, otherwise the reason it is not.
std::string check_box(const NormalizedBox& box);

struct DetectionRecord {
  std::string image_path;
  Category category = Category::animal;
  double confidence = 0.0;
  NormalizedBox bbox;
};

struct ImageSize {
  int width = 0;
  int height = 0;
};

struct PixelRect {
  int left = 0;
  int top = 0;
  int width = 0;
  int height = 0;

  int right() const noexcept { return left + width; }
  int bottom() const noexcept { return top + height; }
  bool contains(const PixelRect& other) const noexcept;
  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

/// Half-open pixel edges before clamping to the image; may extend past it.
struct CropEdges {
  std::int64_t left = 0;
  std::int64_t top = 0;
  std::int64_t right = 0;
  std::int64_t bottom = 0;

  bool contains(const CropEdges& other) const noexcept;
  friend bool operator==(const CropEdges&, const CropEdges&) = default;
};

struct CropRecord {
  std::string crop_id;
  std::string source_image;
  PixelRect rect;
  double detection_confidence = 0.0;
  std::string crop_path;

  friend bool operator==(const CropRecord&, const CropRecord&) = default;
};

struct RejectedDetection {
  std::string image_path;
  std::size_t index = 0;  // position in the image's detection list
  std::string reason;
};

struct IngestSummary {
  std::size_t total_images = 0;
  std::size_t empty_images = 0;
  std::size_t failed_images = 0;  // entries carrying a detector "failure"
  std::size_t detections_seen = 0;
  std::size_t records = 0;
  std::vector<std::string> warnings;
  std::vector<RejectedDetection> rejected;

  nlohmann::json to_json() const;
};

struct DetectionBatch {
  std::vector<DetectionRecord> records;
  std::map<std::string, std::string> categories;  // detector code -> name
  IngestSummary summary;
};

/// Parses a detector batch-output document.
///
/// Unknown category codes produce a warning and the detection is skipped; boxes or
/// confidences out of range are rejected with a reason. Neither is fatal. A document
/// that is not valid JSON, or lacks the "images" array, throws ParseError with the
/// byte offset and line of the fault.
DetectionBatch parse_detection_file(std::string_view raw);

/// Keeps records with confidence >= min_confidence and an allowed category, in order.
std::vector<DetectionRecord> filter_detections(std::span<const DetectionRecord> records,
                                               double min_confidence,
                                               const std::set<Category>& allowed);

CropEdges crop_edges(const NormalizedBox& box, ImageSize image, double padding_frac);

/// Pixel rectangle for a detection: box scaled to the image, grown on each side by
/// padding_frac times the box side, edges rounded half away from zero, then clamped
/// to the image. A box that rounds to zero width or height becomes the single pixel
/// containing its centre.
PixelRect compute_crop_rect(const NormalizedBox& box, ImageSize image, double padding_frac);

/// Lowercase hex BLAKE2b-128 over the source path bytes followed by left, top, width
/// and height as little-endian int32.
std::string make_crop_id(std::string_view source_image, const PixelRect& rect);

struct CropRequest {
  PixelRect rect;
  double confidence = 0.0;
};

struct CropOutput {
  std::filesystem::path output_dir;  // where PNG files are written
  std::string manifest_prefix;       // prepended to file names in CropRecord::crop_path
};

struct ExtractionResult {
  std::vector<CropRecord> crops;
  std::vector<std::string> errors;
};

/// Decodes `image_file` and writes one PNG per rect. Undecodable or truncated images
/// yield an error entry and no crops; a failed write is reported for that crop only.
ExtractionResult extract_crops(const std::filesystem::path& image_file,
                               std::string_view source_image,
                               std::span<const CropRequest> requests, const CropOutput& out);

struct IngestOptions {
  double min_confidence = 0.2;
  std::set<Category> allowed_categories{Category::animal};
  double padding_frac = 0.05;
};

struct IngestResult {
  std::vector<CropRecord> crops;
  std::vector<std::string> errors;
};

/// Filters the batch, then crops every surviving detection from images under
/// `image_root`. Images are processed in parallel; output follows input order.
IngestResult ingest_detections(const DetectionBatch& batch,
                               const std::filesystem::path& image_root,
                               const CropOutput& out, const IngestOptions& options);

std::string format_crop_manifest(std::span<const CropRecord> crops);
std::vector<CropRecord> parse_crop_manifest(std::string_view text);

}  // namespace camtrap
