#pragma once

#include <filesystem>
#include <string>

#include <opencv2/core.hpp>

namespace camtrap::detail {

/// Decodes an image file as stored (no colour conversion). Returns an empty Mat and
/// sets `error` when the file is unreadable, undecodable, or a JPEG without its end
/// marker (OpenCV would otherwise return the partially decoded prefix).
cv::Mat decode_image(const std::filesystem::path& path, std::string& error);

/// Lossless PNG bytes. Throws camtrap::Error on encoder failure.
std::string encode_png(const cv::Mat& image);

}  // namespace camtrap::detail
