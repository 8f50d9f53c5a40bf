#include "image_io.hpp"

#include <opencv2/imgcodecs.hpp>

#include <vector>

#include "camtrap/error.hpp"
#include "camtrap/fileio.hpp"

namespace camtrap::detail {
namespace {

bool is_truncated_jpeg(const std::string& bytes) {
  if (bytes.size() < 4 || static_cast<unsigned char>(bytes[0]) != 0xFF ||
      static_cast<unsigned char>(bytes[1]) != 0xD8) {
    return false;
  }
  // EOI must appear in the tail; some cameras pad a few bytes after it.
  const std::size_t window = std::min<std::size_t>(bytes.size(), 64);
  const std::string_view tail(bytes.data() + bytes.size() - window, window);
  return tail.rfind("\xFF\xD9") == std::string_view::npos;
}

}  // namespace

cv::Mat decode_image(const std::filesystem::path& path, std::string& error) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const Error& e) {
    error = e.what();
    return {};
  }
  if (is_truncated_jpeg(bytes)) {
    error = "truncated JPEG (no end-of-image marker): " + path.string();
    return {};
  }
  cv::Mat image;
  try {
    const cv::Mat buffer(1, static_cast<int>(bytes.size()), CV_8UC1, bytes.data());
    image = cv::imdecode(buffer, cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception& e) {
    error = "cannot decode " + path.string() + ": " + e.what();
    return {};
  }
  if (image.empty()) error = "cannot decode " + path.string();
  return image;
}

std::string encode_png(const cv::Mat& image) {
  std::vector<uchar> out;
  const std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 3};
  bool ok = false;
  try {
    ok = cv::imencode(".png", image, out, params);
  } catch (const cv::Exception& e) {
    throw Error(std::string("PNG encoding failed: ") + e.what());
  }
  if (!ok) throw Error("PNG encoding failed");
  return std::string(out.begin(), out.end());
}

}  // namespace camtrap::detail
