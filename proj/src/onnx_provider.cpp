#include "camtrap/onnx_provider.hpp"

#include "camtrap/error.hpp"
#include "camtrap/fileio.hpp"
#include "camtrap/hashing.hpp"

#ifdef CAMTRAP_HAVE_DNN
#include <mutex>

#include <opencv2/dnn.hpp>
#include <opencv2/imgproc.hpp>

#include "image_io.hpp"
#endif

namespace camtrap {

#ifdef CAMTRAP_HAVE_DNN

namespace {

class OnnxProvider final : public EmbeddingProvider {
 public:
  explicit OnnxProvider(const OnnxConfig& config) : config_(config) {
    std::string bytes;
    try {
      bytes = read_file(config.model_path);
      net_ = cv::dnn::readNetFromONNX(config.model_path.string());
    } catch (const cv::Exception& e) {
      throw Error("cannot load ONNX model " + config.model_path.string() + ": " + e.what());
    }
    if (net_.empty()) throw Error("cannot load ONNX model " + config.model_path.string());
    model_digest_ = to_hex(hash128(bytes)).substr(0, 16);

    cv::Mat probe(config.input_size, config.input_size, CV_8UC3, cv::Scalar::all(0));
    dimension_ = forward(probe).size();
    if (dimension_ == 0) throw Error("ONNX model produced an empty output");
  }

  std::string tag() const override {
    return "onnx/" + config_.model_path.filename().string() + "@" + model_digest_ +
           " in=" + std::to_string(config_.input_size);
  }
  std::size_t dimension() const override { return dimension_; }

  std::vector<float> embed(const CropRecord& crop,
                           const std::filesystem::path& crop_root) const override {
    std::string error;
    cv::Mat image = detail::decode_image(crop_root / crop.crop_path, error);
    if (image.empty()) throw CropUnavailable(error);
    return forward(image);
  }

 private:
  std::vector<float> forward(const cv::Mat& image) const {
    cv::Mat bgr;
    if (image.channels() == 1) {
      cv::cvtColor(image, bgr, cv::COLOR_GRAY2BGR);
    } else if (image.channels() == 4) {
      cv::cvtColor(image, bgr, cv::COLOR_BGRA2BGR);
    } else {
      bgr = image;
    }
    if (bgr.depth() != CV_8U) bgr.convertTo(bgr, CV_8U);

    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    cv::resize(rgb, rgb, cv::Size(config_.input_size, config_.input_size), 0, 0, cv::INTER_AREA);
    rgb.convertTo(rgb, CV_32FC3, 1.0 / 255.0);
    rgb -= cv::Scalar(config_.mean[0], config_.mean[1], config_.mean[2]);
    cv::divide(rgb, cv::Scalar(config_.stddev[0], config_.stddev[1], config_.stddev[2]), rgb);
    const cv::Mat blob = cv::dnn::blobFromImage(rgb);

    std::lock_guard lock(mutex_);  // cv::dnn::Net is not reentrant
    net_.setInput(blob);
    cv::Mat out = config_.output_layer.empty() ? net_.forward() : net_.forward(config_.output_layer);
    out = out.reshape(1, 1);
    if (out.type() != CV_32F) out.convertTo(out, CV_32F);
    return std::vector<float>(out.begin<float>(), out.end<float>());
  }

  OnnxConfig config_;
  mutable cv::dnn::Net net_;
  mutable std::mutex mutex_;
  std::size_t dimension_ = 0;
  std::string model_digest_;
};

}  // namespace

bool onnx_provider_available() noexcept { return true; }

std::unique_ptr<EmbeddingProvider> make_onnx_provider(const OnnxConfig& config) {
  return std::make_unique<OnnxProvider>(config);
}

#else

bool onnx_provider_available() noexcept { return false; }

std::unique_ptr<EmbeddingProvider> make_onnx_provider(const OnnxConfig&) {
  throw Error("this build has no ONNX support (rebuild with OpenCV dnn)");
}

#endif

}  // namespace camtrap
