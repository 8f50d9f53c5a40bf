#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <string>

#include "camtrap/embedding.hpp"

namespace camtrap {

/// Preprocessing applied before the network: resize to input_size x input_size,
/// scale to [0,1], subtract mean and divide by std per RGB channel.
struct OnnxConfig {
  std::filesystem::path model_path;
  int input_size = 224;
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> stddev{0.229, 0.224, 0.225};
  std::string output_layer;  // empty: the network's default output
};

/// True when the library was built with OpenCV dnn support.
bool onnx_provider_available() noexcept;

/// Runs a serialized backbone through OpenCV's dnn module and flattens the output.
/// Throws Error when ONNX support is not compiled in or the model cannot be loaded.
std::unique_ptr<EmbeddingProvider> make_onnx_provider(const OnnxConfig& config);

}  // namespace camtrap
