#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cvmcl/common.hpp"

namespace cvmcl::embed {

struct ViewDims {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t channels = 0;

  friend bool operator==(const ViewDims&, const ViewDims&) = default;
};

/// Convolution with zero "same" padding (kernel/2), optional ReLU+2x2 max-pool.
struct ConvLayerSpec {
  std::size_t filters = 8;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  bool pool = true;

  friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

enum class View : std::uint8_t { Ground = 0, Satellite = 1 };

/// Architecture shared by both encoders of the Siamese pair. Each layer is
/// conv -> ReLU -> (max-pool). The output of `mid_tap_layer` is average-pooled
/// to the spatial size of the final layer; both branches get their own dense
/// map to `embed_dim` and the results are summed.
struct EncoderConfig {
  ViewDims ground{16, 32, 3};
  ViewDims sat{27, 40, 3};
  std::vector<ConvLayerSpec> layers{{8, 3, 1, true}, {16, 3, 1, true}, {16, 3, 1, true}};
  std::size_t mid_tap_layer = 1;
  std::size_t embed_dim = 64;
  std::uint64_t seed = 4;

  [[nodiscard]] const ViewDims& dims(View v) const noexcept { return v == View::Ground ? ground : sat; }
  /// Throws InvalidArgument when the architecture is inconsistent for
  /// either view.
  void validate() const;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct TensorSlot {
  std::size_t offset = 0;
  std::size_t size = 0;
};

struct LayerShape {
  std::size_t in_c, in_h, in_w;
  std::size_t out_c, conv_h, conv_w;
  std::size_t out_h, out_w;  // after pooling
  std::size_t kernel, stride, pad;
  bool pool;
  TensorSlot weight, bias;
};

/// Every derived shape and parameter offset of one view's encoder. Parameters
/// are stored flat in declaration order: per layer (weight, bias), then
/// high-branch (weight, bias), then mid-branch (weight, bias).
struct EncoderLayout {
  ViewDims input;
  std::vector<LayerShape> layers;
  std::size_t mid_tap = 0;
  std::size_t feature_count = 0;  // final c*h*w == pooled mid c*h*w
  std::size_t embed_dim = 0;
  TensorSlot high_w, high_b, mid_w, mid_b;
  std::size_t param_count = 0;

  static EncoderLayout make(const EncoderConfig& config, View view);
};

/// All weights of ONE view's encoder.
struct EncoderParams {
  EncoderLayout layout;
  std::vector<double> values;

  [[nodiscard]] std::span<double> slot(TensorSlot s) noexcept { return {values.data() + s.offset, s.size}; }
  [[nodiscard]] std::span<const double> slot(TensorSlot s) const noexcept {
    return {values.data() + s.offset, s.size};
  }
  /// Parameter tensors in declaration order.
  [[nodiscard]] std::vector<TensorSlot> tensors() const;

  friend bool operator==(const EncoderParams& a, const EncoderParams& b) noexcept { return a.values == b.values; }
};

/// Uniform fan-in scaled weights (sqrt(6/fan_in) for conv, sqrt(3/fan_in) for
/// the dense maps), zero biases.
EncoderParams init_params(const EncoderConfig& config, View view, std::uint64_t seed);

/// Activations kept by forward() for backward(). Spatial buffers are CHW.
struct ForwardCache {
  std::vector<std::vector<double>> layer_input;   // input of each layer
  std::vector<std::vector<double>> preact;        // conv output before ReLU
  std::vector<std::vector<std::uint32_t>> argmax;  // pooled cell -> conv index
  std::vector<std::vector<double>> layer_output;  // after ReLU / pool
  std::vector<double> mid_pooled;                 // average-pooled tap
  std::vector<double> high_out;                   // dense(high features)
  std::vector<double> mid_out;                    // dense(mid features)
};

/// Embedding of an already standardized HWC input. Throws InvalidArgument on
/// shape mismatch.
std::vector<double> forward(const EncoderParams& params, const Tensor3& input, ForwardCache* cache = nullptr);

/// Accumulates dLoss/dParams into `grad_params` (same layout as
/// params.values) given dLoss/dEmbedding and the cache of the matching
/// forward pass.
void backward(const EncoderParams& params, const ForwardCache& cache, std::span<const double> grad_embedding,
              std::span<double> grad_params);

}  // namespace cvmcl::embed
