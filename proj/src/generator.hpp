#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <torch/torch.h>

#include "geometry.hpp"
#include "spectral_norm.hpp"

namespace retarget {

enum class Normalization { Batch, None };

struct GeneratorConfig {
  int64_t base_channels = 64;
  int64_t max_channels = 256;
  int64_t depth = 5;
  int64_t residual_blocks = 6;
  int64_t kernel = 3;
  bool use_skip = true;
  Normalization normalization = Normalization::Batch;
  bool spectral_norm_all_but_last = true;

  /// Throws ConfigError.
  void validate() const;
  /// Input spatial dims must be multiples of this (2^depth).
  int64_t size_quantum() const { return int64_t{1} << depth; }
  int64_t channels_at(int64_t level) const;
};

/// One step on the path from an input pixel to an output pixel.
struct LayerSpec {
  enum class Kind { Conv, Pool, Upsample };
  Kind kind = Kind::Conv;
  int64_t kernel = 3;
  int64_t stride = 1;  // downscale factor for Pool, upscale factor for Upsample
};

/// Receptive-field diameter, in input pixels, of a chain of layers.
int64_t receptive_field(std::span<const LayerSpec> layers);

/// Receptive field of the deepest input-to-output path of the generator.
int64_t count_receptive_field(const GeneratorConfig& config);

class ConvBlockImpl : public torch::nn::Module {
 public:
  ConvBlockImpl(int64_t in, int64_t out, const GeneratorConfig& config, bool relu);
  torch::Tensor forward(const torch::Tensor& x);

  SpectralConv2d conv{nullptr};
  torch::nn::BatchNorm2d norm{nullptr};

 private:
  bool relu_;
};
TORCH_MODULE(ConvBlock);

class ResidualBlockImpl : public torch::nn::Module {
 public:
  ResidualBlockImpl(int64_t channels, const GeneratorConfig& config);
  torch::Tensor forward(const torch::Tensor& x);

  ConvBlock first{nullptr};
  ConvBlock second{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// Hourglass generator with skip connections and a residual bottleneck. The
/// encoder runs at the input geometry; the bottleneck and every skip tensor
/// are warped onto the output geometry before decoding.
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const GeneratorConfig& config);

  /// x: [3,H,W] or [N,3,H,W] with H, W multiples of 2^depth. Returns the
  /// same rank with spatial dims geo.height x geo.width, values in [0,1].
  torch::Tensor forward(const torch::Tensor& x, const OutputGeometry& geo);

  const GeneratorConfig& config() const noexcept { return config_; }

  /// Every convolution in execution order; the last one is the output layer.
  std::vector<SpectralConv2d> convolutions() const;

 private:
  GeneratorConfig config_;
  torch::nn::ModuleList encoder_;
  torch::nn::ModuleList bottleneck_;
  torch::nn::ModuleList up_;
  torch::nn::ModuleList merge_;
  SpectralConv2d output_{nullptr};
};
TORCH_MODULE(Generator);

}  // namespace retarget
