#pragma once

// Multi-scale fully-convolutional patch discriminator.
//
// Scale 0 is the input resolution; scale i is the input area-resampled to
// ceil(dims / factor^i) (computed directly from scale 0, with a 1e-9
// tolerance on the ceiling). Each scale has its own convolutional head whose
// output map is reduced by a weighted mean across scales.

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "spectral_norm.hpp"

namespace retarget {

struct DiscriminatorConfig {
  int64_t num_scales = 5;
  double downscale_factor = std::sqrt(2.0);
  int64_t convs_per_scale = 4;
  bool first_conv_strided = true;
  int64_t channels = 64;
  bool share_weights = false;
  int64_t kernel = 3;

  /// Throws ConfigError.
  void validate() const;
};

/// Convex per-scale weights; index 0 is the finest scale.
struct ScaleWeights {
  std::vector<double> w;

  static ScaleWeights uniform(int64_t n);
  static ScaleWeights one_hot(int64_t n, int64_t k);
  /// Throws InvalidArgument unless nonnegative and summing to 1 within 1e-9.
  void validate() const;
};

/// Coarse-to-fine schedule: a Gaussian bump (std 0.4 in scale-index units)
/// centered on the coarsest scale at iteration 0, moving linearly to the
/// finest scale at `total_curriculum`, renormalized.
ScaleWeights scale_weight_schedule(int64_t iteration, int64_t total_curriculum, int64_t n);

/// Spatial dims of every pyramid level for an input of h x w.
std::vector<std::pair<int64_t, int64_t>> pyramid_dims(int64_t height, int64_t width,
                                                      const DiscriminatorConfig& config);

/// Receptive field (pixels at its own scale) of one head's output value.
int64_t head_receptive_field(const DiscriminatorConfig& config);

/// Smallest side an input may have so the coarsest level still holds one
/// receptive field.
int64_t min_input_side(const DiscriminatorConfig& config);

class DiscriminatorHeadImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorHeadImpl(const DiscriminatorConfig& config);
  torch::Tensor forward(const torch::Tensor& x);

  std::vector<SpectralConv2d> convs;
};
TORCH_MODULE(DiscriminatorHead);

struct DiscriminatorOutput {
  torch::Tensor score;              // 0-dim: sum_i w_i * mean(map_i)
  std::vector<torch::Tensor> maps;  // [N,1,h_i,w_i] per scale
};

class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const DiscriminatorConfig& config);

  /// Resampled pyramid of a [N,3,H,W] image. Throws ShapeError when the
  /// coarsest level is smaller than one receptive field.
  std::vector<torch::Tensor> pyramid(const torch::Tensor& image) const;

  /// Per-scale maps for a [3,H,W] or [N,3,H,W] image.
  std::vector<torch::Tensor> maps(const torch::Tensor& image);

  DiscriminatorOutput forward(const torch::Tensor& image, const ScaleWeights& weights);

  const DiscriminatorConfig& config() const noexcept { return config_; }
  DiscriminatorHead head(int64_t scale) const { return heads_.at(static_cast<size_t>(scale)); }
  int64_t num_scales() const noexcept { return config_.num_scales; }

 private:
  DiscriminatorConfig config_;
  std::vector<DiscriminatorHead> heads_;
};
TORCH_MODULE(Discriminator);

/// Reduces per-scale maps by a weighted mean.
torch::Tensor pool_maps(const std::vector<torch::Tensor>& maps, const ScaleWeights& weights);

}  // namespace retarget
