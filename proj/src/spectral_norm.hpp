#pragma once

#include <cstdint>

#include <torch/torch.h>

namespace retarget {

/// Persistent power-iteration vectors for one weight matrix.
struct SpectralNormState {
  torch::Tensor u;  // [rows]
  torch::Tensor v;  // [cols]

  static SpectralNormState random(int64_t rows, int64_t cols, torch::Dtype dtype = torch::kFloat32);
};

struct SpectralNormResult {
  torch::Tensor weight;  // weight / sigma, differentiable w.r.t. the input weight
  torch::Tensor sigma;   // 0-dim; zero for an all-zero matrix
};

/// Runs `power_iters` power-iteration steps on the 2-D `weight` (updating
/// `state` in place, outside autograd) and divides by the resulting largest
/// singular value estimate. An all-zero matrix is returned unchanged with
/// sigma == 0. With power_iters == 0 the stored vectors are used as is.
SpectralNormResult spectral_normalize(const torch::Tensor& weight, SpectralNormState& state,
                                      int power_iters);

/// Power-iterates `state` (in float64) until the sigma estimate moves by
/// less than rel_tol relative, or max_iters. Returns the iterations used.
int converge_spectral_state(const torch::Tensor& weight, SpectralNormState& state, double rel_tol = 1e-10,
                            int max_iters = 2000);

enum class ConvPadding { None, Reflect };

struct ConvOptions {
  int64_t in_channels = 1;
  int64_t out_channels = 1;
  int64_t kernel = 3;
  int64_t stride = 1;
  ConvPadding padding = ConvPadding::Reflect;
  bool spectral_norm = true;
  int power_iters = 1;
};

/// 2-D convolution whose kernel is optionally spectrally normalized. The
/// tracked vectors are converged at construction; afterwards one power
/// iteration runs per training-mode forward and eval-mode forwards are
/// read-only over all module state.
class SpectralConv2dImpl : public torch::nn::Module {
 public:
  explicit SpectralConv2dImpl(const ConvOptions& options);

  torch::Tensor forward(const torch::Tensor& x);

  bool has_spectral_norm() const noexcept { return options_.spectral_norm; }
  const ConvOptions& options() const noexcept { return options_; }

  /// Kernel after normalization, as used by the last forward pass.
  torch::Tensor effective_weight();
  /// sigma computed from the tracked vectors and the current kernel.
  double tracked_sigma();

  torch::Tensor weight;  // raw kernel [out, in, k, k]
  torch::Tensor bias;
  torch::Tensor sn_u;  // registered only with spectral norm
  torch::Tensor sn_v;

 private:
  ConvOptions options_;
};

TORCH_MODULE(SpectralConv2d);

}  // namespace retarget
