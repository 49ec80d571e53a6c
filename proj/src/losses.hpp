#pragma once

#include <vector>

#include <torch/torch.h>

#include "discriminator.hpp"

namespace retarget {

/// Least-squares discriminator loss on pooled scores: (real - 1)^2 + fake^2.
double lsgan_d_loss(double real_score, double fake_score);
/// Least-squares generator loss on a pooled score: (fake - 1)^2.
double lsgan_g_loss(double fake_score);

// Map forms: per-pixel targets are compared within each scale, then the
// per-scale means are combined with the scale weights. On 1x1 maps with a
// single scale these reduce to the scalar forms above.
torch::Tensor lsgan_d_loss(const std::vector<torch::Tensor>& real_maps,
                           const std::vector<torch::Tensor>& fake_maps,
                           const ScaleWeights& weights);
torch::Tensor lsgan_g_loss(const std::vector<torch::Tensor>& fake_maps, const ScaleWeights& weights);

/// Mean absolute difference per element. Throws ShapeError on mismatch.
torch::Tensor reconst_loss(const torch::Tensor& x, const torch::Tensor& x_rec);

}  // namespace retarget
