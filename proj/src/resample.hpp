#pragma once

#include <cstdint>

#include <torch/torch.h>

namespace retarget {

/// [out, in] matrix whose row o holds the fractional overlap of the output
/// cell [o*s, (o+1)*s) (s = in/out, in input pixel units) with each input
/// pixel, divided by s. Rows sum to one.
torch::Tensor area_weights(int64_t in_size, int64_t out_size,
                           torch::ScalarType dtype = torch::kFloat32);

/// Area-averaging resize of a [C,H,W] or [N,C,H,W] tensor. Differentiable.
torch::Tensor area_resize(const torch::Tensor& image, int64_t out_height, int64_t out_width);

}  // namespace retarget
