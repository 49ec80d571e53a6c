#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <torch/torch.h>

namespace retarget {

/// Decodes PNG bytes (any bit depth / color type) to a float32 [3,H,W]
/// tensor in [0,1]. Alpha is dropped, gray is replicated.
torch::Tensor decode_png(std::string_view bytes);
torch::Tensor read_png(const std::filesystem::path& path);

/// Encodes a [3,H,W] (or [1,3,H,W]) tensor as 8-bit RGB PNG. Values are
/// clamped to [0,1] and rounded to the nearest level. Output bytes depend
/// only on the pixel values.
std::string encode_png(const torch::Tensor& image);
void write_png(const std::filesystem::path& path, const torch::Tensor& image);

}  // namespace retarget
