#include "resample.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"

namespace retarget {

torch::Tensor area_weights(int64_t in_size, int64_t out_size, torch::ScalarType dtype) {
  if (in_size < 1 || out_size < 1) throw ShapeError("area_weights: sizes must be positive");
  auto weights = torch::zeros({out_size, in_size}, torch::kFloat64);
  auto acc = weights.accessor<double, 2>();
  const double scale = static_cast<double>(in_size) / static_cast<double>(out_size);
  for (int64_t o = 0; o < out_size; ++o) {
    const double lo = static_cast<double>(o) * scale;
    const double hi = static_cast<double>(o + 1) * scale;
    const auto first = static_cast<int64_t>(std::floor(lo));
    const auto last = std::min(in_size - 1, static_cast<int64_t>(std::ceil(hi)) - 1);
    for (int64_t i = first; i <= last; ++i) {
      const double overlap = std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
      if (overlap > 0) acc[o][i] = overlap / scale;
    }
  }
  return weights.to(dtype);
}

torch::Tensor area_resize(const torch::Tensor& image, int64_t out_height, int64_t out_width) {
  if (image.dim() < 2) throw ShapeError("area_resize expects at least 2 dims");
  const int64_t h = image.size(-2);
  const int64_t w = image.size(-1);
  if (h == out_height && w == out_width) return image;
  const auto rows = area_weights(h, out_height, image.scalar_type());
  const auto cols = area_weights(w, out_width, image.scalar_type());
  return torch::matmul(torch::matmul(rows, image), cols.t());
}

}  // namespace retarget
