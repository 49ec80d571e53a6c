#pragma once

// Homography algebra and the parameter-free warping layer.
//
// Coordinates are normalized to [-1, 1] on both axes, with -1 and +1 at the
// centers of the first and last pixel. An OutputGeometry's transform maps an
// output pixel's normalized coordinate to the input normalized coordinate it
// samples from (backward mapping).

#include <array>
#include <cstdint>
#include <span>

#include <torch/torch.h>

namespace retarget {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Invertible 3x3 projective transform kept in canonical form (m[2][2] == 1).
class Homography {
 public:
  using Matrix = std::array<std::array<double, 3>, 3>;

  static constexpr double kDegenerateDet = 1e-12;

  /// Canonicalizes `m`. Throws DegenerateTransform when |det| < 1e-12 or
  /// when m[2][2] vanishes so no canonical form exists.
  static Homography from_matrix(const Matrix& m);

  static Homography identity();
  static Homography translation(double tx, double ty);
  static Homography scaling(double sx, double sy);

  const Matrix& matrix() const noexcept { return m_; }
  double operator()(int row, int col) const { return m_[row][col]; }

  double determinant() const noexcept;
  bool is_identity(double tol = 0.0) const noexcept;

  /// Projects `p`. Returns false when the point maps to infinity.
  bool apply(Point2 p, Point2& out) const noexcept;

  bool approx_equal(const Homography& other, double tol = 1e-12) const noexcept;

 private:
  explicit Homography(const Matrix& m) : m_(m) {}
  Matrix m_;
};

/// Matrix product a*b (b is applied first).
Homography compose(const Homography& a, const Homography& b);
Homography invert(const Homography& h);

/// Direct linear transform through four correspondences. Throws
/// DegenerateTransform if either quad has three collinear points.
Homography from_corners(std::span<const Point2, 4> src, std::span<const Point2, 4> dst);

struct OutputGeometry {
  int64_t height = 1;
  int64_t width = 1;
  Homography transform = Homography::identity();

  /// Throws ShapeError on non-positive dims.
  void validate() const;
};

enum class PaddingMode { Zero, Clamp };

/// Pixel index -> normalized coordinate along an axis of `size` pixels.
inline double to_normalized(double index, int64_t size) {
  return size > 1 ? -1.0 + 2.0 * index / static_cast<double>(size - 1) : 0.0;
}

/// Normalized coordinate -> fractional pixel index.
inline double from_normalized(double coord, int64_t size) {
  return size > 1 ? (coord + 1.0) * 0.5 * static_cast<double>(size - 1) : 0.0;
}

/// Bilinear taps for every output pixel: four flat input indices (-1 marks a
/// zero contribution) and their weights.
struct SampleGrid {
  int64_t in_height = 0;
  int64_t in_width = 0;
  int64_t out_height = 0;
  int64_t out_width = 0;
  torch::Tensor indices;  // int64 [out_h * out_w, 4]
  torch::Tensor weights;  // float64 [out_h * out_w, 4]
};

SampleGrid build_sample_grid(int64_t in_height, int64_t in_width, const OutputGeometry& geo,
                             PaddingMode padding = PaddingMode::Zero);

/// Resamples a [C,H,W] or [N,C,H,W] feature map onto `geo`. Differentiable
/// with respect to `feature`; the transform carries no gradient.
torch::Tensor warp(const torch::Tensor& feature, const OutputGeometry& geo,
                   PaddingMode padding = PaddingMode::Zero);

}  // namespace retarget
