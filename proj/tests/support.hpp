#pragma once

// Shared fixtures and reference implementations for the test binaries.

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include <torch/torch.h>

#include "config.hpp"
#include "geometry.hpp"

namespace testing {

using Mat3 = std::array<std::array<double, 3>, 3>;

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// 3-channel texture with a coarse checkerboard (period 16) and a fine
/// sinusoidal grid (period 4), quantized to 8 bits.
torch::Tensor two_scale_texture(int64_t height, int64_t width);

/// Small model that trains in a few milliseconds per step.
retarget::ModelConfig tiny_config();

/// Random homography close to identity with |det| bounded away from zero.
retarget::Homography random_homography(std::mt19937_64& rng, double spread = 0.3);

// Independent reference computations.

/// 3x3 product accumulated in long double.
Mat3 multiply_extended(const Mat3& a, const Mat3& b);
/// Gauss-Jordan elimination with partial pivoting.
Mat3 gauss_jordan_inverse(const Mat3& m);
/// Divides by m[2][2].
Mat3 canonical(const Mat3& m);
/// Homography through four correspondences by a least-squares solve of the
/// 8x8 system with Eigen.
Mat3 corners_least_squares(const std::array<retarget::Point2, 4>& src, const std::array<retarget::Point2, 4>& dst);
double max_abs_diff(const Mat3& a, const Mat3& b);

/// Bilinear sample of [C,H,W] at every output pixel with plain loops,
/// zero outside. Returns [C,out_h,out_w] float64.
torch::Tensor warp_reference(const torch::Tensor& feature, const retarget::OutputGeometry& geo);

/// Area-averaging resize with explicit per-pixel overlap loops. [C,H,W] -> float64.
torch::Tensor area_resize_reference(const torch::Tensor& image, int64_t out_h, int64_t out_w);

/// Mean over query patches of the distance to the nearest reference patch,
/// by scanning all pairs with scalar loops in double.
double brute_force_nn(const torch::Tensor& y, const torch::Tensor& x, int64_t patch, int64_t stride);

}  // namespace testing
