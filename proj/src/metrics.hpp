#pragma once

// Patch-distribution metrics.
//
// Both images are resampled (area averaging, dims rounded to nearest, at
// least 1) to every configured scale. At each scale, patches of
// patch_size x patch_size x C are taken at the configured stride and
// compared in plain L2 over the raw [0,1] channel values.
//
//   coherence(y, x)    mean over y's patches of the distance to the nearest x patch
//   completeness(y, x) mean over x's patches of the distance to the nearest y patch
//
// Both are averaged over scales. Nearest neighbours are found with a
// blocked matrix product in float64 and the winning distance is recomputed
// exactly, so the result matches a brute-force scan.

#include <vector>

#include <json.hpp>
#include <torch/torch.h>

namespace retarget {

enum class PatchDistance { L2 };

struct PatchMetricConfig {
  int64_t patch_size = 7;
  std::vector<double> scales{1.0, 0.7071067811865476, 0.5, 0.3535533905932738};
  int64_t stride = 1;
  PatchDistance distance = PatchDistance::L2;

  /// Throws ConfigError.
  void validate() const;
};

/// Rows are flattened patches in (channel, row, col) order; float64.
torch::Tensor extract_patches(const torch::Tensor& image, int64_t patch_size, int64_t stride);

/// Mean over query rows of the L2 distance to the nearest reference row.
double mean_nearest_distance(const torch::Tensor& queries, const torch::Tensor& references);

/// Image resampled to one metric scale.
torch::Tensor metric_level(const torch::Tensor& image, double scale);

double coherence(const torch::Tensor& y, const torch::Tensor& x, const PatchMetricConfig& config = {});
double completeness(const torch::Tensor& y, const torch::Tensor& x, const PatchMetricConfig& config = {});

struct ScaleMetrics {
  double scale = 1.0;
  double coherence = 0.0;
  double completeness = 0.0;
};

struct BidirectionalReport {
  double coherence = 0.0;
  double completeness = 0.0;
  std::vector<ScaleMetrics> per_scale;

  /// Telemetry record of kind "patch_metrics".
  nlohmann::json to_record() const;
};

BidirectionalReport bidirectional_report(const torch::Tensor& y, const torch::Tensor& x,
                                         const PatchMetricConfig& config = {});

}  // namespace retarget
