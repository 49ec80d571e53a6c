#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "checkpoint.hpp"
#include "generator.hpp"
#include "geometry.hpp"
#include "metrics.hpp"

namespace retarget {

inline constexpr int64_t kDefaultMaxOutputSide = 2048;

/// Either axis scales (shorthand for a plain resize of the canvas) or four
/// corners giving where the input's top-left, top-right, bottom-right and
/// bottom-left corners land on the output canvas, in [0,1]^2 canvas units.
struct SynthesisRequest {
  std::optional<int64_t> output_height;
  std::optional<int64_t> output_width;
  std::optional<std::array<Point2, 4>> corners;
  std::optional<double> scale_x;
  std::optional<double> scale_y;

  /// Throws InvalidArgument on malformed records.
  static SynthesisRequest from_json(const nlohmann::json& record);
  nlohmann::json to_json() const;
};

/// Resolves a request against an input of in_h x in_w. Throws
/// InvalidArgument (malformed), DegenerateTransform (non-convex or
/// degenerate corners) or TooLarge (a side above max_side).
OutputGeometry resolve_geometry(const SynthesisRequest& request, int64_t in_height, int64_t in_width,
                                int64_t max_side = kDefaultMaxOutputSide);

/// True when the four points form a strictly convex quad in either winding.
bool is_strictly_convex(const std::array<Point2, 4>& quad);

/// Inference-only view of a checkpoint: the generator in eval mode plus the
/// stored input image. synthesize() is safe to call concurrently.
class Model {
 public:
  explicit Model(const Checkpoint& checkpoint);
  static Model load(const std::filesystem::path& path);

  /// [3,H,W] output for the stored input.
  torch::Tensor synthesize(const OutputGeometry& geo) const;
  /// [3,H,W] output for another input, cropped to the size quantum first.
  torch::Tensor synthesize(const torch::Tensor& input, const OutputGeometry& geo) const;

  const torch::Tensor& input() const noexcept { return input_; }
  int64_t input_height() const noexcept { return input_.size(1); }
  int64_t input_width() const noexcept { return input_.size(2); }
  const ModelConfig& config() const noexcept { return config_; }
  int64_t iteration() const noexcept { return iteration_; }

  nlohmann::json meta() const;

 private:
  ModelConfig config_;
  int64_t iteration_ = 0;
  uint32_t format_version_ = 0;
  torch::Tensor input_;
  mutable Generator generator_{nullptr};
};

/// One metrics record per request, in order. Each record is the report's
/// telemetry record plus "index", "request", "output_height" and
/// "output_width".
std::vector<nlohmann::json> evaluate_grid(const Model& model, const std::vector<SynthesisRequest>& grid,
                                          const torch::Tensor& input,
                                          const PatchMetricConfig& metric_config = {});

}  // namespace retarget
