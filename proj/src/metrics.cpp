#include "metrics.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"
#include "resample.hpp"
#include "telemetry.hpp"

namespace retarget {
namespace {

constexpr int64_t kQueryBlock = 512;
constexpr int64_t kCandidates = 4;

torch::Tensor as_chw(const torch::Tensor& image) {
  if (image.dim() == 4 && image.size(0) == 1) return image.squeeze(0);
  if (image.dim() != 3) throw ShapeError("metrics expect a [C,H,W] image");
  return image;
}

}  // namespace

void PatchMetricConfig::validate() const {
  if (patch_size < 3 || patch_size % 2 == 0) throw ConfigError("patch_size must be odd and >= 3");
  if (stride < 1) throw ConfigError("stride must be >= 1");
  if (scales.empty()) throw ConfigError("at least one metric scale is required");
  for (size_t i = 0; i < scales.size(); ++i) {
    if (!(scales[i] > 0.0)) throw ConfigError("metric scales must be positive");
    if (i > 0 && !(scales[i] < scales[i - 1])) throw ConfigError("metric scales must be sorted descending");
  }
}

torch::Tensor extract_patches(const torch::Tensor& image, int64_t patch_size, int64_t stride) {
  const auto chw = as_chw(image);
  if (chw.size(1) < patch_size || chw.size(2) < patch_size) {
    throw ShapeError("image " + std::to_string(chw.size(1)) + "x" + std::to_string(chw.size(2)) +
                     " is smaller than one " + std::to_string(patch_size) + "px patch");
  }
  namespace F = torch::nn::functional;
  const auto cols = F::unfold(chw.detach().to(torch::kFloat64).unsqueeze(0),
                              F::UnfoldFuncOptions({patch_size, patch_size}).stride(stride));
  return cols.squeeze(0).t().contiguous();
}

double mean_nearest_distance(const torch::Tensor& queries, const torch::Tensor& references) {
  if (queries.dim() != 2 || references.dim() != 2 || queries.size(1) != references.size(1)) {
    throw ShapeError("patch sets must be 2-D with equal row length");
  }
  if (queries.size(0) == 0 || references.size(0) == 0) throw ShapeError("empty patch set");
  const auto q = queries.to(torch::kFloat64).contiguous();
  const auto r = references.to(torch::kFloat64).contiguous();
  const auto ref_norms = r.square().sum(1);
  const int64_t k = std::min<int64_t>(kCandidates, r.size(0));

  double total = 0.0;
  for (int64_t start = 0; start < q.size(0); start += kQueryBlock) {
    const int64_t len = std::min(kQueryBlock, q.size(0) - start);
    const auto block = q.narrow(0, start, len);
    const auto approx = block.square().sum(1, true) + ref_norms.unsqueeze(0) - 2.0 * block.matmul(r.t());
    const auto candidates = std::get<1>(approx.topk(k, 1, /*largest=*/false, /*sorted=*/true));
    const auto cand = candidates.accessor<int64_t, 2>();
    const auto qa = block.accessor<double, 2>();
    const auto ra = r.accessor<double, 2>();
    for (int64_t i = 0; i < len; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int64_t c = 0; c < k; ++c) {
        const int64_t j = cand[i][c];
        double d2 = 0.0;
        for (int64_t e = 0; e < q.size(1); ++e) {
          const double diff = qa[i][e] - ra[j][e];
          d2 += diff * diff;
        }
        best = std::min(best, d2);
      }
      total += std::sqrt(best);
    }
  }
  return total / static_cast<double>(q.size(0));
}

torch::Tensor metric_level(const torch::Tensor& image, double scale) {
  const auto chw = as_chw(image).detach().to(torch::kFloat64);
  const auto h = std::max<int64_t>(1, std::llround(static_cast<double>(chw.size(1)) * scale));
  const auto w = std::max<int64_t>(1, std::llround(static_cast<double>(chw.size(2)) * scale));
  return area_resize(chw, h, w);
}

BidirectionalReport bidirectional_report(const torch::Tensor& y, const torch::Tensor& x,
                                         const PatchMetricConfig& config) {
  config.validate();
  if (as_chw(y).size(0) != as_chw(x).size(0)) throw ShapeError("metric images differ in channel count");
  BidirectionalReport report;
  for (double s : config.scales) {
    const auto py = extract_patches(metric_level(y, s), config.patch_size, config.stride);
    const auto px = extract_patches(metric_level(x, s), config.patch_size, config.stride);
    report.per_scale.push_back({s, mean_nearest_distance(py, px), mean_nearest_distance(px, py)});
  }
  for (const auto& m : report.per_scale) {
    report.coherence += m.coherence;
    report.completeness += m.completeness;
  }
  const auto n = static_cast<double>(report.per_scale.size());
  report.coherence /= n;
  report.completeness /= n;
  return report;
}

double coherence(const torch::Tensor& y, const torch::Tensor& x, const PatchMetricConfig& config) {
  config.validate();
  double total = 0.0;
  for (double s : config.scales) {
    const auto py = extract_patches(metric_level(y, s), config.patch_size, config.stride);
    const auto px = extract_patches(metric_level(x, s), config.patch_size, config.stride);
    total += mean_nearest_distance(py, px);
  }
  return total / static_cast<double>(config.scales.size());
}

double completeness(const torch::Tensor& y, const torch::Tensor& x, const PatchMetricConfig& config) {
  return coherence(x, y, config);
}

nlohmann::json BidirectionalReport::to_record() const {
  nlohmann::json scales = nlohmann::json::array();
  for (const auto& m : per_scale) {
    scales.push_back({{"scale", m.scale}, {"coherence", m.coherence}, {"completeness", m.completeness}});
  }
  return {{"schema", kRecordSchema},
          {"kind", "patch_metrics"},
          {"coherence", coherence},
          {"completeness", completeness},
          {"per_scale", scales}};
}

}  // namespace retarget
