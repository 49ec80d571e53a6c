#include "discriminator.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "errors.hpp"
#include "resample.hpp"

namespace retarget {
namespace {

constexpr double kScheduleWidth = 0.4;
constexpr double kLeakySlope = 0.2;

int64_t level_size(int64_t size, double factor, int64_t level) {
  const double scaled = static_cast<double>(size) / std::pow(factor, static_cast<double>(level));
  return std::max<int64_t>(1, static_cast<int64_t>(std::ceil(scaled - 1e-9)));
}

}  // namespace

void DiscriminatorConfig::validate() const {
  if (num_scales < 1) throw ConfigError("discriminator num_scales must be >= 1");
  if (!(downscale_factor > 1.0)) throw ConfigError("discriminator downscale_factor must be > 1");
  if (convs_per_scale < 2) throw ConfigError("discriminator convs_per_scale must be >= 2");
  if (channels < 1) throw ConfigError("discriminator channels must be positive");
  if (share_weights) throw ConfigError("discriminator heads never share weights");
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("discriminator kernel must be odd and positive");
}

ScaleWeights ScaleWeights::uniform(int64_t n) {
  return {std::vector<double>(static_cast<size_t>(n), 1.0 / static_cast<double>(n))};
}

ScaleWeights ScaleWeights::one_hot(int64_t n, int64_t k) {
  ScaleWeights s{std::vector<double>(static_cast<size_t>(n), 0.0)};
  s.w.at(static_cast<size_t>(k)) = 1.0;
  return s;
}

void ScaleWeights::validate() const {
  if (w.empty()) throw InvalidArgument("scale weights are empty");
  double total = 0.0;
  for (double v : w) {
    if (!(v >= 0.0)) throw InvalidArgument("scale weights must be nonnegative");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("scale weights must sum to 1");
}

ScaleWeights scale_weight_schedule(int64_t iteration, int64_t total_curriculum, int64_t n) {
  if (n < 1) throw InvalidArgument("scale_weight_schedule: n must be >= 1");
  if (n == 1) return {{1.0}};
  const double progress =
      total_curriculum > 0
          ? std::clamp(static_cast<double>(std::max<int64_t>(iteration, 0)) /
                           static_cast<double>(total_curriculum),
                       0.0, 1.0)
          : 1.0;
  const double center = static_cast<double>(n - 1) * (1.0 - progress);
  ScaleWeights s{std::vector<double>(static_cast<size_t>(n))};
  for (int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(i) - center;
    s.w[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * kScheduleWidth * kScheduleWidth));
  }
  const double total = std::accumulate(s.w.begin(), s.w.end(), 0.0);
  for (double& v : s.w) v /= total;
  return s;
}

std::vector<std::pair<int64_t, int64_t>> pyramid_dims(int64_t height, int64_t width,
                                                      const DiscriminatorConfig& config) {
  std::vector<std::pair<int64_t, int64_t>> dims;
  for (int64_t i = 0; i < config.num_scales; ++i) {
    dims.emplace_back(level_size(height, config.downscale_factor, i),
                      level_size(width, config.downscale_factor, i));
  }
  return dims;
}

int64_t head_receptive_field(const DiscriminatorConfig& config) {
  const int64_t stride = config.first_conv_strided ? 2 : 1;
  return config.kernel + (config.convs_per_scale - 1) * (config.kernel - 1) * stride;
}

int64_t min_input_side(const DiscriminatorConfig& config) {
  const int64_t rf = head_receptive_field(config);
  int64_t side = rf;
  while (level_size(side, config.downscale_factor, config.num_scales - 1) < rf) ++side;
  return side;
}

DiscriminatorHeadImpl::DiscriminatorHeadImpl(const DiscriminatorConfig& config) {
  for (int64_t i = 0; i < config.convs_per_scale; ++i) {
    const bool last = i + 1 == config.convs_per_scale;
    ConvOptions o;
    o.in_channels = i == 0 ? 3 : config.channels;
    o.out_channels = last ? 1 : config.channels;
    o.kernel = config.kernel;
    o.stride = (i == 0 && config.first_conv_strided) ? 2 : 1;
    o.padding = ConvPadding::None;
    o.spectral_norm = !last;
    convs.push_back(register_module("conv" + std::to_string(i), SpectralConv2d(o)));
  }
}

torch::Tensor DiscriminatorHeadImpl::forward(const torch::Tensor& x) {
  auto h = x;
  for (size_t i = 0; i < convs.size(); ++i) {
    h = convs[i](h);
    if (i + 1 < convs.size()) h = torch::leaky_relu(h, kLeakySlope);
  }
  return h;
}

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorConfig& config) : config_(config) {
  config_.validate();
  for (int64_t i = 0; i < config_.num_scales; ++i) {
    heads_.push_back(register_module("head" + std::to_string(i), DiscriminatorHead(config_)));
  }
}

std::vector<torch::Tensor> DiscriminatorImpl::pyramid(const torch::Tensor& image) const {
  const auto dims = pyramid_dims(image.size(-2), image.size(-1), config_);
  const int64_t rf = head_receptive_field(config_);
  const auto& coarsest = dims.back();
  if (coarsest.first < rf || coarsest.second < rf) {
    throw ShapeError("discriminator input " + std::to_string(image.size(-2)) + "x" +
                     std::to_string(image.size(-1)) + " gives a coarsest level of " +
                     std::to_string(coarsest.first) + "x" + std::to_string(coarsest.second) +
                     ", smaller than the receptive field " + std::to_string(rf));
  }
  std::vector<torch::Tensor> levels;
  for (const auto& [h, w] : dims) levels.push_back(area_resize(image, h, w));
  return levels;
}

std::vector<torch::Tensor> DiscriminatorImpl::maps(const torch::Tensor& image) {
  const auto input = image.dim() == 3 ? image.unsqueeze(0) : image;
  if (input.dim() != 4 || input.size(1) != 3) throw ShapeError("discriminator expects [N,3,H,W]");
  const auto levels = pyramid(input);
  std::vector<torch::Tensor> out;
  for (size_t i = 0; i < levels.size(); ++i) out.push_back(heads_[i](levels[i]));
  return out;
}

torch::Tensor pool_maps(const std::vector<torch::Tensor>& maps, const ScaleWeights& weights) {
  if (weights.w.size() != maps.size()) {
    throw InvalidArgument("scale weights have " + std::to_string(weights.w.size()) +
                          " entries for " + std::to_string(maps.size()) + " maps");
  }
  torch::Tensor score;
  for (size_t i = 0; i < maps.size(); ++i) {
    auto term = maps[i].mean() * weights.w[i];
    score = score.defined() ? score + term : term;
  }
  return score;
}

DiscriminatorOutput DiscriminatorImpl::forward(const torch::Tensor& image, const ScaleWeights& weights) {
  weights.validate();
  auto m = maps(image);
  auto score = pool_maps(m, weights);
  return {score, std::move(m)};
}

}  // namespace retarget
