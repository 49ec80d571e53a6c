#include "generator.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"

namespace retarget {
namespace {

ConvOptions block_conv(int64_t in, int64_t out, const GeneratorConfig& config) {
  ConvOptions o;
  o.in_channels = in;
  o.out_channels = out;
  o.kernel = config.kernel;
  o.padding = ConvPadding::Reflect;
  o.spectral_norm = config.spectral_norm_all_but_last;
  return o;
}

int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

}  // namespace

void GeneratorConfig::validate() const {
  if (depth < 1 || depth > 10) throw ConfigError("generator depth must be in [1, 10]");
  if (base_channels < 1) throw ConfigError("generator base_channels must be positive");
  if (max_channels < base_channels) throw ConfigError("generator max_channels must be >= base_channels");
  if (residual_blocks < 1) throw ConfigError("generator residual_blocks must be positive");
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("generator kernel must be odd and positive");
}

int64_t GeneratorConfig::channels_at(int64_t level) const {
  return std::min(base_channels << level, max_channels);
}

int64_t receptive_field(std::span<const LayerSpec> layers) {
  double field = 1.0;
  double jump = 1.0;
  for (const auto& layer : layers) {
    switch (layer.kind) {
      case LayerSpec::Kind::Conv:
        field += static_cast<double>(layer.kernel - 1) * jump;
        jump *= static_cast<double>(layer.stride);
        break;
      case LayerSpec::Kind::Pool:
        field += static_cast<double>(layer.kernel - 1) * jump;
        jump *= static_cast<double>(layer.stride);
        break;
      case LayerSpec::Kind::Upsample:
        jump /= static_cast<double>(layer.stride);
        break;
    }
  }
  return static_cast<int64_t>(std::ceil(field - 1e-9));
}

int64_t count_receptive_field(const GeneratorConfig& config) {
  config.validate();
  using K = LayerSpec::Kind;
  const LayerSpec conv{K::Conv, config.kernel, 1};
  std::vector<LayerSpec> path{conv};
  for (int64_t l = 1; l <= config.depth; ++l) {
    path.push_back({K::Pool, 2, 2});
    path.push_back(conv);
  }
  for (int64_t r = 0; r < 2 * config.residual_blocks; ++r) path.push_back(conv);
  for (int64_t l = config.depth - 1; l >= 0; --l) {
    path.push_back({K::Upsample, 1, 2});
    path.push_back(conv);
    if (config.use_skip) path.push_back(conv);
  }
  path.push_back(conv);
  return receptive_field(path);
}

ConvBlockImpl::ConvBlockImpl(int64_t in, int64_t out, const GeneratorConfig& config, bool relu)
    : relu_(relu) {
  conv = register_module("conv", SpectralConv2d(block_conv(in, out, config)));
  if (config.normalization == Normalization::Batch) {
    norm = register_module("norm", torch::nn::BatchNorm2d(torch::nn::BatchNorm2dOptions(out)));
  }
}

torch::Tensor ConvBlockImpl::forward(const torch::Tensor& x) {
  auto y = conv(x);
  if (norm) y = norm(y);
  return relu_ ? torch::relu(y) : y;
}

ResidualBlockImpl::ResidualBlockImpl(int64_t channels, const GeneratorConfig& config) {
  first = register_module("first", ConvBlock(channels, channels, config, true));
  second = register_module("second", ConvBlock(channels, channels, config, false));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  return torch::relu(x + second(first(x)));
}

GeneratorImpl::GeneratorImpl(const GeneratorConfig& config) : config_(config) {
  config_.validate();
  encoder_ = register_module("encoder", torch::nn::ModuleList());
  bottleneck_ = register_module("bottleneck", torch::nn::ModuleList());
  up_ = register_module("up", torch::nn::ModuleList());
  merge_ = register_module("merge", torch::nn::ModuleList());

  encoder_->push_back(ConvBlock(3, config_.channels_at(0), config_, true));
  for (int64_t l = 1; l <= config_.depth; ++l) {
    encoder_->push_back(ConvBlock(config_.channels_at(l - 1), config_.channels_at(l), config_, true));
  }
  const int64_t bottom = config_.channels_at(config_.depth);
  for (int64_t r = 0; r < config_.residual_blocks; ++r) {
    bottleneck_->push_back(ResidualBlock(bottom, config_));
  }
  for (int64_t l = 0; l < config_.depth; ++l) {
    const int64_t c = config_.channels_at(l);
    up_->push_back(ConvBlock(config_.channels_at(l + 1), c, config_, true));
    if (config_.use_skip) merge_->push_back(ConvBlock(2 * c, c, config_, true));
  }
  ConvOptions out;
  out.in_channels = config_.channels_at(0);
  out.out_channels = 3;
  out.kernel = config_.kernel;
  out.spectral_norm = false;
  output_ = register_module("output", SpectralConv2d(out));
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& x, const OutputGeometry& geo) {
  geo.validate();
  const bool batched = x.dim() == 4;
  if (!batched && x.dim() != 3) throw ShapeError("generator expects [3,H,W] or [N,3,H,W]");
  auto input = batched ? x : x.unsqueeze(0);
  if (input.size(1) != 3) throw ShapeError("generator expects 3 input channels");
  const int64_t q = config_.size_quantum();
  if (input.size(2) % q != 0 || input.size(3) % q != 0 || input.size(2) == 0 || input.size(3) == 0) {
    throw ShapeError("generator input " + std::to_string(input.size(2)) + "x" +
                     std::to_string(input.size(3)) + " is not a positive multiple of " +
                     std::to_string(q));
  }

  const bool same_geometry = geo.transform.is_identity() && geo.height == input.size(2) &&
                             geo.width == input.size(3);
  auto warp_to = [&](const torch::Tensor& t, int64_t level) {
    const OutputGeometry g{ceil_div(geo.height, int64_t{1} << level),
                           ceil_div(geo.width, int64_t{1} << level), geo.transform};
    if (same_geometry) return t;
    return warp(t, g);
  };

  std::vector<torch::Tensor> skips;
  auto h = encoder_->ptr<ConvBlockImpl>(0)->forward(input);
  for (int64_t l = 1; l <= config_.depth; ++l) {
    skips.push_back(h);
    h = encoder_->ptr<ConvBlockImpl>(l)->forward(torch::max_pool2d(h, 2, 2));
  }

  h = warp_to(h, config_.depth);
  for (size_t r = 0; r < bottleneck_->size(); ++r) {
    h = bottleneck_->ptr<ResidualBlockImpl>(r)->forward(h);
  }

  namespace F = torch::nn::functional;
  for (int64_t l = config_.depth - 1; l >= 0; --l) {
    const int64_t th = ceil_div(geo.height, int64_t{1} << l);
    const int64_t tw = ceil_div(geo.width, int64_t{1} << l);
    h = F::interpolate(h, F::InterpolateFuncOptions()
                              .size(std::vector<int64_t>{2 * h.size(2), 2 * h.size(3)})
                              .mode(torch::kNearest));
    h = h.narrow(2, 0, th).narrow(3, 0, tw);
    h = up_->ptr<ConvBlockImpl>(l)->forward(h);
    if (config_.use_skip) {
      h = merge_->ptr<ConvBlockImpl>(l)->forward(torch::cat({h, warp_to(skips[l], l)}, 1));
    }
  }
  auto y = torch::sigmoid(output_(h));
  return batched ? y : y.squeeze(0);
}

std::vector<SpectralConv2d> GeneratorImpl::convolutions() const {
  std::vector<SpectralConv2d> convs;
  for (size_t i = 0; i < encoder_->size(); ++i) convs.push_back(encoder_->ptr<ConvBlockImpl>(i)->conv);
  for (size_t r = 0; r < bottleneck_->size(); ++r) {
    auto block = bottleneck_->ptr<ResidualBlockImpl>(r);
    convs.push_back(block->first->conv);
    convs.push_back(block->second->conv);
  }
  for (int64_t l = config_.depth - 1; l >= 0; --l) {
    convs.push_back(up_->ptr<ConvBlockImpl>(l)->conv);
    if (config_.use_skip) convs.push_back(merge_->ptr<ConvBlockImpl>(l)->conv);
  }
  convs.push_back(output_);
  return convs;
}

}  // namespace retarget
