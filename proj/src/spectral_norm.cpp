#include "spectral_norm.hpp"

#include <cmath>

namespace retarget {
namespace {

constexpr double kNormEps = 1e-12;

torch::Tensor unit(const torch::Tensor& x) { return x / x.norm().clamp_min(kNormEps); }

}  // namespace

SpectralNormState SpectralNormState::random(int64_t rows, int64_t cols, torch::Dtype dtype) {
  return {unit(torch::randn({rows}, dtype)), unit(torch::randn({cols}, dtype))};
}

SpectralNormResult spectral_normalize(const torch::Tensor& weight, SpectralNormState& state,
                                      int power_iters) {
  const int64_t rows = weight.size(0);
  const auto matrix = weight.reshape({rows, -1});
  if (power_iters > 0) {
    torch::NoGradGuard no_grad;
    const auto w = matrix.detach();
    auto u = state.u.to(w.dtype());
    auto v = state.v.to(w.dtype());
    for (int i = 0; i < power_iters; ++i) {
      v = unit(w.t().mv(u));
      u = unit(w.mv(v));
    }
    state.u.copy_(u);
    state.v.copy_(v);
  }
  // Copies: later forwards update the vectors in place while this graph is alive.
  const auto u = state.u.detach().to(matrix.dtype()).clone();
  const auto v = state.v.detach().to(matrix.dtype()).clone();
  auto sigma = u.dot(matrix.mv(v));
  if (sigma.item<double>() == 0.0) {
    return {weight, torch::zeros({}, weight.options())};
  }
  return {weight / sigma, sigma};
}

int converge_spectral_state(const torch::Tensor& weight, SpectralNormState& state, double rel_tol,
                            int max_iters) {
  torch::NoGradGuard no_grad;
  const auto w = weight.detach().reshape({weight.size(0), -1}).to(torch::kFloat64);
  auto u = state.u.to(torch::kFloat64);
  auto v = state.v.to(torch::kFloat64);
  double previous = 0.0;
  int iters = 0;
  while (iters < max_iters) {
    v = unit(w.t().mv(u));
    u = unit(w.mv(v));
    ++iters;
    const double sigma = u.dot(w.mv(v)).item<double>();
    if (sigma == 0.0 || std::abs(sigma - previous) <= rel_tol * std::abs(sigma)) break;
    previous = sigma;
  }
  state.u.copy_(u);
  state.v.copy_(v);
  return iters;
}

SpectralConv2dImpl::SpectralConv2dImpl(const ConvOptions& options) : options_(options) {
  const int64_t k = options.kernel;
  weight = register_parameter(
      "weight", torch::empty({options.out_channels, options.in_channels, k, k}));
  bias = register_parameter("bias", torch::empty({options.out_channels}));
  torch::nn::init::kaiming_uniform_(weight, std::sqrt(5.0));
  const double bound = 1.0 / std::sqrt(static_cast<double>(options.in_channels * k * k));
  torch::nn::init::uniform_(bias, -bound, bound);

  if (options.spectral_norm) {
    auto state = SpectralNormState::random(options.out_channels, options.in_channels * k * k);
    sn_u = register_buffer("sn_u", state.u);
    sn_v = register_buffer("sn_v", state.v);
    torch::NoGradGuard no_grad;
    SpectralNormState tracked{sn_u, sn_v};
    converge_spectral_state(weight, tracked);
  }
}

torch::Tensor SpectralConv2dImpl::effective_weight() {
  if (!options_.spectral_norm) return weight;
  SpectralNormState tracked{sn_u, sn_v};
  return spectral_normalize(weight, tracked, 0).weight;
}

double SpectralConv2dImpl::tracked_sigma() {
  torch::NoGradGuard no_grad;
  if (!options_.spectral_norm) return std::nan("");
  SpectralNormState tracked{sn_u, sn_v};
  return spectral_normalize(weight, tracked, 0).sigma.item<double>();
}

torch::Tensor SpectralConv2dImpl::forward(const torch::Tensor& x) {
  torch::Tensor w = weight;
  if (options_.spectral_norm) {
    SpectralNormState tracked{sn_u, sn_v};
    w = spectral_normalize(weight, tracked, is_training() ? options_.power_iters : 0).weight;
  }
  torch::Tensor input = x;
  const int64_t pad = options_.kernel / 2;
  if (options_.padding == ConvPadding::Reflect && pad > 0) {
    namespace F = torch::nn::functional;
    // Reflection needs at least pad+1 samples along each axis.
    const bool reflectable = x.size(-1) > pad && x.size(-2) > pad;
    auto opts = F::PadFuncOptions({pad, pad, pad, pad});
    if (reflectable) {
      opts.mode(torch::kReflect);
    } else {
      opts.mode(torch::kReplicate);
    }
    input = F::pad(x, opts);
  }
  return torch::conv2d(input, w, bias, options_.stride);
}

}  // namespace retarget
