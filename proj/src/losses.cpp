#include "losses.hpp"

#include <sstream>

#include "errors.hpp"

namespace retarget {

double lsgan_d_loss(double real_score, double fake_score) {
  return (real_score - 1.0) * (real_score - 1.0) + fake_score * fake_score;
}

double lsgan_g_loss(double fake_score) { return (fake_score - 1.0) * (fake_score - 1.0); }

torch::Tensor lsgan_d_loss(const std::vector<torch::Tensor>& real_maps,
                           const std::vector<torch::Tensor>& fake_maps,
                           const ScaleWeights& weights) {
  if (real_maps.size() != fake_maps.size() || real_maps.size() != weights.w.size()) {
    throw InvalidArgument("lsgan_d_loss: scale count mismatch");
  }
  torch::Tensor loss;
  for (size_t i = 0; i < real_maps.size(); ++i) {
    auto term = ((real_maps[i] - 1.0).square().mean() + fake_maps[i].square().mean()) * weights.w[i];
    loss = loss.defined() ? loss + term : term;
  }
  return loss;
}

torch::Tensor lsgan_g_loss(const std::vector<torch::Tensor>& fake_maps, const ScaleWeights& weights) {
  if (fake_maps.size() != weights.w.size()) throw InvalidArgument("lsgan_g_loss: scale count mismatch");
  torch::Tensor loss;
  for (size_t i = 0; i < fake_maps.size(); ++i) {
    auto term = (fake_maps[i] - 1.0).square().mean() * weights.w[i];
    loss = loss.defined() ? loss + term : term;
  }
  return loss;
}

torch::Tensor reconst_loss(const torch::Tensor& x, const torch::Tensor& x_rec) {
  if (x.sizes() != x_rec.sizes()) {
    std::ostringstream os;
    os << "reconst_loss: shape mismatch " << x.sizes() << " vs " << x_rec.sizes();
    throw ShapeError(os.str());
  }
  return (x_rec - x).abs().mean();
}

}  // namespace retarget
