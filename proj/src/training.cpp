#include "training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "errors.hpp"
#include "losses.hpp"
#include "telemetry.hpp"

namespace retarget {
namespace {

constexpr double kQuantStep = 1.0 / 255.0;
constexpr int kMaxTransformDraws = 100;

int64_t round_up(int64_t v, int64_t q) { return (v + q - 1) / q * q; }
int64_t round_down(int64_t v, int64_t q) { return v / q * q; }

int64_t quantized_size(double size, int64_t quantum, int64_t min_side) {
  const auto q = static_cast<double>(quantum);
  const auto rounded = static_cast<int64_t>(std::llround(size / q)) * quantum;
  return std::max({rounded, round_up(min_side, quantum), quantum});
}

std::string tensor_stats(const torch::Tensor& t) {
  if (!t.defined()) return "undefined";
  torch::NoGradGuard no_grad;
  const auto d = t.detach().to(torch::kFloat64);
  const auto finite = torch::isfinite(d);
  const auto nonfinite = d.numel() - finite.sum().item<int64_t>();
  std::ostringstream os;
  os << "shape=" << t.sizes() << " nonfinite=" << nonfinite;
  if (nonfinite < d.numel()) {
    const auto f = d.masked_select(finite);
    os << " min=" << f.min().item<double>() << " max=" << f.max().item<double>()
       << " mean=" << f.mean().item<double>();
  }
  return os.str();
}


}  // namespace

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::restore(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  if (!is) throw InvalidArgument("malformed RNG state");
}

nlohmann::json to_record(const LossReport& r) {
  return {{"schema", kRecordSchema},
          {"kind", "train_step"},
          {"iteration", r.iteration},
          {"l_gan_d", r.l_gan_d},
          {"l_gan_g", r.l_gan_g},
          {"l_reconst", r.l_reconst},
          {"l_total", r.l_total},
          {"lr_g", r.lr_g},
          {"lr_d", r.lr_d},
          {"curriculum", r.curriculum},
          {"crop", r.crop},
          {"output_height", r.output_height},
          {"output_width", r.output_width},
          {"scale_weights", r.scale_weights}};
}

double curriculum_fraction(int64_t iteration, int64_t curriculum_iters) {
  if (curriculum_iters <= 0) return 1.0;
  return std::clamp(static_cast<double>(std::max<int64_t>(iteration, 0)) /
                        static_cast<double>(curriculum_iters),
                    0.0, 1.0);
}

SampledTransform sample_transform(Rng& rng, const CurriculumRanges& ranges, int64_t iteration,
                                  int64_t curriculum_iters, int64_t crop_h, int64_t crop_w,
                                  int64_t size_quantum, int64_t min_side) {
  ranges.validate();
  if (crop_h < 1 || crop_w < 1 || size_quantum < 1) throw InvalidArgument("sample_transform: bad sizes");
  const double f = curriculum_fraction(iteration, curriculum_iters);
  auto draw = [&](double range) { return range * f > 0.0 ? rng.uniform(-range * f, range * f) : 0.0; };

  for (int attempt = 0; attempt < kMaxTransformDraws; ++attempt) {
    SampledTransform s;
    s.fraction = f;
    s.scale_x = 1.0 + draw(ranges.max_scale_dev);
    s.scale_y = 1.0 + draw(ranges.max_scale_dev);
    s.shift_x = draw(ranges.max_shift);
    s.shift_y = draw(ranges.max_shift);
    s.shear_x = draw(ranges.max_shear);
    s.shear_y = draw(ranges.max_shear);
    s.perspective_x = draw(ranges.max_perspective);
    s.perspective_y = draw(ranges.max_perspective);
    try {
      const auto shift = Homography::translation(s.shift_x, s.shift_y);
      const auto shear = Homography::from_matrix({{{1, s.shear_x, 0}, {s.shear_y, 1, 0}, {0, 0, 1}}});
      const auto persp =
          Homography::from_matrix({{{1, 0, 0}, {0, 1, 0}, {s.perspective_x, s.perspective_y, 1}}});
      const auto t = compose(shift, compose(shear, persp));
      (void)invert(t);
      const int64_t h = f == 0.0 ? crop_h
                                 : quantized_size(static_cast<double>(crop_h) * s.scale_y, size_quantum, min_side);
      const int64_t w = f == 0.0 ? crop_w
                                 : quantized_size(static_cast<double>(crop_w) * s.scale_x, size_quantum, min_side);
      s.geometry = OutputGeometry{h, w, t};
      return s;
    } catch (const DegenerateTransform&) {
    }
  }
  throw DegenerateTransform("sample_transform: " + std::to_string(kMaxTransformDraws) +
                            " consecutive singular draws");
}

torch::Tensor dequantize(const torch::Tensor& real, Rng& rng) {
  const auto in = real.detach().to(torch::kFloat32).contiguous();
  auto out = torch::empty_like(in);
  const float* src = in.data_ptr<float>();
  float* dst = out.data_ptr<float>();
  for (int64_t i = 0; i < in.numel(); ++i) {
    const float v = src[i];
    float o = v + static_cast<float>(rng.uniform(0.0, kQuantStep));
    // Keep the realized offset strictly below one quantization step.
    while (static_cast<double>(o) - static_cast<double>(v) >= kQuantStep) {
      o = std::nextafter(o, -std::numeric_limits<float>::infinity());
    }
    dst[i] = o;
  }
  return out;
}

Adam::Adam(std::vector<torch::Tensor> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.push_back(torch::zeros_like(p));
    v_.push_back(torch::zeros_like(p));
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) {
    if (p.mutable_grad().defined()) p.mutable_grad().zero_();
  }
}

void Adam::step(double lr) {
  torch::NoGradGuard no_grad;
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (size_t i = 0; i < params_.size(); ++i) {
    const auto& g = params_[i].grad();
    if (!g.defined()) continue;
    m_[i].mul_(beta1_).add_(g, 1.0 - beta1_);
    v_[i].mul_(beta2_).addcmul_(g, g, 1.0 - beta2_);
    const auto denom = (v_[i] / c2).sqrt_().add_(eps_);
    params_[i].addcdiv_(m_[i], denom, -lr / c1);
  }
}

std::vector<NamedTensor> Adam::state(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  for (size_t i = 0; i < params_.size(); ++i) {
    out.push_back({prefix + "m." + std::to_string(i), m_[i].clone()});
    out.push_back({prefix + "v." + std::to_string(i), v_[i].clone()});
  }
  return out;
}

void Adam::load_state(const Checkpoint& checkpoint, const std::string& prefix, int64_t steps) {
  torch::NoGradGuard no_grad;
  for (size_t i = 0; i < params_.size(); ++i) {
    const auto& m = checkpoint.require(prefix + "m." + std::to_string(i));
    const auto& v = checkpoint.require(prefix + "v." + std::to_string(i));
    if (m.sizes() != m_[i].sizes() || v.sizes() != v_[i].sizes()) {
      throw ShapeError("optimizer state '" + prefix + std::to_string(i) + "' has the wrong shape");
    }
    m_[i].copy_(m);
    v_[i].copy_(v);
  }
  steps_ = steps;
}

std::vector<NamedTensor> module_state(const torch::nn::Module& module, const std::string& prefix) {
  std::vector<NamedTensor> out;
  for (const auto& item : module.named_parameters(true)) {
    out.push_back({prefix + item.key(), item.value().detach().clone()});
  }
  for (const auto& item : module.named_buffers(true)) {
    out.push_back({prefix + item.key(), item.value().detach().clone()});
  }
  return out;
}

void load_module_state(torch::nn::Module& module, const Checkpoint& checkpoint, const std::string& prefix) {
  torch::NoGradGuard no_grad;
  auto load = [&](const std::string& name, torch::Tensor& target) {
    const auto& src = checkpoint.require(prefix + name);
    if (src.sizes() != target.sizes() || src.scalar_type() != target.scalar_type()) {
      throw ShapeError("checkpoint tensor '" + prefix + name + "' does not match the model");
    }
    target.copy_(src);
  };
  for (auto& item : module.named_parameters(true)) load(item.key(), item.value());
  for (auto& item : module.named_buffers(true)) load(item.key(), item.value());
}

torch::Tensor pad_to_min_side(const torch::Tensor& image, int64_t min_side) {
  const int64_t ph = std::max<int64_t>(0, min_side - image.size(-2));
  const int64_t pw = std::max<int64_t>(0, min_side - image.size(-1));
  if (ph == 0 && pw == 0) return image;
  namespace F = torch::nn::functional;
  const auto padded = F::pad(image.unsqueeze(0), F::PadFuncOptions({pw / 2, pw - pw / 2, ph / 2, ph - ph / 2})
                                                     .mode(torch::kReplicate));
  return padded.squeeze(0);
}

torch::Tensor crop_to_quantum(const torch::Tensor& image, int64_t quantum) {
  const int64_t h = round_down(image.size(-2), quantum);
  const int64_t w = round_down(image.size(-1), quantum);
  if (h < 1 || w < 1) throw ShapeError("image is smaller than one size quantum");
  return image.narrow(-2, 0, h).narrow(-1, 0, w).contiguous();
}

Trainer::Trainer(const ModelConfig& config, const torch::Tensor& image) : config_(config) {
  config_.validate();
  if (config_.train.ablate_multiscale) config_.discriminator.num_scales = 1;
  if (image.dim() != 3 || image.size(0) != 3) throw ShapeError("training image must be [3,H,W]");

  image_ = pad_to_min_side(image.detach().to(torch::kFloat32), config_.train.crop_min).contiguous();
  const int64_t q = config_.generator.size_quantum();
  const int64_t lo = round_up(config_.train.crop_min, q);
  const int64_t hi = round_down(std::min({config_.train.crop_max, image_.size(1), image_.size(2)}), q);
  if (lo > hi) {
    throw ConfigError("no crop side in [" + std::to_string(config_.train.crop_min) + ", " +
                      std::to_string(config_.train.crop_max) + "] is a multiple of " + std::to_string(q) +
                      " and fits the image");
  }
  if (lo < min_input_side(config_.discriminator)) {
    throw ConfigError("crop_min is smaller than the discriminator's minimum input side " +
                      std::to_string(min_input_side(config_.discriminator)));
  }

  torch::manual_seed(config_.train.seed);
  generator_ = Generator(config_.generator);
  discriminator_ = Discriminator(config_.discriminator);
  opt_g_ = std::make_unique<Adam>(generator_->parameters(), config_.train.beta1, config_.train.beta2);
  opt_d_ = std::make_unique<Adam>(discriminator_->parameters(), config_.train.beta1, config_.train.beta2);
  rng_ = Rng(config_.train.seed);
}

Trainer::Trainer(const Checkpoint& checkpoint) : config_(checkpoint.config) {
  config_.validate();
  if (config_.train.ablate_multiscale) config_.discriminator.num_scales = 1;
  image_ = checkpoint.require("train_image").clone();
  generator_ = Generator(config_.generator);
  discriminator_ = Discriminator(config_.discriminator);
  load_module_state(*generator_, checkpoint, "g.");
  load_module_state(*discriminator_, checkpoint, "d.");
  opt_g_ = std::make_unique<Adam>(generator_->parameters(), config_.train.beta1, config_.train.beta2);
  opt_d_ = std::make_unique<Adam>(discriminator_->parameters(), config_.train.beta1, config_.train.beta2);
  opt_g_->load_state(checkpoint, "opt_g.", checkpoint.extra.value("opt_g_steps", int64_t{0}));
  opt_d_->load_state(checkpoint, "opt_d.", checkpoint.extra.value("opt_d_steps", int64_t{0}));
  rng_.restore(checkpoint.rng_state);
  iteration_ = checkpoint.iteration;
}

torch::Tensor Trainer::inference_input() const {
  return crop_to_quantum(image_, config_.generator.size_quantum());
}

void Trainer::check_finite(const torch::Tensor& loss, const char* what,
                           const std::vector<std::pair<const char*, torch::Tensor>>& tensors) const {
  if (std::isfinite(loss.item<double>())) return;
  std::ostringstream os;
  os << what << " is not finite at iteration " << iteration_;
  for (const auto& [name, t] : tensors) os << "\n  " << name << ": " << tensor_stats(t);
  throw NonFiniteLoss(os.str());
}

LossReport Trainer::step() {
  const auto& tc = config_.train;
  const int64_t t = iteration_;
  const int64_t q = config_.generator.size_quantum();

  // Crop.
  const int64_t lo = round_up(tc.crop_min, q);
  const int64_t hi = round_down(std::min({tc.crop_max, image_.size(1), image_.size(2)}), q);
  const int64_t side = lo + q * rng_.uniform_int(0, (hi - lo) / q);
  const int64_t y0 = rng_.uniform_int(0, image_.size(1) - side);
  const int64_t x0 = rng_.uniform_int(0, image_.size(2) - side);
  const auto x = image_.narrow(1, y0, side).narrow(2, x0, side).unsqueeze(0).contiguous();

  const auto sampled = sample_transform(rng_, tc.transform_ranges, t, tc.curriculum_iters, side, side, q,
                                        min_input_side(config_.discriminator));
  const auto& geo = sampled.geometry;
  const OutputGeometry back{side, side, invert(geo.transform)};
  const auto weights = scale_weight_schedule(t, tc.curriculum_iters, config_.discriminator.num_scales);
  const double decay =
      tc.iterations > 0 ? 1.0 - static_cast<double>(t) / static_cast<double>(tc.iterations) : 1.0;

  LossReport report;
  report.iteration = t;
  report.lr_g = tc.lr_g * decay;
  report.lr_d = tc.lr_d * decay;
  report.curriculum = sampled.fraction;
  report.crop = side;
  report.output_height = geo.height;
  report.output_width = geo.width;
  report.scale_weights = weights.w;

  generator_->train();
  discriminator_->train();
  const auto y = generator_->forward(x, geo);

  // Discriminator update on dequantized real vs detached fake.
  const auto real = dequantize(x, rng_);
  opt_d_->zero_grad();
  const auto real_maps = discriminator_->maps(real);
  const auto fake_maps = discriminator_->maps(y.detach());
  const auto loss_d = lsgan_d_loss(real_maps, fake_maps, weights);
  check_finite(loss_d, "discriminator loss", {{"real", real}, {"fake", y}});
  loss_d.backward();
  opt_d_->step(report.lr_d);

  // Generator update.
  opt_g_->zero_grad();
  const auto loss_gan = lsgan_g_loss(discriminator_->maps(y), weights);
  torch::Tensor loss_g = loss_gan;
  torch::Tensor rec;
  torch::Tensor x_rec;
  if (!tc.ablate_reconst) {
    x_rec = generator_->forward(y, back);
    rec = reconst_loss(x, x_rec);
    loss_g = loss_gan + rec * tc.lambda_reconst;
  }
  check_finite(loss_g, "generator loss", {{"fake", y}, {"reconstruction", x_rec}});
  loss_g.backward();
  opt_g_->step(report.lr_g);
  opt_d_->zero_grad();

  report.l_gan_d = loss_d.item<double>();
  report.l_gan_g = loss_gan.item<double>();
  report.l_reconst = rec.defined() ? rec.item<double>() : 0.0;
  report.l_total = report.l_gan_g + tc.lambda_reconst * report.l_reconst;
  ++iteration_;
  return report;
}

Checkpoint Trainer::to_checkpoint() const {
  Checkpoint c;
  c.config = config_;
  c.iteration = iteration_;
  c.rng_state = rng_.state();
  c.extra = {{"opt_g_steps", opt_g_->steps()}, {"opt_d_steps", opt_d_->steps()}};
  c.tensors.push_back({"input_image", inference_input().clone()});
  c.tensors.push_back({"train_image", image_.clone()});
  for (auto& t : module_state(*generator_, "g.")) c.tensors.push_back(std::move(t));
  for (auto& t : module_state(*discriminator_, "d.")) c.tensors.push_back(std::move(t));
  for (auto& t : opt_g_->state("opt_g.")) c.tensors.push_back(std::move(t));
  for (auto& t : opt_d_->state("opt_d.")) c.tensors.push_back(std::move(t));
  return c;
}

Checkpoint run_training(Trainer& trainer, const TrainRun& run) {
  std::error_code ec;
  std::filesystem::create_directories(run.out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + run.out_dir.string() + ": " + ec.message());

  const auto& tc = trainer.config().train;
  TelemetryWriter telemetry(run.out_dir / "telemetry.jsonl", trainer.iteration() > 0);
  while (trainer.iteration() < tc.iterations) {
    const auto report = trainer.step();
    telemetry.write(to_record(report));
    if (run.on_step) run.on_step(report);
    const int64_t done = trainer.iteration();
    if (tc.snapshot_every > 0 && done % tc.snapshot_every == 0 && done < tc.iterations) {
      save_checkpoint(trainer.to_checkpoint(), run.out_dir / ("snapshot_" + std::to_string(done) + ".ckpt"));
    }
  }
  auto final_checkpoint = trainer.to_checkpoint();
  save_checkpoint(final_checkpoint, run.out_dir / "checkpoint.ckpt");
  return final_checkpoint;
}

}  // namespace retarget
