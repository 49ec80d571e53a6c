#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "checkpoint.hpp"
#include "config.hpp"
#include "discriminator.hpp"
#include "generator.hpp"
#include "geometry.hpp"

namespace retarget {

/// Seedable generator for every random draw made during training (crops,
/// transforms, dequantization noise). Its state round-trips through text.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  /// Uniform integer in [lo, hi].
  int64_t uniform_int(int64_t lo, int64_t hi) {
    return std::uniform_int_distribution<int64_t>(lo, hi)(engine_);
  }

  std::string state() const;
  void restore(const std::string& state);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

struct LossReport {
  int64_t iteration = 0;
  double l_gan_d = 0.0;
  double l_gan_g = 0.0;
  double l_reconst = 0.0;
  double l_total = 0.0;
  // Context for telemetry.
  double lr_g = 0.0;
  double lr_d = 0.0;
  double curriculum = 0.0;
  int64_t crop = 0;
  int64_t output_height = 0;
  int64_t output_width = 0;
  std::vector<double> scale_weights;

  bool operator==(const LossReport&) const = default;
};

/// Telemetry record of kind "train_step".
nlohmann::json to_record(const LossReport& report);

/// Fraction of the final transform range available at `iteration`.
double curriculum_fraction(int64_t iteration, int64_t curriculum_iters);

struct SampledTransform {
  OutputGeometry geometry;
  double fraction = 0.0;
  double scale_x = 1.0;  // continuous size factors before rounding
  double scale_y = 1.0;
  double shift_x = 0.0;
  double shift_y = 0.0;
  double shear_x = 0.0;
  double shear_y = 0.0;
  double perspective_x = 0.0;
  double perspective_y = 0.0;
};

/// Draws an output geometry for a crop of crop_h x crop_w. Output dims are
/// rounded to multiples of `size_quantum` and never fall below `min_side`.
/// The transform is translate * shear * perspective with every parameter
/// uniform in +-(fraction * range). Throws DegenerateTransform after 100
/// consecutive singular draws.
SampledTransform sample_transform(Rng& rng, const CurriculumRanges& ranges, int64_t iteration,
                                  int64_t curriculum_iters, int64_t crop_h, int64_t crop_w,
                                  int64_t size_quantum = 1, int64_t min_side = 1);

/// Adds i.i.d. uniform noise in [0, 1/255) to every element.
torch::Tensor dequantize(const torch::Tensor& real, Rng& rng);

/// Plain ADAM over a fixed parameter list; its state is exported for
/// checkpointing.
class Adam {
 public:
  Adam(std::vector<torch::Tensor> params, double beta1, double beta2, double eps = 1e-8);

  void zero_grad();
  void step(double lr);

  int64_t steps() const noexcept { return steps_; }
  std::vector<NamedTensor> state(const std::string& prefix) const;
  void load_state(const Checkpoint& checkpoint, const std::string& prefix, int64_t steps);

 private:
  std::vector<torch::Tensor> params_;
  std::vector<torch::Tensor> m_;
  std::vector<torch::Tensor> v_;
  double beta1_;
  double beta2_;
  double eps_;
  int64_t steps_ = 0;
};

/// Prepares a [3,H,W] image for training: replicate-pads each side up to
/// `min_side` when smaller.
torch::Tensor pad_to_min_side(const torch::Tensor& image, int64_t min_side);

/// Largest top-left crop whose dims are multiples of `quantum`.
torch::Tensor crop_to_quantum(const torch::Tensor& image, int64_t quantum);

/// Owns the generator, discriminator, both optimizers and the RNG. The whole
/// trajectory is a function of the image and the config (seed included).
class Trainer {
 public:
  Trainer(const ModelConfig& config, const torch::Tensor& image);
  explicit Trainer(const Checkpoint& checkpoint);

  /// One D update followed by one G update at the current iteration.
  LossReport step();

  int64_t iteration() const noexcept { return iteration_; }
  const ModelConfig& config() const noexcept { return config_; }
  Generator& generator() noexcept { return generator_; }
  Discriminator& discriminator() noexcept { return discriminator_; }
  /// Training image (padded, [3,H,W]).
  const torch::Tensor& image() const noexcept { return image_; }
  /// Inference input stored in checkpoints.
  torch::Tensor inference_input() const;

  Checkpoint to_checkpoint() const;

 private:
  void check_finite(const torch::Tensor& loss, const char* what,
                    const std::vector<std::pair<const char*, torch::Tensor>>& tensors) const;

  ModelConfig config_;
  torch::Tensor image_;
  Generator generator_{nullptr};
  Discriminator discriminator_{nullptr};
  std::unique_ptr<Adam> opt_g_;
  std::unique_ptr<Adam> opt_d_;
  Rng rng_;
  int64_t iteration_ = 0;
};

/// Loads generator weights and buffers from checkpoint tensors ("g." names).
void load_module_state(torch::nn::Module& module, const Checkpoint& checkpoint, const std::string& prefix);
std::vector<NamedTensor> module_state(const torch::nn::Module& module, const std::string& prefix);

struct TrainRun {
  std::filesystem::path out_dir;
  /// Called after every step, after telemetry is written.
  std::function<void(const LossReport&)> on_step;
};

/// Runs `trainer` up to config().train.iterations, appending one telemetry
/// line per step to out_dir/telemetry.jsonl, writing snapshot_<k>.ckpt every
/// snapshot_every steps and checkpoint.ckpt at the end. Returns the final
/// checkpoint.
Checkpoint run_training(Trainer& trainer, const TrainRun& run);

}  // namespace retarget
