#pragma once

#include <cstdint>

namespace retarget {

/// Final-range magnitudes for random transform sampling, in normalized
/// coordinates. The effective range at iteration t is the final range times
/// min(t / curriculum_iters, 1).
struct CurriculumRanges {
  double max_scale_dev = 0.5;    // output size factor per axis in [1 - d, 1 + d]
  double max_shift = 0.1;        // translation
  double max_perspective = 0.1;  // projective row entries
  double max_shear = 0.1;        // off-diagonal linear entries

  /// Throws ConfigError.
  void validate() const;
};

enum class LrDecay { Linear };

struct TrainConfig {
  double lambda_reconst = 0.1;
  int64_t iterations = 20000;
  double lr_g = 2e-4;
  double lr_d = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  LrDecay lr_decay = LrDecay::Linear;
  int64_t crop_min = 192;
  int64_t crop_max = 256;
  int64_t batch_size = 1;
  int64_t curriculum_iters = 10000;
  CurriculumRanges transform_ranges;
  bool ablate_reconst = false;
  bool ablate_multiscale = false;
  uint64_t seed = 0;
  int64_t snapshot_every = 1000;  // 0 disables periodic snapshots

  /// Throws ConfigError.
  void validate() const;
};

}  // namespace retarget
