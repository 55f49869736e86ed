#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "colorsurf/dataset.hpp"
#include "colorsurf/losses.hpp"
#include "colorsurf/render.hpp"

namespace colorsurf {

struct TrainConfig {
  int total_iters = 100000;
  int rays_per_batch = 1024;
  int images_per_batch = 8;
  int warmup_iters = 5000;
  double lr_max = 5e-4;
  double lr_min = 2.5e-5;
  LossWeights weights;
  bool optimize_poses = false;
  double pose_lr_scale = 0.1;  // pose parameters train at lr * pose_lr_scale
  double mask_frac_start = 0.5;
  double mask_frac_end = 0.8;
  uint64_t seed = 0;
  int log_every = 100;          // csv row cadence
  int checkpoint_every = 10000;

  void validate() const;  // throws std::invalid_argument on a broken invariant
};

// Linear warmup 0 -> lr_max over warmup_iters, then cosine decay to lr_min at
// total_iters. Continuous at the warmup boundary, non-increasing after it.
double lr_schedule(int64_t iter, const TrainConfig& config);

// Target in-mask share of sampled rays: linear from mask_frac_start at iter 0
// to mask_frac_end at total_iters.
double mask_fraction(int64_t iter, const TrainConfig& config);

// Picks images_per_batch distinct images (all of them when the dataset is
// smaller) and splits rays_per_batch pixels across them. With masks present
// each pixel is in-mask with probability mask_fraction(iter) exactly. Pixel
// coordinates address pixel centers (x + 0.5, y + 0.5).
std::vector<RayBatchGroup> sample_ray_batch(const Dataset& ds, int64_t iter, Rng& rng,
                                            const TrainConfig& config);

// Materializes world rays for a sampled batch with the given poses, clipped to
// the scene sphere (inspection/testing path; training rebuilds rays on-tape).
std::vector<Ray> batch_rays(const std::vector<RayBatchGroup>& groups, const PoseStore& poses,
                            double sphere_radius);

// Adam (beta1 0.9, beta2 0.999, eps 1e-8) with bias correction at step t >= 1;
// value and moments re-quantized to float32-representable doubles afterward.
void adam_update(Param& p, const Tensor& grad, double lr, int64_t t);

struct StepResult {
  LossBreakdown losses;
  double lr = 0.0;
};

// One optimization step on ck: sample batch (seeded by ck.iteration), render on
// a tape, backpropagate, update parameters (+poses when trainable), increment
// iteration. Throws on non-finite loss before touching any parameter.
StepResult train_step(Checkpoint& ck, const Dataset& ds, const TrainConfig& config);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossBreakdown> log;  // one entry per iteration run in this call
};

// Full training loop. Fresh state (seeded init + dataset poses) unless resume
// finds <out_dir>/checkpoint.bin. Writes loss.csv, checkpoint.bin (latest), and
// milestone checkpoint_<iter>.bin every checkpoint_every iterations.
TrainResult train(const Dataset& ds, const ModelConfig& model, const NetDims& dims,
                  const RenderParams& render, const TrainConfig& config,
                  const std::string& out_dir, bool resume = false);

}  // namespace colorsurf
