#include "colorsurf/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <stdexcept>

namespace fs = std::filesystem;

namespace colorsurf {

void TrainConfig::validate() const {
  if (total_iters <= 0) throw std::invalid_argument("total_iters must be positive");
  if (warmup_iters < 0 || warmup_iters >= total_iters)
    throw std::invalid_argument("warmup_iters must lie in [0, total_iters)");
  if (!(lr_min < lr_max)) throw std::invalid_argument("lr_min must be below lr_max");
  if (!(0.0 <= mask_frac_start && mask_frac_start <= mask_frac_end && mask_frac_end <= 1.0))
    throw std::invalid_argument("need 0 <= mask_frac_start <= mask_frac_end <= 1");
  if (rays_per_batch <= 0 || images_per_batch <= 0)
    throw std::invalid_argument("batch sizes must be positive");
  if (pose_lr_scale <= 0) throw std::invalid_argument("pose_lr_scale must be positive");
  if (log_every <= 0 || checkpoint_every <= 0)
    throw std::invalid_argument("log/checkpoint cadence must be positive");
}

double lr_schedule(int64_t iter, const TrainConfig& c) {
  if (iter <= c.warmup_iters)
    return c.warmup_iters == 0
               ? c.lr_max
               : c.lr_max * static_cast<double>(iter) / static_cast<double>(c.warmup_iters);
  const double t = static_cast<double>(iter - c.warmup_iters) /
                   static_cast<double>(c.total_iters - c.warmup_iters);
  return c.lr_min + (c.lr_max - c.lr_min) * 0.5 * (1.0 + std::cos(M_PI * t));
}

double mask_fraction(int64_t iter, const TrainConfig& c) {
  const double t = static_cast<double>(iter) / static_cast<double>(c.total_iters);
  return c.mask_frac_start + (c.mask_frac_end - c.mask_frac_start) * t;
}

std::vector<RayBatchGroup> sample_ray_batch(const Dataset& ds, int64_t iter, Rng& rng,
                                            const TrainConfig& config) {
  const int n = ds.num_images();
  if (n == 0) throw std::invalid_argument("cannot sample rays from an empty dataset");
  if (static_cast<int>(ds.poses.size()) != n)
    throw std::invalid_argument("dataset image without a camera pose");
  const int k = std::min(config.images_per_batch, n);
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < k; ++i) {  // partial Fisher-Yates: k distinct uniform picks
    const int j = i + static_cast<int>(rng.index(static_cast<uint64_t>(n - i)));
    std::swap(idx[i], idx[j]);
  }
  const double frac = mask_fraction(iter, config);
  const int w = ds.width, h = ds.height;

  std::vector<RayBatchGroup> groups;
  for (int g = 0; g < k; ++g) {
    const int count = config.rays_per_batch / k + (g < config.rays_per_batch % k ? 1 : 0);
    if (count == 0) continue;
    const int img = idx[g];
    const Image& im = ds.images[img];
    RayBatchGroup grp;
    grp.image = img;
    grp.intrinsics = ds.poses[img].intrinsics;
    grp.gt.resize(count, 3);
    if (ds.has_masks) grp.mask.resize(count);

    std::vector<int> in_px, out_px;
    if (ds.has_masks) {
      const GrayImage& mk = ds.masks[img];
      for (int p = 0; p < w * h; ++p) (mk.pixels[p] > 127 ? in_px : out_px).push_back(p);
    }
    for (int r = 0; r < count; ++r) {
      int px, py;
      bool in_bit = false;
      if (ds.has_masks) {
        const bool want_in = rng.uniform() < frac;
        const std::vector<int>* pool = want_in ? &in_px : &out_px;
        if (pool->empty()) pool = want_in ? &out_px : &in_px;  // degenerate mask
        const int flat = (*pool)[rng.index(pool->size())];
        px = flat % w;
        py = flat / w;
        in_bit = ds.masks[img].pixels[flat] > 127;
      } else {
        px = static_cast<int>(rng.index(w));
        py = static_cast<int>(rng.index(h));
      }
      grp.pixels.emplace_back(px + 0.5, py + 0.5);
      const float* c = im.at(px, py);
      for (int ch = 0; ch < 3; ++ch) grp.gt(r, ch) = c[ch];
      if (ds.has_masks) grp.mask[r] = in_bit ? 1.0 : 0.0;
    }
    groups.push_back(std::move(grp));
  }
  return groups;
}

std::vector<Ray> batch_rays(const std::vector<RayBatchGroup>& groups, const PoseStore& poses,
                            double sphere_radius) {
  std::vector<Ray> rays;
  for (const RayBatchGroup& gr : groups) {
    const CameraPose cam = poses.pose(gr.image, gr.intrinsics);
    for (const auto& px : gr.pixels) {
      Ray ray = ray_from_pixel(cam, px, 0.0, 0.0);
      if (auto hit = ray_sphere_interval(ray.origin, ray.direction, sphere_radius)) {
        ray.near = hit->first;
        ray.far = hit->second;
      } else {
        const double tm = std::max(-ray.origin.dot(ray.direction), 1e-4);
        ray.near = std::max(tm - sphere_radius, 1e-4);
        ray.far = tm + sphere_radius;
      }
      rays.push_back(ray);
    }
  }
  return rays;
}

void adam_update(Param& p, const Tensor& grad, double lr, int64_t t) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  if (!p.value.same_shape(grad)) throw std::invalid_argument("adam: gradient shape mismatch");
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (size_t i = 0; i < p.value.data.size(); ++i) {
    const double g = grad.data[i];
    p.m.data[i] = b1 * p.m.data[i] + (1.0 - b1) * g;
    p.v.data[i] = b2 * p.v.data[i] + (1.0 - b2) * g * g;
    const double mhat = p.m.data[i] / c1;
    const double vhat = p.v.data[i] / c2;
    p.value.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
  p.value.quantize_f32();
  p.m.quantize_f32();
  p.v.quantize_f32();
}

StepResult train_step(Checkpoint& ck, const Dataset& ds, const TrainConfig& config) {
  const int64_t iter = ck.iteration;
  Rng rng(config.seed, static_cast<uint64_t>(iter));
  TrainConfig cfg = config;
  if (!ds.has_masks) cfg.weights.lambda_m = 0.0;

  const auto groups = sample_ray_batch(ds, iter, rng, cfg);
  RenderParams rp;
  rp.n_coarse = ck.n_coarse;
  rp.n_importance = ck.n_importance;
  rp.stochastic = true;
  rp.sphere_radius = ck.sphere_radius;
  rp.use_background = ck.use_background;

  ad::Tape tape;
  TapeParams tp = lift_params(tape, ck.params);
  TapeParams pose_tp;
  const bool train_poses = cfg.optimize_poses && ck.poses.trainable;
  if (train_poses) pose_tp = lift_poses(tape, ck.poses);

  BatchRender br = render_batch_t(tape, ck.params, tp, ck.poses,
                                  train_poses ? &pose_tp : nullptr, groups, rp, rng);
  LossVars lv = build_losses_t(tape, br, cfg.weights);

  TapeParams all = tp;
  if (train_poses)
    for (const auto& kv : pose_tp.vars) all.vars[kv.first] = kv.second;
  auto grads = loss_gradients(tape, all, lv.total);  // throws before any update

  const double lr = lr_schedule(iter, cfg);
  const int64_t t_adam = iter + 1;
  for (Param& p : ck.params.params) adam_update(p, grads.at(p.name), lr, t_adam);
  if (train_poses)
    for (Param& p : ck.poses.params)
      adam_update(p, grads.at(p.name), lr * cfg.pose_lr_scale, t_adam);
  ck.iteration = iter + 1;

  StepResult res;
  res.losses = lv.values(tape);
  if (br.c_r.valid() && !lv.relight.valid()) {
    // lambda_r = 0 drops the term from the tape; ablation comparisons still
    // need the residual magnitude, so report it as a diagnostic
    const Tensor& cr = tape.val(br.c_r);
    double acc = 0.0;
    for (double v : cr.data) acc += cfg.weights.relight_squared ? v * v : std::abs(v);
    res.losses.relight = acc / static_cast<double>(cr.data.size());
  }
  res.lr = lr;
  return res;
}

namespace {

std::string milestone_path(const std::string& out_dir, int64_t iter) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "checkpoint_%06lld.bin", static_cast<long long>(iter));
  return out_dir + "/" + buf;
}

}  // namespace

TrainResult train(const Dataset& ds, const ModelConfig& model, const NetDims& dims,
                  const RenderParams& render, const TrainConfig& config,
                  const std::string& out_dir, bool resume) {
  config.validate();
  fs::create_directories(out_dir);
  const std::string latest = out_dir + "/checkpoint.bin";
  const std::string csv_path = out_dir + "/loss.csv";

  Checkpoint ck;
  bool resumed = false;
  if (resume && fs::exists(latest)) {
    ck = load_checkpoint(latest);
    resumed = true;
  } else {
    ck.params = init_networks(model, dims, config.seed);
    ck.poses = PoseStore::from_poses(ds.poses, config.optimize_poses);
    ck.iteration = 0;
    ck.n_coarse = render.n_coarse;
    ck.n_importance = render.n_importance;
    ck.sphere_radius = render.sphere_radius;
    ck.use_background = render.use_background;
  }

  std::ofstream csv;
  if (resumed && fs::exists(csv_path)) {
    csv.open(csv_path, std::ios::app);
  } else {
    csv.open(csv_path, std::ios::trunc);
    csv << "iter,color,eikonal,relight,mask,total,lr,alpha\n";
  }
  if (!csv) throw std::runtime_error("cannot open " + csv_path + " for writing");
  csv << std::setprecision(10);

  TrainResult result;
  while (ck.iteration < config.total_iters) {
    const StepResult sr = train_step(ck, ds, config);
    result.log.push_back(sr.losses);
    const int64_t it = ck.iteration;
    if (it % config.log_every == 0 || it == config.total_iters) {
      const LossBreakdown& l = sr.losses;
      csv << it << ',' << l.color << ',' << l.eikonal << ',' << l.relight << ',' << l.mask
          << ',' << l.total << ',' << sr.lr << ',' << ck.params.alpha() << '\n';
      csv.flush();
    }
    if (it % config.checkpoint_every == 0) {
      save_checkpoint(ck, latest);
      save_checkpoint(ck, milestone_path(out_dir, it));
    }
  }
  save_checkpoint(ck, latest);
  result.checkpoint = std::move(ck);
  return result;
}

}  // namespace colorsurf
