#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "colorsurf/synth.hpp"
#include "colorsurf/train.hpp"
#include "test_util.hpp"

using namespace colorsurf;
using colorsurf::testutil::TempDir;
namespace fs = std::filesystem;

namespace {

NetDims toy_dims() {
  NetDims d;
  d.hidden = 8;
  d.feature = 4;
  d.sdf_hidden_layers = 3;
  d.color_hidden_layers = 2;
  d.skip_layer = 2;
  d.pos_frequencies = 2;
  d.dir_frequencies = 1;
  return d;
}

// Tiny in-memory capture: an analytic sphere rendered from a few orbit views.
Dataset toy_dataset(int n_cams = 3, int size = 10) {
  SceneSpec spec;
  spec.camera_count = n_cams;
  spec.image_size = size;
  Dataset ds;
  for (const CameraPose& cam : orbit_cameras(spec)) {
    auto [img, mask] = render_synthetic(spec, cam);
    char name[16];
    std::snprintf(name, sizeof name, "%02d.png", ds.num_images());
    ds.names.push_back(name);
    ds.images.push_back(std::move(img));
    ds.masks.push_back(std::move(mask));
    ds.poses.push_back(cam);
  }
  ds.has_masks = true;
  ds.width = size;
  ds.height = size;
  return ds;
}

Checkpoint toy_checkpoint(const Dataset& ds, Variant v, uint64_t seed) {
  ModelConfig cfg;
  cfg.variant = v;
  Checkpoint ck;
  ck.params = init_networks(cfg, toy_dims(), seed);
  ck.poses = PoseStore::from_poses(ds.poses, false);
  ck.n_coarse = 8;
  ck.n_importance = 4;
  return ck;
}

TrainConfig toy_config() {
  TrainConfig cfg;
  cfg.total_iters = 50;
  cfg.rays_per_batch = 8;
  cfg.images_per_batch = 2;
  cfg.warmup_iters = 2;
  cfg.lr_max = 5e-4;
  cfg.lr_min = 5e-5;
  cfg.log_every = 1;
  cfg.checkpoint_every = 100;
  return cfg;
}

// The exact forward pass of train_step (same rng consumption), values only.
double batch_loss(const Checkpoint& ck, const Dataset& ds, const TrainConfig& config) {
  TrainConfig cfg = config;
  if (!ds.has_masks) cfg.weights.lambda_m = 0.0;
  Rng rng(cfg.seed, static_cast<uint64_t>(ck.iteration));
  const auto groups = sample_ray_batch(ds, ck.iteration, rng, cfg);
  RenderParams rp;
  rp.n_coarse = ck.n_coarse;
  rp.n_importance = ck.n_importance;
  rp.stochastic = true;
  rp.sphere_radius = ck.sphere_radius;
  rp.use_background = ck.use_background;
  ad::Tape tape;
  TapeParams tp = lift_params(tape, ck.params);
  BatchRender br = render_batch_t(tape, ck.params, tp, ck.poses, nullptr, groups, rp, rng);
  LossVars lv = build_losses_t(tape, br, cfg.weights);
  return lv.values(tape).total;
}

std::vector<char> file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool params_equal(const ParamStore& a, const ParamStore& b) {
  if (a.params.size() != b.params.size()) return false;
  for (size_t i = 0; i < a.params.size(); ++i) {
    if (a.params[i].name != b.params[i].name) return false;
    if (a.params[i].value.data != b.params[i].value.data) return false;
    if (a.params[i].m.data != b.params[i].m.data) return false;
    if (a.params[i].v.data != b.params[i].v.data) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("lr schedule: pinned values, warmup continuity, monotone decay") {
  TrainConfig c;  // warmup 5000, total 100000, 5e-4 -> 2.5e-5
  CHECK(lr_schedule(0, c) == 0.0);
  CHECK(lr_schedule(2500, c) == doctest::Approx(2.5e-4).epsilon(1e-12));
  CHECK(lr_schedule(5000, c) == doctest::Approx(5e-4).epsilon(1e-15));
  CHECK(lr_schedule(52500, c) == doctest::Approx(2.625e-4).epsilon(1e-12));
  CHECK(lr_schedule(100000, c) == doctest::Approx(2.5e-5).epsilon(1e-12));
  // continuous across the warmup boundary
  CHECK(std::abs(lr_schedule(5001, c) - lr_schedule(5000, c)) < 1e-9);
  // non-increasing over the cosine segment
  for (int64_t i = c.warmup_iters; i + 475 <= c.total_iters; i += 475)
    CHECK(lr_schedule(i + 475, c) <= lr_schedule(i, c) + 1e-18);

  TrainConfig nowarm = c;
  nowarm.warmup_iters = 0;
  CHECK(lr_schedule(0, nowarm) == c.lr_max);
}

TEST_CASE("mask fraction ramps linearly between its endpoints") {
  TrainConfig c;  // 0.5 -> 0.8 over total_iters
  CHECK(mask_fraction(0, c) == 0.5);
  CHECK(mask_fraction(c.total_iters, c) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(mask_fraction(c.total_iters / 2, c) == doctest::Approx(0.65).epsilon(1e-12));
}

TEST_CASE("train config validation rejects broken invariants") {
  auto bad = [](auto&& tweak) {
    TrainConfig c;
    tweak(c);
    return c;
  };
  CHECK_THROWS_AS(bad([](TrainConfig& c) { c.total_iters = 0; }).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(bad([](TrainConfig& c) { c.warmup_iters = c.total_iters; }).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(bad([](TrainConfig& c) { c.lr_min = c.lr_max; }).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(bad([](TrainConfig& c) { c.mask_frac_start = 0.9; }).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(bad([](TrainConfig& c) { c.mask_frac_end = 1.2; }).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(bad([](TrainConfig& c) { c.rays_per_batch = 0; }).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(bad([](TrainConfig& c) { c.images_per_batch = -1; }).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(bad([](TrainConfig& c) { c.pose_lr_scale = 0.0; }).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(bad([](TrainConfig& c) { c.log_every = 0; }).validate(),
                  std::invalid_argument);
  CHECK_NOTHROW(TrainConfig{}.validate());
}

TEST_CASE("ray batches: exact size, distinct images, centered pixels, gt fidelity") {
  Dataset ds;
  ds.width = ds.height = 8;
  ds.has_masks = true;
  for (int i = 0; i < 4; ++i) {
    Image im = Image::zeros(8, 8);
    GrayImage mk = GrayImage::zeros(8, 8);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        float* px = im.at(x, y);
        for (int ch = 0; ch < 3; ++ch)
          px[ch] = static_cast<float>(((x + 1) * (y + 1) * (i + 1) + ch) % 17) / 16.0f;
        mk.at(x, y) = x < 4 ? 255 : 0;  // left half is foreground
      }
    ds.images.push_back(std::move(im));
    ds.masks.push_back(std::move(mk));
    CameraPose cam;
    cam.intrinsics << 50, 0, 4, 0, 50, 4, 0, 0, 1;
    ds.poses.push_back(cam);
    ds.names.push_back(std::to_string(i) + ".png");
  }

  TrainConfig cfg;  // rays 1024 over min(8, 4) images
  Rng rng(3, 0);
  const auto groups = sample_ray_batch(ds, 0, rng, cfg);
  REQUIRE(groups.size() == 4);
  int total = 0;
  std::set<int> seen;
  for (const auto& g : groups) {
    REQUIRE(g.image >= 0);
    REQUIRE(g.image < 4);
    seen.insert(g.image);
    CHECK((g.intrinsics - ds.poses[g.image].intrinsics).norm() == 0.0);
    REQUIRE(static_cast<int>(g.pixels.size()) == g.gt.rows());
    REQUIRE(g.mask.size() == g.gt.rows());
    for (int r = 0; r < g.gt.rows(); ++r) {
      const double fx = g.pixels[r].x(), fy = g.pixels[r].y();
      CHECK(fx - std::floor(fx) == 0.5);  // pixel centers
      CHECK(fy - std::floor(fy) == 0.5);
      const int ix = static_cast<int>(fx), iy = static_cast<int>(fy);
      REQUIRE(ix >= 0);
      REQUIRE(ix < 8);
      const float* px = ds.images[g.image].at(ix, iy);
      for (int ch = 0; ch < 3; ++ch) CHECK(g.gt(r, ch) == static_cast<double>(px[ch]));
      CHECK(g.mask[r] == (ix < 4 ? 1.0 : 0.0));
    }
    total += static_cast<int>(g.pixels.size());
  }
  CHECK(total == cfg.rays_per_batch);
  CHECK(seen.size() == 4);  // distinct images

  CHECK_THROWS_AS(sample_ray_batch(Dataset{}, 0, rng, cfg), std::invalid_argument);
}

TEST_CASE("ray batches: in-mask share follows the requested fraction") {
  Dataset ds;
  ds.width = ds.height = 8;
  ds.has_masks = true;
  Image im = Image::zeros(8, 8);
  GrayImage mk = GrayImage::zeros(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) mk.at(x, y) = x < 4 ? 255 : 0;
  ds.images.push_back(im);
  ds.masks.push_back(mk);
  ds.poses.emplace_back();
  ds.names.push_back("0.png");

  TrainConfig cfg;
  cfg.images_per_batch = 1;

  cfg.rays_per_batch = 64;
  cfg.mask_frac_start = cfg.mask_frac_end = 1.0;
  Rng all_rng(4, 0);
  for (const auto& g : sample_ray_batch(ds, 0, all_rng, cfg))
    for (int r = 0; r < g.mask.size(); ++r) CHECK(g.mask[r] == 1.0);

  cfg.mask_frac_start = cfg.mask_frac_end = 0.0;
  Rng none_rng(4, 1);
  for (const auto& g : sample_ray_batch(ds, 0, none_rng, cfg))
    for (int r = 0; r < g.mask.size(); ++r) CHECK(g.mask[r] == 0.0);

  cfg.rays_per_batch = 10000;
  cfg.mask_frac_start = cfg.mask_frac_end = 0.65;
  Rng rng(5, 0);
  const auto groups = sample_ray_batch(ds, 0, rng, cfg);
  int in = 0, n = 0;
  for (const auto& g : groups)
    for (int r = 0; r < g.mask.size(); ++r) {
      in += g.mask[r] == 1.0 ? 1 : 0;
      ++n;
    }
  REQUIRE(n == 10000);
  const double share = static_cast<double>(in) / n;
  CHECK(share > 0.62);
  CHECK(share < 0.68);

  // without masks: no mask bits, and samples reach the right half of the image
  ds.has_masks = false;
  ds.masks.clear();
  Rng free_rng(6, 0);
  bool right_half = false;
  for (const auto& g : sample_ray_batch(ds, 0, free_rng, cfg)) {
    CHECK(g.mask.size() == 0);
    for (const auto& p : g.pixels) right_half |= p.x() > 4.0;
  }
  CHECK(right_half);
}

TEST_CASE("adam: pinned first step, zero-gradient no-op, shape checks") {
  Param p;
  p.name = "w";
  p.value = Tensor::from_rows({{1.0, -2.0}});
  p.m = Tensor::zeros(1, 2);
  p.v = Tensor::zeros(1, 2);
  Tensor g = Tensor::from_rows({{0.5, -0.5}});
  adam_update(p, g, 0.1, 1);
  // bias-corrected first step is lr * g / (|g| + eps)
  CHECK(p.value.at(0, 0) == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(p.value.at(0, 1) == doctest::Approx(-1.9).epsilon(1e-6));
  CHECK(p.m.at(0, 0) == doctest::Approx(0.05).epsilon(1e-7));
  CHECK(p.v.at(0, 0) == doctest::Approx(2.5e-4).epsilon(1e-7));

  Param q;
  q.name = "frozen";
  q.value = Tensor::from_rows({{0.25, -0.75}});
  q.m = Tensor::zeros(1, 2);
  q.v = Tensor::zeros(1, 2);
  const std::vector<double> before = q.value.data;
  adam_update(q, Tensor::zeros(1, 2), 0.1, 1);
  CHECK(q.value.data == before);  // zero grad + zero moments: bitwise no-op
  CHECK(q.m.data == std::vector<double>{0.0, 0.0});
  CHECK(q.v.data == std::vector<double>{0.0, 0.0});

  CHECK_THROWS_AS(adam_update(q, Tensor::zeros(2, 2), 0.1, 1), std::invalid_argument);
}

TEST_CASE("train_step: all-zero loss weights leave parameters bitwise unchanged") {
  const Dataset ds = toy_dataset();
  Checkpoint ck = toy_checkpoint(ds, Variant::color_neus, 11);
  TrainConfig cfg = toy_config();
  cfg.warmup_iters = 0;  // nonzero lr at iter 0: invariance must come from zero grads
  cfg.weights.lambda_c = cfg.weights.lambda_e = 0.0;
  cfg.weights.lambda_r = cfg.weights.lambda_m = 0.0;

  const ParamStore before = ck.params;
  const StepResult sr = train_step(ck, ds, cfg);
  CHECK(ck.iteration == 1);
  CHECK(params_equal(ck.params, before));
  CHECK(sr.losses.color == 0.0);
  CHECK(sr.losses.eikonal == 0.0);
  CHECK(sr.losses.mask == 0.0);
  CHECK(sr.losses.total == 0.0);
  CHECK(sr.losses.relight == 0.0);  // diagnostic |c_r|: exactly zero at init
  CHECK(sr.lr == cfg.lr_max);
}

TEST_CASE("train_step: one small step reduces the loss on its own batch") {
  const Dataset ds = toy_dataset();
  Checkpoint ck = toy_checkpoint(ds, Variant::color_neus, 1);
  TrainConfig cfg = toy_config();
  cfg.rays_per_batch = 4;
  cfg.warmup_iters = 0;
  cfg.lr_max = 1e-6;
  cfg.lr_min = 1e-8;

  const double l0 = batch_loss(ck, ds, cfg);
  REQUIRE(l0 > 0.0);
  const StepResult sr = train_step(ck, ds, cfg);
  CHECK(sr.losses.total == l0);  // losses are reported pre-update
  REQUIRE(ck.iteration == 1);
  ck.iteration = 0;  // re-draw the very same batch with the updated parameters
  const double l1 = batch_loss(ck, ds, cfg);
  CHECK(l1 < l0);
}

TEST_CASE("train: same seed reproduces losses and parameters bitwise") {
  const Dataset ds = toy_dataset();
  TrainConfig cfg = toy_config();
  cfg.total_iters = 6;
  ModelConfig model;
  RenderParams render;
  render.n_coarse = 8;
  render.n_importance = 4;

  TempDir dir_a("train_det_a"), dir_b("train_det_b"), dir_c("train_det_c");
  const TrainResult a = train(ds, model, toy_dims(), render, cfg, dir_a.str());
  const TrainResult b = train(ds, model, toy_dims(), render, cfg, dir_b.str());
  REQUIRE(a.log.size() == 6);
  REQUIRE(b.log.size() == 6);
  for (size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].color == b.log[i].color);
    CHECK(a.log[i].eikonal == b.log[i].eikonal);
    CHECK(a.log[i].relight == b.log[i].relight);
    CHECK(a.log[i].mask == b.log[i].mask);
    CHECK(a.log[i].total == b.log[i].total);
  }
  CHECK(params_equal(a.checkpoint.params, b.checkpoint.params));
  CHECK(file_bytes(dir_a.sub("checkpoint.bin")) == file_bytes(dir_b.sub("checkpoint.bin")));

  TrainConfig other = cfg;
  other.seed = cfg.seed + 1;
  const TrainResult c = train(ds, model, toy_dims(), render, other, dir_c.str());
  CHECK(!params_equal(a.checkpoint.params, c.checkpoint.params));

  // csv: header plus one row per iteration at log_every 1
  std::ifstream csv(dir_a.sub("loss.csv"));
  REQUIRE(csv.good());
  std::string line;
  std::getline(csv, line);
  CHECK(line == "iter,color,eikonal,relight,mask,total,lr,alpha");
  int rows = 0;
  double last_alpha = 0.0, last_lr = -1.0;
  int64_t last_iter = 0;
  while (std::getline(csv, line)) {
    ++rows;
    std::stringstream ss(line);
    std::string field;
    std::vector<double> vals;
    while (std::getline(ss, field, ',')) vals.push_back(std::stod(field));
    REQUIRE(vals.size() == 8);
    last_iter = static_cast<int64_t>(vals[0]);
    last_lr = vals[6];
    last_alpha = vals[7];
  }
  CHECK(rows == 6);
  CHECK(last_iter == 6);
  // a row labeled k logs the step that ran at iteration k-1
  CHECK(last_lr == doctest::Approx(lr_schedule(5, cfg)).epsilon(1e-9));
  CHECK(last_alpha > 0.0);
}

TEST_CASE("train: resuming from a milestone matches the uninterrupted run bitwise") {
  const Dataset ds = toy_dataset();
  TrainConfig cfg = toy_config();
  cfg.total_iters = 8;
  cfg.checkpoint_every = 4;
  ModelConfig model;
  RenderParams render;
  render.n_coarse = 8;
  render.n_importance = 4;

  TempDir full_dir("train_full"), resumed_dir("train_resumed");
  const TrainResult full = train(ds, model, toy_dims(), render, cfg, full_dir.str());
  REQUIRE(fs::exists(full_dir.sub("checkpoint_000004.bin")));
  REQUIRE(fs::exists(full_dir.sub("checkpoint_000008.bin")));

  // interrupt after the iter-4 milestone: resume must replay 5..8 identically
  fs::copy_file(full_dir.sub("checkpoint_000004.bin"), resumed_dir.sub("checkpoint.bin"));
  const TrainResult resumed =
      train(ds, model, toy_dims(), render, cfg, resumed_dir.str(), /*resume=*/true);
  CHECK(resumed.log.size() == 4);
  CHECK(resumed.checkpoint.iteration == 8);
  CHECK(file_bytes(resumed_dir.sub("checkpoint.bin")) ==
        file_bytes(full_dir.sub("checkpoint.bin")));
  CHECK(params_equal(resumed.checkpoint.params, full.checkpoint.params));

  // checkpoint container round-trips bitwise in memory too
  const Checkpoint loaded = load_checkpoint(full_dir.sub("checkpoint.bin"));
  CHECK(loaded.iteration == full.checkpoint.iteration);
  CHECK(loaded.n_coarse == full.checkpoint.n_coarse);
  CHECK(loaded.n_importance == full.checkpoint.n_importance);
  CHECK(loaded.sphere_radius == full.checkpoint.sphere_radius);
  CHECK(loaded.use_background == full.checkpoint.use_background);
  CHECK(params_equal(loaded.params, full.checkpoint.params));
}

TEST_CASE("poses stay bitwise frozen unless pose optimization is on") {
  const Dataset ds = toy_dataset();
  TrainConfig cfg = toy_config();
  cfg.warmup_iters = 0;

  Checkpoint frozen = toy_checkpoint(ds, Variant::color_neus, 2);
  REQUIRE(!frozen.poses.trainable);
  const PoseStore pose_init = frozen.poses;
  for (int i = 0; i < 3; ++i) train_step(frozen, ds, cfg);
  REQUIRE(frozen.poses.params.size() == pose_init.params.size());
  for (size_t i = 0; i < pose_init.params.size(); ++i)
    CHECK(frozen.poses.params[i].value.data == pose_init.params[i].value.data);

  cfg.optimize_poses = true;
  Checkpoint live = toy_checkpoint(ds, Variant::color_neus, 2);
  live.poses = PoseStore::from_poses(ds.poses, true);
  REQUIRE(live.poses.trainable);
  for (int i = 0; i < 3; ++i) train_step(live, ds, cfg);
  bool moved = false;
  for (size_t i = 0; i < pose_init.params.size(); ++i)
    moved |= live.poses.params[i].value.data != pose_init.params[i].value.data;
  CHECK(moved);
}

TEST_CASE("variant towers: naive has no relight, baseline has its own head") {
  const Dataset ds = toy_dataset();
  auto has_prefix = [](const ParamStore& ps, const std::string& prefix) {
    for (const Param& p : ps.params)
      if (p.name.rfind(prefix, 0) == 0) return true;
    return false;
  };

  Checkpoint naive = toy_checkpoint(ds, Variant::naive, 3);
  CHECK(!has_prefix(naive.params, "relight/"));
  CHECK(!has_prefix(naive.params, "baseline/"));
  const StepResult sr = train_step(naive, ds, toy_config());
  CHECK(sr.losses.relight == 0.0);  // no residual tower anywhere

  Checkpoint baseline = toy_checkpoint(ds, Variant::neus_baseline, 3);
  CHECK(has_prefix(baseline.params, "baseline/"));
  CHECK(!has_prefix(baseline.params, "relight/"));

  Checkpoint full = toy_checkpoint(ds, Variant::color_neus, 3);
  CHECK(has_prefix(full.params, "relight/"));
  CHECK(has_prefix(full.params, "color/"));
  CHECK(has_prefix(naive.params, "color/"));
}
