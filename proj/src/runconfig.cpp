#include "colorsurf/runconfig.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

using nlohmann::json;

namespace colorsurf {

namespace {

[[noreturn]] void fail(const std::string& what) { throw std::runtime_error("config: " + what); }

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& ctx) {
  for (const auto& kv : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (kv.key() == a) ok = true;
    if (!ok) fail("unknown key \"" + kv.key() + "\" in " + ctx);
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(path + " is not valid json: " + std::string(e.what()));
  }
  if (!j.is_object()) fail(path + " must hold a json object");
  check_keys(j, {"data", "out", "model", "dims", "train", "render"}, "config");

  RunConfig rc;
  rc.data = j.value("data", rc.data);
  rc.out = j.value("out", rc.out);

  if (j.contains("model")) {
    const json& m = j["model"];
    check_keys(m, {"variant", "composition", "relight_uses_gradient"}, "model");
    if (m.contains("variant")) rc.model.variant = variant_from_string(m["variant"]);
    if (m.contains("composition"))
      rc.model.composition = composition_from_string(m["composition"]);
    rc.model.relight_uses_gradient =
        m.value("relight_uses_gradient", rc.model.relight_uses_gradient);
  }
  if (j.contains("dims")) {
    const json& d = j["dims"];
    check_keys(d,
               {"hidden", "feature", "sdf_hidden_layers", "color_hidden_layers", "skip_layer",
                "pos_frequencies", "dir_frequencies"},
               "dims");
    rc.dims.hidden = d.value("hidden", rc.dims.hidden);
    rc.dims.feature = d.value("feature", rc.dims.feature);
    rc.dims.sdf_hidden_layers = d.value("sdf_hidden_layers", rc.dims.sdf_hidden_layers);
    rc.dims.color_hidden_layers = d.value("color_hidden_layers", rc.dims.color_hidden_layers);
    rc.dims.skip_layer = d.value("skip_layer", rc.dims.skip_layer);
    rc.dims.pos_frequencies = d.value("pos_frequencies", rc.dims.pos_frequencies);
    rc.dims.dir_frequencies = d.value("dir_frequencies", rc.dims.dir_frequencies);
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    check_keys(t,
               {"total_iters", "rays_per_batch", "images_per_batch", "warmup_iters", "lr_max",
                "lr_min", "lambda_color", "lambda_eikonal", "lambda_relight", "lambda_mask",
                "relight_squared", "optimize_poses", "pose_lr_scale", "mask_frac_start",
                "mask_frac_end", "seed", "log_every", "checkpoint_every"},
               "train");
    TrainConfig& tc = rc.train;
    tc.total_iters = t.value("total_iters", tc.total_iters);
    tc.rays_per_batch = t.value("rays_per_batch", tc.rays_per_batch);
    tc.images_per_batch = t.value("images_per_batch", tc.images_per_batch);
    tc.warmup_iters = t.value("warmup_iters", tc.warmup_iters);
    tc.lr_max = t.value("lr_max", tc.lr_max);
    tc.lr_min = t.value("lr_min", tc.lr_min);
    tc.weights.lambda_c = t.value("lambda_color", tc.weights.lambda_c);
    tc.weights.lambda_e = t.value("lambda_eikonal", tc.weights.lambda_e);
    tc.weights.lambda_r = t.value("lambda_relight", tc.weights.lambda_r);
    tc.weights.lambda_m = t.value("lambda_mask", tc.weights.lambda_m);
    tc.weights.relight_squared = t.value("relight_squared", tc.weights.relight_squared);
    tc.optimize_poses = t.value("optimize_poses", tc.optimize_poses);
    tc.pose_lr_scale = t.value("pose_lr_scale", tc.pose_lr_scale);
    tc.mask_frac_start = t.value("mask_frac_start", tc.mask_frac_start);
    tc.mask_frac_end = t.value("mask_frac_end", tc.mask_frac_end);
    tc.seed = t.value("seed", tc.seed);
    tc.log_every = t.value("log_every", tc.log_every);
    tc.checkpoint_every = t.value("checkpoint_every", tc.checkpoint_every);
  }
  if (j.contains("render")) {
    const json& r = j["render"];
    check_keys(r, {"n_coarse", "n_importance", "sphere_radius", "use_background"}, "render");
    rc.render.n_coarse = r.value("n_coarse", rc.render.n_coarse);
    rc.render.n_importance = r.value("n_importance", rc.render.n_importance);
    rc.render.sphere_radius = r.value("sphere_radius", rc.render.sphere_radius);
    rc.render.use_background = r.value("use_background", rc.render.use_background);
  }
  return rc;
}

void write_run_config(const RunConfig& rc, const std::string& path) {
  json j;
  j["data"] = rc.data;
  j["out"] = rc.out;
  j["model"] = {{"variant", to_string(rc.model.variant)},
                {"composition", to_string(rc.model.composition)},
                {"relight_uses_gradient", rc.model.relight_uses_gradient}};
  j["dims"] = {{"hidden", rc.dims.hidden},
               {"feature", rc.dims.feature},
               {"sdf_hidden_layers", rc.dims.sdf_hidden_layers},
               {"color_hidden_layers", rc.dims.color_hidden_layers},
               {"skip_layer", rc.dims.skip_layer},
               {"pos_frequencies", rc.dims.pos_frequencies},
               {"dir_frequencies", rc.dims.dir_frequencies}};
  const TrainConfig& tc = rc.train;
  j["train"] = {{"total_iters", tc.total_iters},
                {"rays_per_batch", tc.rays_per_batch},
                {"images_per_batch", tc.images_per_batch},
                {"warmup_iters", tc.warmup_iters},
                {"lr_max", tc.lr_max},
                {"lr_min", tc.lr_min},
                {"lambda_color", tc.weights.lambda_c},
                {"lambda_eikonal", tc.weights.lambda_e},
                {"lambda_relight", tc.weights.lambda_r},
                {"lambda_mask", tc.weights.lambda_m},
                {"relight_squared", tc.weights.relight_squared},
                {"optimize_poses", tc.optimize_poses},
                {"pose_lr_scale", tc.pose_lr_scale},
                {"mask_frac_start", tc.mask_frac_start},
                {"mask_frac_end", tc.mask_frac_end},
                {"seed", tc.seed},
                {"log_every", tc.log_every},
                {"checkpoint_every", tc.checkpoint_every}};
  j["render"] = {{"n_coarse", rc.render.n_coarse},
                 {"n_importance", rc.render.n_importance},
                 {"sphere_radius", rc.render.sphere_radius},
                 {"use_background", rc.render.use_background}};
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) fail("cannot write " + path);
    out << j.dump(2) << "\n";
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) fail("cannot move " + path + " into place");
}

}  // namespace colorsurf
