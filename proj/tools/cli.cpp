#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "colorsurf/dataset.hpp"
#include "colorsurf/mesh.hpp"
#include "colorsurf/metrics.hpp"
#include "colorsurf/ply.hpp"
#include "colorsurf/runconfig.hpp"
#include "colorsurf/synth.hpp"
#include "colorsurf/train.hpp"

namespace fs = std::filesystem;
using namespace colorsurf;

namespace {

struct PoseFile {
  CameraPose pose;
  int width = 0, height = 0;
};

Eigen::MatrixXd json_matrix(const nlohmann::json& j, int rows, int cols,
                            const std::string& what) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows)
    throw std::runtime_error(what + " must be a " + std::to_string(rows) + "x" +
                             std::to_string(cols) + " array");
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  return m;
}

// {"intrinsics": 3x3, "camera_to_world": 4x4, "width": W, "height": H}
PoseFile load_pose_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open pose file " + path);
  nlohmann::json j;
  in >> j;
  for (const auto& kv : j.items())
    if (kv.key() != "intrinsics" && kv.key() != "camera_to_world" && kv.key() != "width" &&
        kv.key() != "height")
      throw std::runtime_error("pose file: unknown key \"" + kv.key() + "\"");
  PoseFile pf;
  const Eigen::Matrix4d c2w = json_matrix(j.at("camera_to_world"), 4, 4, "camera_to_world");
  pf.pose.intrinsics = json_matrix(j.at("intrinsics"), 3, 3, "intrinsics");
  pf.pose.rot6d = matrix_to_rot6d(c2w.topLeftCorner<3, 3>());
  pf.pose.translation = c2w.topRightCorner<3, 1>();
  pf.width = j.at("width").get<int>();
  pf.height = j.at("height").get<int>();
  if (pf.width <= 0 || pf.height <= 0) throw std::runtime_error("pose file: bad image size");
  return pf;
}

Image render_view(const Checkpoint& ck, const CameraPose& pose, int width, int height) {
  RenderParams rp;
  rp.n_coarse = ck.n_coarse;
  rp.n_importance = ck.n_importance;
  rp.stochastic = false;  // deterministic inference rendering
  rp.sphere_radius = ck.sphere_radius;
  rp.use_background = ck.use_background;
  Rng rng(0);
  Image img = Image::zeros(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      Ray ray = ray_from_pixel(pose, Eigen::Vector2d(x + 0.5, y + 0.5), 0.0, 0.0);
      if (auto hit = ray_sphere_interval(ray.origin, ray.direction, rp.sphere_radius)) {
        ray.near = hit->first;
        ray.far = hit->second;
      } else {
        const double tm = std::max(-ray.origin.dot(ray.direction), 1e-4);
        ray.near = std::max(tm - rp.sphere_radius, 1e-4);
        ray.far = tm + rp.sphere_radius;
      }
      const RenderOutput out = render_ray(ck.params, ray, rp, rng,
                                          "pixel(" + std::to_string(x) + "," +
                                              std::to_string(y) + ")");
      float* px = img.at(x, y);
      for (int ch = 0; ch < 3; ++ch) px[ch] = static_cast<float>(out.C[ch]);
    }
  return img;
}

std::vector<std::string> png_names(const std::string& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error(dir + " is not a directory");
  std::vector<std::string> names;
  for (const auto& de : fs::directory_iterator(dir))
    if (de.is_regular_file() && de.path().extension() == ".png")
      names.push_back(de.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neural implicit surface reconstruction with decomposed vertex color"};
  app.require_subcommand(1);

  // ---- train ----
  auto* cmd_train = app.add_subcommand("train", "optimize a model on a dataset");
  std::string tr_config, tr_data, tr_out, tr_variant;
  int64_t tr_seed = -1;
  int tr_iters = -1;
  bool tr_resume = false;
  cmd_train->add_option("--config", tr_config, "run config json");
  cmd_train->add_option("--data", tr_data, "dataset directory (overrides config)");
  cmd_train->add_option("--out", tr_out, "output directory (overrides config)");
  cmd_train->add_option("--variant", tr_variant, "color_neus|naive|neus_baseline")
      ->check(CLI::IsMember({"color_neus", "naive", "neus_baseline"}));
  cmd_train->add_option("--seed", tr_seed, "rng seed (overrides config)");
  cmd_train->add_option("--iters", tr_iters, "total iterations (overrides config)");
  cmd_train->add_flag("--resume", tr_resume, "continue from <out>/checkpoint.bin");

  // ---- extract ----
  auto* cmd_extract = app.add_subcommand("extract", "mesh the zero level set with vertex colors");
  std::string ex_ckpt, ex_mode = "global", ex_out;
  int ex_res = 256;
  double ex_bound = 1.0;
  cmd_extract->add_option("--checkpoint", ex_ckpt)->required();
  cmd_extract->add_option("--resolution", ex_res, "grid resolution per axis");
  cmd_extract->add_option("--mode", ex_mode, "global|intermediate|naive")
      ->check(CLI::IsMember({"global", "intermediate", "naive"}));
  cmd_extract->add_option("--out", ex_out, "output .ply path")->required();
  cmd_extract->add_option("--bound", ex_bound, "grid half side length");

  // ---- render ----
  auto* cmd_render = app.add_subcommand("render", "render a view from a checkpoint");
  std::string rd_ckpt, rd_data, rd_pose, rd_out;
  int rd_view = -1;
  cmd_render->add_option("--checkpoint", rd_ckpt)->required();
  cmd_render->add_option("--view", rd_view, "dataset view index (needs --data)");
  cmd_render->add_option("--data", rd_data, "dataset directory for --view");
  cmd_render->add_option("--pose", rd_pose, "pose json file (alternative to --view)");
  cmd_render->add_option("--out", rd_out, "output .png path")->required();

  // ---- eval-cd ----
  auto* cmd_cd = app.add_subcommand("eval-cd", "chamfer distance between two meshes");
  std::string cd_pred, cd_gt;
  int cd_samples = 100000;
  int64_t cd_seed = 0;
  bool cd_vertices = false;
  cmd_cd->add_option("--pred", cd_pred)->required();
  cmd_cd->add_option("--gt", cd_gt)->required();
  cmd_cd->add_option("--samples", cd_samples, "surface samples per mesh");
  cmd_cd->add_option("--seed", cd_seed, "sampling seed");
  cmd_cd->add_flag("--vertices", cd_vertices, "compare vertices instead of surface samples");

  // ---- eval-render ----
  auto* cmd_er = app.add_subcommand("eval-render", "psnr/ssim between two image directories");
  std::string er_pred, er_gt;
  cmd_er->add_option("--pred", er_pred)->required();
  cmd_er->add_option("--gt", er_gt)->required();

  // ---- synth ----
  auto* cmd_synth = app.add_subcommand("synth", "generate a synthetic oracle dataset");
  std::string sy_spec, sy_out;
  cmd_synth->add_option("--spec", sy_spec, "scene spec json (defaults used when omitted)");
  cmd_synth->add_option("--out", sy_out, "output dataset directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exit 0
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    std::fprintf(stderr, "%s", app.help().c_str());
    return 2;
  }

  try {
    if (*cmd_train) {
      RunConfig rc;
      if (!tr_config.empty()) rc = parse_run_config(tr_config);
      if (!tr_data.empty()) rc.data = tr_data;
      if (!tr_out.empty()) rc.out = tr_out;
      if (!tr_variant.empty()) rc.model.variant = variant_from_string(tr_variant);
      if (tr_seed >= 0) rc.train.seed = static_cast<uint64_t>(tr_seed);
      if (tr_iters > 0) rc.train.total_iters = tr_iters;
      if (rc.data.empty()) throw std::runtime_error("train: no dataset (--data or config)");
      if (rc.out.empty()) throw std::runtime_error("train: no output dir (--out or config)");
      const Dataset ds = load_dataset(rc.data);
      const TrainResult res = train(ds, rc.model, rc.dims, rc.render, rc.train, rc.out, tr_resume);
      const LossBreakdown last = res.log.empty() ? LossBreakdown{} : res.log.back();
      std::printf("iterations=%lld checkpoint=%s/checkpoint.bin loss_total=%.6g\n",
                  static_cast<long long>(res.checkpoint.iteration), rc.out.c_str(), last.total);
    } else if (*cmd_extract) {
      const Checkpoint ck = load_checkpoint(ex_ckpt);
      Aabb bounds{Vec3::Constant(-ex_bound), Vec3::Constant(ex_bound)};
      const ColoredMesh mesh =
          extract_colored_mesh(ck, ex_res, color_mode_from_string(ex_mode), bounds);
      write_ply(mesh, ex_out);
      std::printf("vertices=%d triangles=%d out=%s\n", mesh.num_vertices(),
                  mesh.num_triangles(), ex_out.c_str());
    } else if (*cmd_render) {
      const Checkpoint ck = load_checkpoint(rd_ckpt);
      if ((rd_view >= 0) == !rd_pose.empty())
        throw std::runtime_error("render: pass exactly one of --view or --pose");
      Image img;
      if (rd_view >= 0) {
        if (rd_data.empty()) throw std::runtime_error("render: --view needs --data");
        const Dataset ds = load_dataset(rd_data);
        if (rd_view >= ds.num_images())
          throw std::runtime_error("render: view index out of range (dataset has " +
                                   std::to_string(ds.num_images()) + " images)");
        // Prefer the checkpoint's (possibly refined) poses when they cover the dataset.
        const CameraPose pose = ck.poses.num_images() == ds.num_images()
                                    ? ck.poses.pose(rd_view, ds.poses[rd_view].intrinsics)
                                    : ds.poses[rd_view];
        img = render_view(ck, pose, ds.width, ds.height);
      } else {
        const PoseFile pf = load_pose_file(rd_pose);
        img = render_view(ck, pf.pose, pf.width, pf.height);
      }
      write_png(img, rd_out);
      std::printf("out=%s width=%d height=%d\n", rd_out.c_str(), img.width, img.height);
    } else if (*cmd_cd) {
      const ColoredMesh pred = read_ply(cd_pred);
      const ColoredMesh gt = read_ply(cd_gt);
      const ChamferReport rep = chamfer_protocol(pred, gt, cd_samples, cd_vertices,
                                                 static_cast<uint64_t>(cd_seed));
      std::printf("chamfer_cm2=%.6g icp_iterations=%d icp_rmse=%.6g\n", rep.chamfer_cm2,
                  rep.icp_iterations, rep.icp_rmse);
    } else if (*cmd_er) {
      const auto pred_names = png_names(er_pred);
      const auto gt_names = png_names(er_gt);
      if (pred_names.empty()) throw std::runtime_error("eval-render: no .png files in " + er_pred);
      if (pred_names != gt_names)
        throw std::runtime_error("eval-render: image filenames differ between directories");
      double sum_psnr = 0.0, sum_ssim = 0.0;
      for (const std::string& name : pred_names) {
        const Image a = read_png((fs::path(er_pred) / name).string());
        const Image b = read_png((fs::path(er_gt) / name).string());
        sum_psnr += psnr(a, b);
        sum_ssim += ssim(a, b);
      }
      const double n = static_cast<double>(pred_names.size());
      std::printf("psnr_db=%.6g ssim=%.6g images=%zu\n", sum_psnr / n, sum_ssim / n,
                  pred_names.size());
    } else if (*cmd_synth) {
      SceneSpec spec;
      if (!sy_spec.empty()) spec = parse_scene_spec(sy_spec);
      spec.validate();
      emit_dataset(spec, sy_out);
      std::printf("images=%d out=%s\n", spec.camera_count, sy_out.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
