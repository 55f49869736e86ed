#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include "colorsurf/dataset.hpp"
#include "colorsurf/ply.hpp"
#include "colorsurf/rng.hpp"
#include "colorsurf/runconfig.hpp"
#include "colorsurf/synth.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace colorsurf;
using colorsurf::testutil::TempDir;

namespace {

ColoredMesh tri_mesh() {
  ColoredMesh m;
  m.vertices.resize(4, 3);
  m.vertices << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0.25, 0.25, 0.5;
  m.triangles.resize(2, 3);
  m.triangles << 0, 1, 2, 0, 1, 3;
  m.colors.resize(4, 3);
  m.colors << 0.5, 0.0, 1.0, 0.25, 0.75, 0.1, 1.0, 1.0, 0.0, 0.2, 0.4, 0.6;
  return m;
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  f << body;
}

Mat3 toy_intrinsics() {
  Mat3 K;
  K << 60.0, 0.0, 32.0, 0.0, 60.0, 24.0, 0.0, 0.0, 1.0;
  return K;
}

// camera-to-world with a rotation about z and an offset
Eigen::Matrix4d toy_c2w(int i) {
  double a = 0.3 * i;
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m(0, 0) = std::cos(a);
  m(0, 1) = -std::sin(a);
  m(1, 0) = std::sin(a);
  m(1, 1) = std::cos(a);
  m(0, 3) = 0.2 * i;
  m(1, 3) = -0.1 * i;
  m(2, 3) = 2.0 + 0.05 * i;
  return m;
}

void emit_toy_dataset(const std::string& dir, int n, bool with_masks, int w = 8, int h = 6) {
  namespace fs = std::filesystem;
  fs::create_directories(dir + "/images");
  if (with_masks) fs::create_directories(dir + "/masks");
  std::vector<CameraFrame> frames;
  for (int i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "view_%02d.png", i);
    Image img = Image::zeros(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) img.at(x, y)[0] = static_cast<float>((x + y + i) % 3) / 3.0f;
    write_png(img, dir + "/images/" + name);
    if (with_masks) {
      GrayImage mask = GrayImage::zeros(w, h);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) mask.at(x, y) = (x >= w / 2) ? 255 : 0;
      write_png_gray(mask, dir + "/masks/" + name);
    }
    CameraFrame fr;
    fr.image = name;
    fr.intrinsics = toy_intrinsics();
    fr.world_to_camera = toy_c2w(i).inverse();
    frames.push_back(fr);
  }
  write_cameras_json(dir + "/cameras.json", frames, Eigen::Matrix4d::Identity());
}

}  // namespace

TEST_CASE("write_ply/read_ply: binary round trip with quantized colors") {
  TempDir tmp("ply_rt");
  std::string path = tmp.sub("mesh.ply");
  ColoredMesh m = tri_mesh();
  write_ply(m, path);
  ColoredMesh r = read_ply(path);
  REQUIRE_EQ(r.num_vertices(), 4);
  REQUIRE_EQ(r.num_triangles(), 2);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK_EQ(r.vertices(i, j), static_cast<double>(static_cast<float>(m.vertices(i, j))));
  for (int f = 0; f < 2; ++f)
    for (int k = 0; k < 3; ++k) CHECK_EQ(r.triangles(f, k), m.triangles(f, k));
  // colors come back as byte/255 with round-half-up bytes: 0.5 -> 128
  CHECK_EQ(r.colors(0, 0), 128.0 / 255.0);
  CHECK_EQ(r.colors(0, 1), 0.0);
  CHECK_EQ(r.colors(0, 2), 1.0);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK_EQ(r.colors(i, j), to_byte(m.colors(i, j)) / 255.0);
}

TEST_CASE("write_ply: empty mesh produces a valid zero-element file") {
  TempDir tmp("ply_empty");
  std::string path = tmp.sub("empty.ply");
  write_ply(ColoredMesh{}, path);
  ColoredMesh r = read_ply(path);
  CHECK_EQ(r.num_vertices(), 0);
  CHECK_EQ(r.num_triangles(), 0);
}

TEST_CASE("read_ply: tolerates ascii files and unknown properties") {
  TempDir tmp("ply_ascii");
  std::string path = tmp.sub("ascii.ply");
  write_text(path,
             "ply\n"
             "format ascii 1.0\n"
             "comment hand-written fixture\n"
             "element vertex 3\n"
             "property float x\n"
             "property float y\n"
             "property float z\n"
             "property float nx\n"
             "property uchar red\n"
             "property uchar green\n"
             "property uchar blue\n"
             "element face 1\n"
             "property list uchar int vertex_indices\n"
             "end_header\n"
             "0 0 0 9 255 0 0\n"
             "1 0 0 9 0 255 0\n"
             "0 1 0 9 0 0 255\n"
             "3 0 1 2\n");
  ColoredMesh r = read_ply(path);
  REQUIRE_EQ(r.num_vertices(), 3);
  REQUIRE_EQ(r.num_triangles(), 1);
  CHECK_EQ(r.vertices(1, 0), 1.0);
  CHECK_EQ(r.colors(0, 0), 1.0);  // 255 -> 1.0
  CHECK_EQ(r.colors(1, 1), 1.0);
  CHECK_EQ(r.colors(2, 2), 1.0);
  CHECK_EQ(r.triangles(0, 2), 2);
}

TEST_CASE("read_ply: rejects out-of-range face indices") {
  TempDir tmp("ply_bad");
  std::string path = tmp.sub("bad.ply");
  write_text(path,
             "ply\n"
             "format ascii 1.0\n"
             "element vertex 3\n"
             "property float x\n"
             "property float y\n"
             "property float z\n"
             "element face 1\n"
             "property list uchar int vertex_indices\n"
             "end_header\n"
             "0 0 0\n"
             "1 0 0\n"
             "0 1 0\n"
             "3 0 1 5\n");
  CHECK_THROWS_AS(read_ply(path), std::runtime_error);
}

TEST_CASE("dataset: cameras.json round trip preserves poses") {
  TempDir tmp("ds_rt");
  emit_toy_dataset(tmp.str(), 4, /*with_masks=*/true);
  Dataset ds = load_dataset(tmp.str());
  REQUIRE_EQ(ds.num_images(), 4);
  CHECK(ds.has_masks);
  CHECK_EQ(ds.width, 8);
  CHECK_EQ(ds.height, 6);
  for (int i = 0; i < 4; ++i) {
    Eigen::Matrix4d expect = toy_c2w(i);
    Mat3 R = rot6d_to_matrix(ds.poses[i].rot6d);
    CHECK_LT((R - expect.block<3, 3>(0, 0)).cwiseAbs().maxCoeff(), 1e-9);
    CHECK_LT((ds.poses[i].translation - Vec3(expect.block<3, 1>(0, 3))).norm(), 1e-9);
    CHECK_LT((ds.poses[i].intrinsics - toy_intrinsics()).cwiseAbs().maxCoeff(), 1e-9);
  }
  // deterministic indexing: names sorted
  for (int i = 1; i < 4; ++i) CHECK_LT(ds.names[i - 1], ds.names[i]);

  Dataset ds2 = load_dataset(tmp.str());
  for (int i = 0; i < 4; ++i) CHECK_EQ(ds.names[i], ds2.names[i]);
}

TEST_CASE("dataset: masks optional, size mismatches rejected by name") {
  TempDir tmp("ds_nomask");
  emit_toy_dataset(tmp.str(), 3, /*with_masks=*/false);
  Dataset ds = load_dataset(tmp.str());
  CHECK_FALSE(ds.has_masks);
  CHECK_EQ(ds.masks.size(), 0u);

  TempDir tmp2("ds_badmask");
  emit_toy_dataset(tmp2.str(), 2, /*with_masks=*/true);
  // overwrite one mask with wrong dimensions
  write_png_gray(GrayImage::zeros(3, 3), tmp2.sub("masks/view_01.png"));
  bool threw = false;
  try {
    load_dataset(tmp2.str());
  } catch (const std::exception& e) {
    threw = true;
    CHECK_NE(std::string(e.what()).find("view_01"), std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("dataset: image without a camera entry rejected by name") {
  TempDir tmp("ds_missing");
  emit_toy_dataset(tmp.str(), 2, false);
  write_png(Image::zeros(8, 6), tmp.sub("images/zz_extra.png"));
  bool threw = false;
  try {
    load_dataset(tmp.str());
  } catch (const std::exception& e) {
    threw = true;
    CHECK_NE(std::string(e.what()).find("zz_extra"), std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("dataset: non-uniform scale_mat rejected") {
  TempDir tmp("ds_scale");
  emit_toy_dataset(tmp.str(), 2, false);
  std::vector<CameraFrame> frames;
  for (int i = 0; i < 2; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "view_%02d.png", i);
    CameraFrame fr;
    fr.image = name;
    fr.intrinsics = toy_intrinsics();
    fr.world_to_camera = toy_c2w(i).inverse();
    frames.push_back(fr);
  }
  Eigen::Matrix4d bad = Eigen::Matrix4d::Identity();
  bad(0, 0) = 2.0;  // anisotropic
  write_cameras_json(tmp.sub("cameras.json"), frames, bad);
  CHECK_THROWS(load_dataset(tmp.str()));
}

TEST_CASE("dataset: uniform scale_mat maps poses into normalized coordinates") {
  TempDir tmp("ds_scaled");
  namespace fs = std::filesystem;
  fs::create_directories(tmp.sub("images"));
  const int n = 2;
  std::vector<CameraFrame> frames;
  Eigen::Matrix4d S = Eigen::Matrix4d::Identity();
  S.block<3, 3>(0, 0) *= 2.5;  // normalized -> world: scale 2.5, shift (1,2,3)
  S(0, 3) = 1.0;
  S(1, 3) = 2.0;
  S(2, 3) = 3.0;
  for (int i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "view_%02d.png", i);
    write_png(Image::zeros(8, 6), tmp.sub(std::string("images/") + name));
    // rigid world pose: same orientation, camera center pushed through scale_mat
    Eigen::Matrix4d c2w_world = toy_c2w(i);
    Vec3 center = c2w_world.block<3, 1>(0, 3);
    c2w_world.block<3, 1>(0, 3) = 2.5 * center + Vec3(1, 2, 3);
    CameraFrame fr;
    fr.image = name;
    fr.intrinsics = toy_intrinsics();
    fr.world_to_camera = c2w_world.inverse();
    frames.push_back(fr);
  }
  write_cameras_json(tmp.sub("cameras.json"), frames, S);
  Dataset ds = load_dataset(tmp.str());
  for (int i = 0; i < n; ++i) {
    Eigen::Matrix4d expect = toy_c2w(i);  // back in normalized coordinates
    Mat3 R = rot6d_to_matrix(ds.poses[i].rot6d);
    CHECK_LT((R - expect.block<3, 3>(0, 0)).cwiseAbs().maxCoeff(), 1e-9);
    CHECK_LT((ds.poses[i].translation - Vec3(expect.block<3, 1>(0, 3))).norm(), 1e-9);
  }
}

TEST_CASE("run config: file round trip and strict key validation") {
  TempDir tmp("runcfg");
  RunConfig rc;
  rc.data = "/some/data";
  rc.out = "/some/out";
  rc.model.variant = Variant::neus_baseline;
  rc.model.composition = Composition::clamp;
  rc.model.relight_uses_gradient = false;
  rc.dims.hidden = 32;
  rc.dims.pos_frequencies = 5;
  rc.train.total_iters = 1234;
  rc.train.lr_max = 3e-4;
  rc.train.weights.lambda_r = 0.25;
  rc.train.optimize_poses = true;
  rc.train.seed = 42;
  rc.render.n_coarse = 48;
  rc.render.use_background = true;

  std::string path = tmp.sub("run.json");
  write_run_config(rc, path);
  RunConfig r = parse_run_config(path);
  CHECK_EQ(r.data, rc.data);
  CHECK_EQ(r.out, rc.out);
  CHECK_EQ(static_cast<int>(r.model.variant), static_cast<int>(rc.model.variant));
  CHECK_EQ(static_cast<int>(r.model.composition), static_cast<int>(rc.model.composition));
  CHECK_EQ(r.model.relight_uses_gradient, rc.model.relight_uses_gradient);
  CHECK_EQ(r.dims.hidden, 32);
  CHECK_EQ(r.dims.pos_frequencies, 5);
  CHECK_EQ(r.train.total_iters, 1234);
  CHECK_EQ(r.train.lr_max, 3e-4);
  CHECK_EQ(r.train.weights.lambda_r, 0.25);
  CHECK_EQ(r.train.optimize_poses, true);
  CHECK_EQ(r.train.seed, 42u);
  CHECK_EQ(r.render.n_coarse, 48);
  CHECK_EQ(r.render.use_background, true);

  // defaults fill unspecified fields
  write_text(tmp.sub("min.json"), "{\"data\": \"d\", \"out\": \"o\"}\n");
  RunConfig m = parse_run_config(tmp.sub("min.json"));
  CHECK_EQ(m.train.total_iters, TrainConfig{}.total_iters);
  CHECK_EQ(m.dims.hidden, NetDims{}.hidden);

  // unknown keys rejected by name
  write_text(tmp.sub("bad.json"), "{\"data\": \"d\", \"bananas\": 1}\n");
  bool threw = false;
  try {
    parse_run_config(tmp.sub("bad.json"));
  } catch (const std::exception& e) {
    threw = true;
    CHECK_NE(std::string(e.what()).find("bananas"), std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("scene spec: file round trip and strict key validation") {
  TempDir tmp("scenespec");
  SceneSpec sp;
  sp.shape = ShapeType::torus;
  sp.torus_major = 0.4;
  sp.torus_minor = 0.1;
  sp.albedo = AlbedoType::latitude_stripes;
  sp.stripes = 8;
  sp.specular_strength = 0.25;
  sp.camera_count = 6;
  sp.image_size = 32;
  sp.noise_sigma = 0.01;
  sp.seed = 9;

  std::string path = tmp.sub("scene.json");
  write_scene_spec(sp, path);
  SceneSpec r = parse_scene_spec(path);
  CHECK_EQ(static_cast<int>(r.shape), static_cast<int>(sp.shape));
  CHECK_EQ(r.torus_major, sp.torus_major);
  CHECK_EQ(r.torus_minor, sp.torus_minor);
  CHECK_EQ(static_cast<int>(r.albedo), static_cast<int>(sp.albedo));
  CHECK_EQ(r.stripes, sp.stripes);
  CHECK_EQ(r.specular_strength, sp.specular_strength);
  CHECK_EQ(r.camera_count, sp.camera_count);
  CHECK_EQ(r.image_size, sp.image_size);
  CHECK_EQ(r.noise_sigma, sp.noise_sigma);
  CHECK_EQ(r.seed, sp.seed);

  write_text(tmp.sub("bad.json"), "{\"shape\": \"sphere\", \"wobble\": 3}\n");
  bool threw = false;
  try {
    parse_scene_spec(tmp.sub("bad.json"));
  } catch (const std::exception& e) {
    threw = true;
    CHECK_NE(std::string(e.what()).find("wobble"), std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("png: write/read round trip at 8-bit precision") {
  TempDir tmp("png_rt");
  Image img = Image::zeros(5, 4);
  Rng rng(6);
  for (float& p : img.pixels) p = static_cast<float>(rng.uniform());
  std::string path = tmp.sub("img.png");
  write_png(img, path);
  Image r = read_png(path);
  REQUIRE_EQ(r.width, 5);
  REQUIRE_EQ(r.height, 4);
  for (size_t i = 0; i < img.pixels.size(); ++i)
    CHECK_EQ(r.pixels[i], static_cast<float>(to_byte(img.pixels[i]) / 255.0));

  GrayImage g = GrayImage::zeros(5, 4);
  for (auto& p : g.pixels) p = static_cast<uint8_t>(rng.index(256));
  write_png_gray(g, tmp.sub("mask.png"));
  GrayImage rg = read_png_gray(tmp.sub("mask.png"));
  REQUIRE_EQ(rg.width, 5);
  for (size_t i = 0; i < g.pixels.size(); ++i) CHECK_EQ(rg.pixels[i], g.pixels[i]);
}
