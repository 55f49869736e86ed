#include "colorsurf/synth.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "colorsurf/dataset.hpp"
#include "colorsurf/mesh.hpp"
#include "colorsurf/ply.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace colorsurf {

void SceneSpec::validate() const {
  switch (shape) {
    case ShapeType::sphere:
      if (radius <= 0 || radius > 1) throw std::invalid_argument("sphere radius must be in (0,1]");
      break;
    case ShapeType::box:
      if ((box_half.array() <= 0).any() || box_half.norm() > 1)
        throw std::invalid_argument("box half extents must be positive and inscribed in the unit sphere");
      break;
    case ShapeType::torus:
      if (torus_major <= 0 || torus_minor <= 0 || torus_major + torus_minor > 1)
        throw std::invalid_argument("torus radii must be positive with major+minor <= 1");
      break;
  }
  if (orbit_radius <= 1.0)
    throw std::invalid_argument("camera orbit must lie outside the unit sphere");
  if (lambert_strength < 0 || lambert_strength > 1)
    throw std::invalid_argument("lambert_strength must be in [0,1]");
  if (specular_strength < 0) throw std::invalid_argument("specular_strength must be >= 0");
  if (specular_exponent <= 0) throw std::invalid_argument("specular_exponent must be positive");
  if (light_direction.norm() < 1e-9) throw std::invalid_argument("light_direction must be non-zero");
  if (camera_count < 1) throw std::invalid_argument("camera_count must be >= 1");
  if (image_size < 8) throw std::invalid_argument("image_size must be >= 8");
  if (fov_deg <= 0 || fov_deg >= 180) throw std::invalid_argument("fov_deg must be in (0,180)");
  if (stripes < 1) throw std::invalid_argument("stripes must be >= 1");
  if (noise_sigma < 0) throw std::invalid_argument("noise_sigma must be >= 0");
}

double analytic_sdf(const SceneSpec& spec, const Vec3& p) {
  switch (spec.shape) {
    case ShapeType::sphere:
      return p.norm() - spec.radius;
    case ShapeType::box: {
      const Vec3 q = p.cwiseAbs() - spec.box_half;
      const double outside = q.cwiseMax(0.0).norm();
      const double inside = std::min(q.maxCoeff(), 0.0);
      return outside + inside;
    }
    case ShapeType::torus: {
      const double ring = std::hypot(p.x(), p.y()) - spec.torus_major;
      return std::hypot(ring, p.z()) - spec.torus_minor;
    }
  }
  throw std::logic_error("unreachable shape");
}

Vec3 analytic_normal(const SceneSpec& spec, const Vec3& p) {
  const double h = 1e-5;
  Vec3 g;
  for (int k = 0; k < 3; ++k) {
    Vec3 e = Vec3::Zero();
    e[k] = h;
    g[k] = (analytic_sdf(spec, p + e) - analytic_sdf(spec, p - e)) / (2 * h);
  }
  const double n = g.norm();
  return n < 1e-12 ? Vec3(0, 0, 1) : Vec3(g / n);
}

Vec3 analytic_albedo(const SceneSpec& spec, const Vec3& p) {
  switch (spec.albedo) {
    case AlbedoType::constant:
      return spec.albedo_color;
    case AlbedoType::octant_checker:
      return Vec3(p.x() > 0 ? 0.85 : 0.15, p.y() > 0 ? 0.85 : 0.15, p.z() > 0 ? 0.85 : 0.15);
    case AlbedoType::latitude_stripes: {
      const double r = std::max(p.norm(), 1e-12);
      const double lat = std::asin(std::clamp(p.z() / r, -1.0, 1.0));  // [-pi/2, pi/2]
      int idx = static_cast<int>(std::floor((lat / M_PI + 0.5) * spec.stripes));
      idx = std::clamp(idx, 0, spec.stripes - 1);
      return idx % 2 == 0 ? spec.stripe_a : spec.stripe_b;
    }
  }
  throw std::logic_error("unreachable albedo");
}

Vec3 shade(const SceneSpec& spec, const Vec3& x, const Vec3& n, const Vec3& view) {
  const Vec3 l = spec.light_direction.normalized();
  const double ambient = 1.0 - spec.lambert_strength;
  const double diff = std::max(0.0, n.dot(l));
  const Vec3 refl = 2.0 * n.dot(l) * n - l;
  const double spec_term =
      spec.specular_strength * std::pow(std::max(0.0, refl.dot(view)), spec.specular_exponent);
  Vec3 c = analytic_albedo(spec, x) * (ambient + spec.lambert_strength * diff) +
           Vec3::Constant(spec_term);
  return c.cwiseMax(0.0).cwiseMin(1.0);
}

std::vector<CameraPose> orbit_cameras(const SceneSpec& spec) {
  const double elevations[3] = {-20.0, 10.0, 35.0};
  std::vector<CameraPose> cams;
  const double f = (spec.image_size / 2.0) / std::tan(spec.fov_deg * M_PI / 360.0);
  for (int i = 0; i < spec.camera_count; ++i) {
    const double az = 2.0 * M_PI * i / spec.camera_count;
    const double el = elevations[i % 3] * M_PI / 180.0;
    const Vec3 pos = spec.orbit_radius * Vec3(std::cos(el) * std::cos(az),
                                              std::cos(el) * std::sin(az), std::sin(el));
    const Vec3 fwd = (-pos).normalized();
    const Vec3 right = fwd.cross(Vec3(0, 0, 1)).normalized();
    const Vec3 down = fwd.cross(right);
    Mat3 R;  // camera-to-world, columns (right, down, forward): x right, y down, z forward
    R.col(0) = right;
    R.col(1) = down;
    R.col(2) = fwd;
    CameraPose cam;
    cam.rot6d = matrix_to_rot6d(R);
    cam.translation = pos;
    cam.intrinsics << f, 0, spec.image_size / 2.0, 0, f, spec.image_size / 2.0, 0, 0, 1;
    cams.push_back(cam);
  }
  return cams;
}

std::pair<Image, GrayImage> render_synthetic(const SceneSpec& spec, const CameraPose& pose,
                                             Rng* noise_rng) {
  const int size = spec.image_size;
  Image img = Image::zeros(size, size);
  GrayImage mask = GrayImage::zeros(size, size);
  const double t_max = spec.orbit_radius + 1.5;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const Ray ray = ray_from_pixel(pose, Eigen::Vector2d(x + 0.5, y + 0.5), 0.0, t_max);
      double t = 0.0;
      bool hit = false;
      for (int step = 0; step < 512 && t < t_max; ++step) {
        const double s = analytic_sdf(spec, ray.origin + t * ray.direction);
        if (s < 1e-7) {
          hit = true;
          break;
        }
        t += s;
      }
      if (!hit) continue;
      const Vec3 p = ray.origin + t * ray.direction;
      Vec3 c = shade(spec, p, analytic_normal(spec, p), -ray.direction);
      if (noise_rng && spec.noise_sigma > 0)
        for (int ch = 0; ch < 3; ++ch)
          c[ch] = std::clamp(c[ch] + spec.noise_sigma * noise_rng->normal(), 0.0, 1.0);
      float* px = img.at(x, y);
      for (int ch = 0; ch < 3; ++ch) px[ch] = static_cast<float>(c[ch]);
      mask.at(x, y) = 255;
    }
  return {std::move(img), std::move(mask)};
}

void emit_dataset(const SceneSpec& spec, const std::string& out_dir) {
  spec.validate();
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "masks");
  const auto cams = orbit_cameras(spec);
  std::vector<CameraFrame> frames;
  for (size_t i = 0; i < cams.size(); ++i) {
    Rng noise(spec.seed, 0x9e3779b9ull + i);
    auto [img, mask] = render_synthetic(spec, cams[i], spec.noise_sigma > 0 ? &noise : nullptr);
    char name[16];
    std::snprintf(name, sizeof name, "%04zu.png", i);
    write_png(img, (fs::path(out_dir) / "images" / name).string());
    write_png_gray(mask, (fs::path(out_dir) / "masks" / name).string());

    CameraFrame frame;
    frame.image = name;
    frame.intrinsics = cams[i].intrinsics;
    const Mat3 R = rot6d_to_matrix(cams[i].rot6d);
    frame.world_to_camera.setIdentity();
    frame.world_to_camera.topLeftCorner<3, 3>() = R.transpose();
    frame.world_to_camera.topRightCorner<3, 1>() = -R.transpose() * cams[i].translation;
    frames.push_back(frame);
  }
  write_cameras_json((fs::path(out_dir) / "cameras.json").string(), frames,
                     Eigen::Matrix4d::Identity());

  SdfGrid grid = grid_from_function([&](const Vec3& p) { return analytic_sdf(spec, p); }, 128);
  ColoredMesh mesh = marching_cubes(grid);
  for (int v = 0; v < mesh.num_vertices(); ++v)
    mesh.colors.row(v) = analytic_albedo(spec, mesh.vertices.row(v).transpose()).transpose();
  write_ply(mesh, (fs::path(out_dir) / "gt_mesh.ply").string());
  write_scene_spec(spec, (fs::path(out_dir) / "scene_spec.json").string());
}

namespace {

[[noreturn]] void fail(const std::string& what) {
  throw std::runtime_error("scene spec: " + what);
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& ctx) {
  for (const auto& kv : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (kv.key() == a) ok = true;
    if (!ok) fail("unknown key \"" + kv.key() + "\" in " + ctx);
  }
}

Vec3 vec3_of(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() ||
      !j[2].is_number())
    fail(what + " must be an array of 3 numbers");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

SceneSpec parse_scene_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(path + " is not valid json: " + std::string(e.what()));
  }
  if (!j.is_object()) fail(path + " must hold a json object");
  check_keys(j, {"shape", "albedo", "lighting", "cameras", "noise_sigma", "seed"}, "scene spec");

  SceneSpec spec;
  if (j.contains("shape")) {
    const json& s = j["shape"];
    check_keys(s, {"type", "radius", "half_extent", "major", "minor"}, "shape");
    const std::string type = s.value("type", "sphere");
    if (type == "sphere") {
      spec.shape = ShapeType::sphere;
      spec.radius = s.value("radius", spec.radius);
    } else if (type == "box") {
      spec.shape = ShapeType::box;
      if (s.contains("half_extent")) {
        if (s["half_extent"].is_number())
          spec.box_half = Vec3::Constant(s["half_extent"].get<double>());
        else
          spec.box_half = vec3_of(s["half_extent"], "shape.half_extent");
      }
    } else if (type == "torus") {
      spec.shape = ShapeType::torus;
      spec.torus_major = s.value("major", spec.torus_major);
      spec.torus_minor = s.value("minor", spec.torus_minor);
    } else {
      fail("unknown shape type \"" + type + "\"");
    }
  }
  if (j.contains("albedo")) {
    const json& a = j["albedo"];
    check_keys(a, {"type", "color", "stripes", "color_a", "color_b"}, "albedo");
    const std::string type = a.value("type", "octant-checker");
    if (type == "constant") {
      spec.albedo = AlbedoType::constant;
      if (a.contains("color")) spec.albedo_color = vec3_of(a["color"], "albedo.color");
    } else if (type == "octant-checker") {
      spec.albedo = AlbedoType::octant_checker;
    } else if (type == "latitude-stripes") {
      spec.albedo = AlbedoType::latitude_stripes;
      spec.stripes = a.value("stripes", spec.stripes);
      if (a.contains("color_a")) spec.stripe_a = vec3_of(a["color_a"], "albedo.color_a");
      if (a.contains("color_b")) spec.stripe_b = vec3_of(a["color_b"], "albedo.color_b");
    } else {
      fail("unknown albedo type \"" + type + "\"");
    }
  }
  if (j.contains("lighting")) {
    const json& l = j["lighting"];
    check_keys(l, {"lambert_strength", "specular_strength", "specular_exponent",
                   "light_direction"},
               "lighting");
    spec.lambert_strength = l.value("lambert_strength", spec.lambert_strength);
    spec.specular_strength = l.value("specular_strength", spec.specular_strength);
    spec.specular_exponent = l.value("specular_exponent", spec.specular_exponent);
    if (l.contains("light_direction"))
      spec.light_direction = vec3_of(l["light_direction"], "lighting.light_direction");
  }
  if (j.contains("cameras")) {
    const json& c = j["cameras"];
    check_keys(c, {"count", "orbit_radius", "image_size", "fov_deg"}, "cameras");
    spec.camera_count = c.value("count", spec.camera_count);
    spec.orbit_radius = c.value("orbit_radius", spec.orbit_radius);
    spec.image_size = c.value("image_size", spec.image_size);
    spec.fov_deg = c.value("fov_deg", spec.fov_deg);
  }
  spec.noise_sigma = j.value("noise_sigma", spec.noise_sigma);
  spec.seed = j.value("seed", spec.seed);
  spec.validate();
  return spec;
}

void write_scene_spec(const SceneSpec& spec, const std::string& path) {
  json j;
  switch (spec.shape) {
    case ShapeType::sphere:
      j["shape"] = {{"type", "sphere"}, {"radius", spec.radius}};
      break;
    case ShapeType::box:
      j["shape"] = {{"type", "box"}, {"half_extent", vec3_json(spec.box_half)}};
      break;
    case ShapeType::torus:
      j["shape"] = {{"type", "torus"}, {"major", spec.torus_major}, {"minor", spec.torus_minor}};
      break;
  }
  switch (spec.albedo) {
    case AlbedoType::constant:
      j["albedo"] = {{"type", "constant"}, {"color", vec3_json(spec.albedo_color)}};
      break;
    case AlbedoType::octant_checker:
      j["albedo"] = {{"type", "octant-checker"}};
      break;
    case AlbedoType::latitude_stripes:
      j["albedo"] = {{"type", "latitude-stripes"},
                     {"stripes", spec.stripes},
                     {"color_a", vec3_json(spec.stripe_a)},
                     {"color_b", vec3_json(spec.stripe_b)}};
      break;
  }
  j["lighting"] = {{"lambert_strength", spec.lambert_strength},
                   {"specular_strength", spec.specular_strength},
                   {"specular_exponent", spec.specular_exponent},
                   {"light_direction", vec3_json(spec.light_direction)}};
  j["cameras"] = {{"count", spec.camera_count},
                  {"orbit_radius", spec.orbit_radius},
                  {"image_size", spec.image_size},
                  {"fov_deg", spec.fov_deg}};
  j["noise_sigma"] = spec.noise_sigma;
  j["seed"] = spec.seed;

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) fail("cannot write " + path);
    out << j.dump(2) << "\n";
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) fail("cannot move " + path + " into place");
}

}  // namespace colorsurf
