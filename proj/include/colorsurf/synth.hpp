#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "colorsurf/geometry.hpp"
#include "colorsurf/image.hpp"
#include "colorsurf/rng.hpp"

namespace colorsurf {

enum class ShapeType { sphere, box, torus };
enum class AlbedoType { constant, octant_checker, latitude_stripes };

// Analytic test scene: an exact-SDF shape with procedural view-independent
// albedo, lit by ambient + Lambert + a Phong specular term. The specular term
// is the controlled view-dependent contamination a color decomposition must
// strip; the albedo function is the ground truth it must recover.
struct SceneSpec {
  ShapeType shape = ShapeType::sphere;
  double radius = 0.5;                     // sphere
  Vec3 box_half = Vec3(0.35, 0.35, 0.35);  // box half extents
  double torus_major = 0.35, torus_minor = 0.12;

  AlbedoType albedo = AlbedoType::octant_checker;
  Vec3 albedo_color = Vec3(0.8, 0.1, 0.1);  // constant albedo
  int stripes = 6;                          // latitude stripe count
  Vec3 stripe_a = Vec3(0.85, 0.25, 0.15), stripe_b = Vec3(0.1, 0.3, 0.8);

  // ambient is implicitly 1 - lambert_strength so a fully lit point shows the
  // raw albedo and every point stays within lambert_strength of it.
  double lambert_strength = 0.1;
  double specular_strength = 0.5;
  double specular_exponent = 8.0;
  Vec3 light_direction = Vec3(0.5, 0.3, 0.8).normalized();

  int camera_count = 20;
  double orbit_radius = 2.5;
  int image_size = 64;
  double fov_deg = 45.0;

  double noise_sigma = 0.0;  // per-channel Gaussian pixel noise
  uint64_t seed = 0;

  // shape inscribed in the unit sphere, orbit outside it, sane parameters
  void validate() const;
};

// Exact signed distance, negative inside.
double analytic_sdf(const SceneSpec& spec, const Vec3& p);
// Outward unit normal (central differences on the exact SDF).
Vec3 analytic_normal(const SceneSpec& spec, const Vec3& p);
Vec3 analytic_albedo(const SceneSpec& spec, const Vec3& p);

// albedo * (ambient + lambert * max(0, n.l)) + specular * max(0, r.v)^exp,
// clamped to [0,1]; view is the unit direction from the point to the camera.
Vec3 shade(const SceneSpec& spec, const Vec3& x, const Vec3& n, const Vec3& view);

// camera_count poses on an orbit of radius orbit_radius looking at the origin
// (azimuth uniform, elevation cycling a small set for vertical coverage).
std::vector<CameraPose> orbit_cameras(const SceneSpec& spec);

// Sphere-traced primary rays; mask = hit indicator. noise_rng adds the spec's
// pixel noise when non-null.
std::pair<Image, GrayImage> render_synthetic(const SceneSpec& spec, const CameraPose& pose,
                                             Rng* noise_rng = nullptr);

// Writes images/, masks/, cameras.json (identity scale_mat), gt_mesh.ply
// (marching cubes on the analytic SDF, vertices colored by albedo), and
// scene_spec.json provenance.
void emit_dataset(const SceneSpec& spec, const std::string& out_dir);

SceneSpec parse_scene_spec(const std::string& path);  // strict: unknown keys rejected
void write_scene_spec(const SceneSpec& spec, const std::string& path);

}  // namespace colorsurf
