#pragma once

#include <functional>
#include <string>
#include <vector>

#include "colorsurf/fields.hpp"
#include "colorsurf/rng.hpp"

namespace colorsurf {

struct RenderParams {
  int n_coarse = 64;
  int n_importance = 64;
  bool stochastic = true;       // stratified jitter when true, bin midpoints when false
  double sphere_radius = 1.1;   // rays clipped to this dilated unit sphere
  bool use_background = false;  // composite learnable background over 1 - opacity
};

// Logistic density sigma(s, alpha) = alpha * e^{-alpha s} / (1 + e^{-alpha s})^2.
double density(double s, double alpha);

struct RaySamples {
  Eigen::VectorXd z;       // ascending, within [near, far]
  Eigen::VectorXd deltas;  // z_{i+1} - z_i, trailing far - z_last (floored at 1e-8)
  MatX3 points;            // origin + z_i * direction
};

// Stratified-uniform coarse samples plus optional importance samples drawn from
// the coarse weight CDF (requires params for the coarse density pass).
RaySamples sample_ray(const Ray& ray, int n_coarse, int n_importance, Rng& rng,
                      const ParamStore* params, bool stochastic);

// Analytic field hooks: plug any SDF and per-point color function into the
// render path without a trained ParamStore (oracle tests, debugging).
struct FieldHooks {
  std::function<double(const Vec3&)> sdf;
  std::function<Vec3(const Vec3&, const Vec3&)> color;  // (point, view direction)
  double alpha = 1.0;
};

RaySamples sample_ray(const Ray& ray, int n_coarse, int n_importance, Rng& rng,
                      const FieldHooks* hooks, bool stochastic);

// Inverse-CDF draws from a piecewise-constant density: bin_edges (B+1), non-
// negative bin_weights (B). Stratified over [0,1) when stochastic.
Eigen::VectorXd sample_cdf(const Eigen::VectorXd& bin_edges,
                           const Eigen::VectorXd& bin_weights, int n, Rng& rng,
                           bool stochastic);

// Discrete quadrature weights: a_i = 1 - exp(-sigma_i delta_i),
// w_i = a_i * prod_{j<i} (1 - a_j). Returns weights and their sum (opacity).
std::pair<Eigen::VectorXd, double> render_weights(const Eigen::VectorXd& sigmas,
                                                  const Eigen::VectorXd& deltas);

// Fuses global color with the relight residual. Components with residual
// exactly 0 return the global color bitwise (both modes).
Vec3 compose_color(const Vec3& c_g, const Vec3& c_r, Composition mode);

struct RenderOutput {
  Vec3 C = Vec3::Zero();
  double opacity = 0.0;
  double depth = 0.0;       // weight-expected z (0 when opacity ~ 0)
  Eigen::VectorXd weights;  // per sample
  MatX3 c_r;                // per-sample relight residual (zeros unless color_neus)
  MatX3 grads;              // per-sample SDF spatial gradient
  RaySamples samples;
};

// Full per-ray render on the plain evaluation path (inference).
// `tag` labels the ray in non-finite error messages.
RenderOutput render_ray(const ParamStore& ps, const Ray& ray, const RenderParams& rp,
                        Rng& rng, const std::string& tag = "");

// Same render path over analytic field hooks (c_r stays zero; grads by
// central differences on hooks.sdf).
RenderOutput render_ray(const FieldHooks& hooks, const Ray& ray, const RenderParams& rp,
                        Rng& rng, const std::string& tag = "");

// ---- batched tape render (training) ------------------------------------------

struct RayBatchGroup {
  int image = -1;
  Mat3 intrinsics = Mat3::Identity();
  std::vector<Eigen::Vector2d> pixels;
  MatX3 gt;               // per-ray ground-truth color
  Eigen::VectorXd mask;   // per-ray 0/1; size 0 when the dataset has no masks
};

struct BatchRender {
  ad::Var C;        // N x 3 composed ray colors
  ad::Var opacity;  // N x 1
  ad::Var c_r;      // (N*S) x 3; invalid unless variant is color_neus
  ad::Var g;        // (N*S) x 3 SDF gradients
  int n_rays = 0;
  int n_samples = 0;
  Tensor gt;    // N x 3
  Tensor mask;  // N x 1; empty when no masks
};

// Renders all groups on one tape. Pose leaves from pose_tp feed ray origins and
// directions when non-null (pose refinement); otherwise rays are constants.
// Sample positions z are constants (stop-gradient through the sampler).
BatchRender render_batch_t(ad::Tape& t, const ParamStore& ps, const TapeParams& tp,
                           const PoseStore& poses, const TapeParams* pose_tp,
                           const std::vector<RayBatchGroup>& groups,
                           const RenderParams& rp, Rng& rng);

}  // namespace colorsurf
