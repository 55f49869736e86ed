#include "colorsurf/render.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "colorsurf/tape_geometry.hpp"

namespace colorsurf {

double density(double s, double alpha) {
  double q = sigmoid(alpha * s);
  return alpha * q * (1.0 - q);
}

Eigen::VectorXd sample_cdf(const Eigen::VectorXd& bin_edges,
                           const Eigen::VectorXd& bin_weights, int n, Rng& rng,
                           bool stochastic) {
  int B = static_cast<int>(bin_weights.size());
  if (bin_edges.size() != B + 1) throw std::invalid_argument("sample_cdf: edges != bins + 1");
  Eigen::VectorXd w = bin_weights.cwiseMax(0.0).array() + 1e-5;  // floor keeps CDF invertible
  Eigen::VectorXd cdf(B + 1);
  cdf[0] = 0.0;
  for (int i = 0; i < B; ++i) cdf[i + 1] = cdf[i] + w[i];
  double total = cdf[B];
  Eigen::VectorXd out(n);
  for (int k = 0; k < n; ++k) {
    double u = stochastic ? (k + rng.uniform()) / n : (k + 0.5) / n;
    double target = u * total;
    int lo = static_cast<int>(std::upper_bound(cdf.data(), cdf.data() + B + 1, target) -
                              cdf.data()) - 1;
    lo = std::clamp(lo, 0, B - 1);
    double denom = cdf[lo + 1] - cdf[lo];
    double frac = denom > 0.0 ? (target - cdf[lo]) / denom : 0.5;
    out[k] = bin_edges[lo] + frac * (bin_edges[lo + 1] - bin_edges[lo]);
  }
  return out;
}

namespace {

Eigen::VectorXd deltas_for(const Eigen::VectorXd& z, double far) {
  int n = static_cast<int>(z.size());
  Eigen::VectorXd d(n);
  for (int i = 0; i + 1 < n; ++i) d[i] = z[i + 1] - z[i];
  d[n - 1] = far - z[n - 1];
  return d.cwiseMax(1e-8);
}

MatX3 points_for(const Ray& ray, const Eigen::VectorXd& z) {
  MatX3 P(z.size(), 3);
  for (int i = 0; i < z.size(); ++i) P.row(i) = ray.origin + z[i] * ray.direction;
  return P;
}

}  // namespace

namespace {

using SdfBatchFn = std::function<Eigen::VectorXd(const MatX3&)>;

RaySamples sample_ray_impl(const Ray& ray, int n_coarse, int n_importance, Rng& rng,
                           const SdfBatchFn* sdf, double alpha, bool stochastic) {
  if (n_coarse < 1) throw std::invalid_argument("sample_ray: n_coarse must be >= 1");
  double span = ray.far - ray.near;
  Eigen::VectorXd z(n_coarse);
  for (int i = 0; i < n_coarse; ++i) {
    double u = stochastic ? rng.uniform() : 0.5;
    z[i] = ray.near + span * (i + u) / n_coarse;
  }
  if (n_importance > 0) {
    if (!sdf) throw std::invalid_argument("sample_ray: importance sampling needs a field");
    if (n_coarse < 2) throw std::invalid_argument("sample_ray: importance sampling needs n_coarse >= 2");
    Eigen::VectorXd s = (*sdf)(points_for(ray, z));
    Eigen::VectorXd sig(n_coarse);
    for (int i = 0; i < n_coarse; ++i) sig[i] = density(s[i], alpha);
    auto [w, O] = render_weights(sig, deltas_for(z, ray.far));
    // coarse samples as edges of B = n_coarse - 1 interior bins
    Eigen::VectorXd bw(n_coarse - 1);
    for (int i = 0; i + 1 < n_coarse; ++i) bw[i] = 0.5 * (w[i] + w[i + 1]);
    Eigen::VectorXd zi = sample_cdf(z, bw, n_importance, rng, stochastic);
    Eigen::VectorXd merged(z.size() + zi.size());
    merged << z, zi;
    std::sort(merged.data(), merged.data() + merged.size());
    z = std::move(merged);
  }
  RaySamples rs;
  rs.z = std::move(z);
  rs.deltas = deltas_for(rs.z, ray.far);
  rs.points = points_for(ray, rs.z);
  return rs;
}

}  // namespace

RaySamples sample_ray(const Ray& ray, int n_coarse, int n_importance, Rng& rng,
                      const ParamStore* params, bool stochastic) {
  if (params) {
    SdfBatchFn fn = [params](const MatX3& P) { return sdf_values(*params, P); };
    return sample_ray_impl(ray, n_coarse, n_importance, rng, &fn, params->alpha(), stochastic);
  }
  return sample_ray_impl(ray, n_coarse, n_importance, rng, nullptr, 1.0, stochastic);
}

RaySamples sample_ray(const Ray& ray, int n_coarse, int n_importance, Rng& rng,
                      const FieldHooks* hooks, bool stochastic) {
  if (hooks) {
    SdfBatchFn fn = [hooks](const MatX3& P) {
      Eigen::VectorXd s(P.rows());
      for (int i = 0; i < P.rows(); ++i) s[i] = hooks->sdf(P.row(i));
      return s;
    };
    return sample_ray_impl(ray, n_coarse, n_importance, rng, &fn, hooks->alpha, stochastic);
  }
  return sample_ray_impl(ray, n_coarse, n_importance, rng, nullptr, 1.0, stochastic);
}

std::pair<Eigen::VectorXd, double> render_weights(const Eigen::VectorXd& sigmas,
                                                  const Eigen::VectorXd& deltas) {
  if (sigmas.size() != deltas.size()) throw std::invalid_argument("render_weights: size mismatch");
  int n = static_cast<int>(sigmas.size());
  Eigen::VectorXd w(n);
  double acc = 0.0;  // cumulative sigma*delta
  for (int i = 0; i < n; ++i) {
    double sd = sigmas[i] * deltas[i];
    double a = 1.0 - std::exp(-sd);
    w[i] = a * std::exp(-acc);
    acc += sd;
  }
  return {std::move(w), w.sum()};
}

Vec3 compose_color(const Vec3& c_g, const Vec3& c_r, Composition mode) {
  Vec3 c;
  for (int i = 0; i < 3; ++i) {
    if (c_r[i] == 0.0) {
      // exact fixed point: Psi(Psi^-1(y)) and (y + 0.5) - 0.5 both round, so the
      // zero-residual identity is returned directly rather than recomputed
      c[i] = mode == Composition::clamp ? std::clamp(c_g[i], 0.0, 1.0) : c_g[i];
    } else if (mode == Composition::sigmoid) {
      c[i] = sigmoid(inverse_sigmoid(c_g[i]) + c_r[i]);
    } else {
      c[i] = std::clamp(c_g[i] + sigmoid(c_r[i]) - 0.5, 0.0, 1.0);
    }
  }
  return c;
}

RenderOutput render_ray(const ParamStore& ps, const Ray& ray, const RenderParams& rp,
                        Rng& rng, const std::string& tag) {
  RaySamples rs = sample_ray(ray, rp.n_coarse, rp.n_importance, rng,
                             rp.n_importance > 0 ? &ps : nullptr, rp.stochastic);
  int S = static_cast<int>(rs.z.size());
  SdfBatch fb = sdf_forward(ps, rs.points);

  MatX3 dirs = ray.direction.transpose().replicate(S, 1);

  MatX3 c(S, 3), cr = MatX3::Zero(S, 3);
  const Variant variant = ps.config.variant;
  if (variant == Variant::neus_baseline) {
    c = baseline_color(ps, rs.points, dirs, fb.f, fb.g);
  } else {
    MatX3 logits = global_color_logits(ps, rs.points, fb.f, fb.g);
    if (variant == Variant::naive) {
      c = logits.unaryExpr([](double v) { return sigmoid(v); });
    } else {
      MatX3 cg = logits.unaryExpr([](double v) { return sigmoid(v); });
      cr = relight(ps, cg, rs.points, dirs, fb.g);
      if (ps.config.composition == Composition::sigmoid) {
        // logit-space fusion: zero residual reproduces the naive color bitwise
        c = (logits + cr).unaryExpr([](double v) { return sigmoid(v); });
      } else {
        c = (cg + cr.unaryExpr([](double v) { return sigmoid(v); }) -
             MatX3::Constant(S, 3, 0.5))
                .cwiseMax(0.0)
                .cwiseMin(1.0);
      }
    }
  }

  double alpha = ps.alpha();
  Eigen::VectorXd sig(S);
  for (int i = 0; i < S; ++i) sig[i] = density(fb.s[i], alpha);
  auto [w, O] = render_weights(sig, rs.deltas);

  RenderOutput out;
  out.C = c.transpose() * w;
  if (rp.use_background) {
    const Tensor& bg = ps.at("bg_color").value;
    for (int i = 0; i < 3; ++i) out.C[i] += (1.0 - O) * sigmoid(bg.at(0, i));
  }
  out.opacity = O;
  out.depth = O > 1e-8 ? w.dot(rs.z) / O : 0.0;
  out.weights = std::move(w);
  out.c_r = std::move(cr);
  out.grads = std::move(fb.g);
  out.samples = std::move(rs);
  if (!out.C.allFinite() || !std::isfinite(O))
    throw std::runtime_error("render_ray: non-finite output" +
                             (tag.empty() ? "" : " for ray " + tag));
  return out;
}

RenderOutput render_ray(const FieldHooks& hooks, const Ray& ray, const RenderParams& rp,
                        Rng& rng, const std::string& tag) {
  RaySamples rs = sample_ray(ray, rp.n_coarse, rp.n_importance, rng,
                             rp.n_importance > 0 ? &hooks : nullptr, rp.stochastic);
  int S = static_cast<int>(rs.z.size());
  Eigen::VectorXd sig(S);
  MatX3 c(S, 3), grads(S, 3);
  const double h = 1e-5;
  for (int i = 0; i < S; ++i) {
    Vec3 p = rs.points.row(i);
    sig[i] = density(hooks.sdf(p), hooks.alpha);
    c.row(i) = hooks.color(p, ray.direction);
    for (int k = 0; k < 3; ++k) {
      Vec3 lo = p, hi = p;
      lo[k] -= h;
      hi[k] += h;
      grads(i, k) = (hooks.sdf(hi) - hooks.sdf(lo)) / (2.0 * h);
    }
  }
  auto [w, O] = render_weights(sig, rs.deltas);
  RenderOutput out;
  out.C = c.transpose() * w;
  out.opacity = O;
  out.depth = O > 1e-8 ? w.dot(rs.z) / O : 0.0;
  out.weights = std::move(w);
  out.c_r = MatX3::Zero(S, 3);
  out.grads = std::move(grads);
  out.samples = std::move(rs);
  if (!out.C.allFinite() || !std::isfinite(O))
    throw std::runtime_error("render_ray: non-finite output" +
                             (tag.empty() ? "" : " for ray " + tag));
  return out;
}

// ---- batched tape render -------------------------------------------------------

BatchRender render_batch_t(ad::Tape& t, const ParamStore& ps, const TapeParams& tp,
                           const PoseStore& poses, const TapeParams* pose_tp,
                           const std::vector<RayBatchGroup>& groups,
                           const RenderParams& rp, Rng& rng) {
  const int S = rp.n_coarse + rp.n_importance;
  std::vector<Ray> rays;
  std::vector<ad::Var> o_parts, d_parts;
  std::vector<double> gt_rows, mask_rows;
  bool any_mask = false;
  for (const auto& gr : groups)
    if (gr.mask.size() > 0) any_mask = true;

  for (const auto& gr : groups) {
    if (gr.pixels.empty()) continue;
    int n = static_cast<int>(gr.pixels.size());
    CameraPose cam = poses.pose(gr.image, gr.intrinsics);
    Mat3 Kinv = gr.intrinsics.inverse();
    Mat3 R = rot6d_to_matrix(cam.rot6d);

    Tensor cam_dirs(n, 3), origins(n, 3);
    for (int i = 0; i < n; ++i) {
      Vec3 dc = Kinv * Vec3(gr.pixels[i].x(), gr.pixels[i].y(), 1.0);
      for (int k = 0; k < 3; ++k) cam_dirs.at(i, k) = dc[k];
      Vec3 dw = (R * dc).normalized();
      Ray ray;
      ray.origin = cam.translation;
      ray.direction = dw;
      auto hit = ray_sphere_interval(ray.origin, dw, rp.sphere_radius);
      if (hit) {
        ray.near = hit->first;
        ray.far = hit->second;
      } else {
        // pose drift can push a sampled pixel off the sphere; bracket the
        // closest approach so the ray still renders (empty space)
        double tm = std::max(-ray.origin.dot(dw), 1e-4);
        ray.near = std::max(tm - rp.sphere_radius, 1e-4);
        ray.far = tm + rp.sphere_radius;
      }
      rays.push_back(ray);
      for (int k = 0; k < 3; ++k) origins.at(i, k) = ray.origin[k];
    }
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < 3; ++k) gt_rows.push_back(gr.gt(i, k));
      if (any_mask) mask_rows.push_back(gr.mask.size() > 0 ? gr.mask[i] : 1.0);
    }

    if (pose_tp && poses.trainable) {
      std::string base = "pose/" + std::to_string(gr.image) + "/";
      ad::Var B = rot6d_basis_t(t, pose_tp->at(base + "rot6d"));
      ad::Var dirs = normalize_rows_t(t, t.matmul(t.constant(cam_dirs, "cam_dirs"), B));
      ad::Var orig = t.add_rowvec(t.constant(Tensor::zeros(n, 3), "zero3"),
                                  pose_tp->at(base + "t"));
      o_parts.push_back(orig);
      d_parts.push_back(dirs);
    } else {
      Tensor world_dirs(n, 3);
      int base_i = static_cast<int>(rays.size()) - n;
      for (int i = 0; i < n; ++i)
        for (int k = 0; k < 3; ++k) world_dirs.at(i, k) = rays[base_i + i].direction[k];
      o_parts.push_back(t.constant(origins, "ray_o"));
      d_parts.push_back(t.constant(world_dirs, "ray_d"));
    }
  }
  int N = static_cast<int>(rays.size());
  if (N == 0) throw std::invalid_argument("render_batch_t: empty batch");

  // z samples from the plain coarse+importance pass (constants on the tape)
  Tensor z(N * S, 1), deltas(N * S, 1);
  for (int r = 0; r < N; ++r) {
    RaySamples rs = sample_ray(rays[r], rp.n_coarse, rp.n_importance, rng,
                               rp.n_importance > 0 ? &ps : nullptr, rp.stochastic);
    for (int i = 0; i < S; ++i) {
      z.at(r * S + i, 0) = rs.z[i];
      deltas.at(r * S + i, 0) = rs.deltas[i];
    }
  }

  ad::Var o = o_parts.size() == 1 ? o_parts[0] : t.concat_rows(o_parts);
  ad::Var d = d_parts.size() == 1 ? d_parts[0] : t.concat_rows(d_parts);
  ad::Var z_c = t.constant(std::move(z), "z");
  ad::Var delta_c = t.constant(std::move(deltas), "deltas");
  ad::Var P = t.add(t.repeat_rows_seg(o, S), t.mul_colvec(t.repeat_rows_seg(d, S), z_c));
  ad::Var D = t.repeat_rows_seg(d, S);

  SdfEvalT fe = sdf_eval_t(t, tp, ps.dims, P);
  ad::Var alpha = t.exp(tp.at("alpha_log"));
  ad::Var q = t.sigmoid(t.mul_scalar(fe.s, alpha));
  ad::Var sigma = t.mul_scalar(t.mul(q, t.add_const(t.neg(q), 1.0)), alpha);
  ad::Var sd = t.mul(sigma, delta_c);
  ad::Var a = t.add_const(t.neg(t.exp(t.neg(sd))), 1.0);
  ad::Var trans = t.exp(t.neg(t.cumsum_exclusive_seg(sd, S)));
  ad::Var w = t.mul(a, trans);

  ad::Var c;
  BatchRender out;
  if (ps.config.variant == Variant::neus_baseline) {
    c = baseline_color_t(t, tp, ps.dims, P, D, fe.f, fe.g);
  } else {
    ad::Var logits = global_color_logits_t(t, tp, ps.dims, P, fe.f, fe.g);
    if (ps.config.variant == Variant::naive) {
      c = t.sigmoid(logits);
    } else {
      ad::Var cg = t.sigmoid(logits);
      ad::Var cr = relight_t(t, tp, ps.config, ps.dims, cg, P, D, fe.g);
      if (ps.config.composition == Composition::sigmoid)
        c = t.sigmoid(t.add(logits, cr));
      else
        c = t.clamp(t.add(cg, t.add_const(t.sigmoid(cr), -0.5)), 0.0, 1.0);
      out.c_r = cr;
    }
  }

  out.C = t.seg_sum(t.mul_colvec(c, w), S);
  out.opacity = t.seg_sum(w, S);
  if (rp.use_background) {
    ad::Var bg = t.sigmoid(tp.at("bg_color"));
    ad::Var bg_rows = t.add_rowvec(t.constant(Tensor::zeros(N, 3), "zero_bg"), bg);
    out.C = t.add(out.C, t.mul_colvec(bg_rows, t.add_const(t.neg(out.opacity), 1.0)));
  }
  out.g = fe.g;
  out.n_rays = N;
  out.n_samples = S;
  out.gt = Tensor(N, 3);
  std::copy(gt_rows.begin(), gt_rows.end(), out.gt.data.begin());
  if (any_mask) {
    out.mask = Tensor(N, 1);
    std::copy(mask_rows.begin(), mask_rows.end(), out.mask.data.begin());
  }
  return out;
}

}  // namespace colorsurf
