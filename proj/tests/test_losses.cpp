#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "colorsurf/losses.hpp"
#include "colorsurf/rng.hpp"
#include "doctest.h"

using namespace colorsurf;

namespace {

MatX3 random_mat3(int n, Rng& rng, double lo, double hi) {
  MatX3 m(n, 3);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

Tensor tensor_of(const Eigen::MatrixXd& m) {
  Tensor t(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) t.at(i, j) = m(i, j);
  return t;
}

}  // namespace

TEST_CASE("color_loss: pinned values and permutation invariance") {
  Rng rng(1);
  MatX3 p = random_mat3(5, rng, 0.0, 1.0);
  CHECK_EQ(color_loss(p, p), 0.0);

  MatX3 zero = MatX3::Zero(1, 3), one = MatX3::Ones(1, 3);
  CHECK_EQ(color_loss(zero, one), doctest::Approx(3.0).epsilon(1e-12));

  MatX3 pred(2, 3), gt = MatX3::Zero(2, 3);
  pred << 1, 0, 0, 0, 1, 0;
  CHECK_EQ(color_loss(pred, gt), doctest::Approx(1.0).epsilon(1e-12));

  // permuting rays leaves the mean unchanged
  MatX3 a = random_mat3(6, rng, 0.0, 1.0), b = random_mat3(6, rng, 0.0, 1.0);
  MatX3 ap(6, 3), bp(6, 3);
  int perm[6] = {3, 0, 5, 1, 4, 2};
  for (int i = 0; i < 6; ++i) {
    ap.row(i) = a.row(perm[i]);
    bp.row(i) = b.row(perm[i]);
  }
  CHECK_EQ(color_loss(a, b), doctest::Approx(color_loss(ap, bp)).epsilon(1e-12));
}

TEST_CASE("eikonal_loss: unit gradients score zero, vanished gradients score one") {
  Rng rng(2);
  MatX3 unit(32, 3);
  for (int i = 0; i < 32; ++i) {
    Vec3 v(rng.normal(), rng.normal(), rng.normal());
    unit.row(i) = v.normalized();
  }
  CHECK_LT(eikonal_loss(unit), 1e-12);
  CHECK_EQ(eikonal_loss(MatX3::Zero(16, 3)), doctest::Approx(1.0).epsilon(1e-12));

  // exact sphere SDF: grad(|p| - r) = p / |p|, unit everywhere off-center
  MatX3 g(50, 3);
  for (int i = 0; i < 50; ++i) {
    Vec3 p(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    if (p.norm() < 1e-3) p = Vec3(0.5, 0, 0);
    g.row(i) = p / p.norm();
  }
  CHECK_LT(eikonal_loss(g), 1e-12);

  // non-unit norms are penalized quadratically
  MatX3 twice = 2.0 * unit;
  CHECK_EQ(eikonal_loss(twice), doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("relight_loss: absolute-mean semantics") {
  CHECK_EQ(relight_loss(MatX3::Zero(8, 3)), 0.0);

  // alternating +1/-1: signed mean would be 0, |.| mean is 1 — the discriminating case
  MatX3 alt(4, 3);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) alt(i, j) = ((i + j) % 2 == 0) ? 1.0 : -1.0;
  CHECK_EQ(relight_loss(alt, false), doctest::Approx(1.0).epsilon(1e-12));
  CHECK_EQ(relight_loss(alt, true), doctest::Approx(1.0).epsilon(1e-12));  // squares of +-1

  Rng rng(3);
  MatX3 r = random_mat3(10, rng, -0.5, 0.5);
  const double k = 2.5;
  CHECK_EQ(relight_loss(k * r, false), doctest::Approx(k * relight_loss(r, false)).epsilon(1e-12));
  CHECK_EQ(relight_loss(k * r, true),
           doctest::Approx(k * k * relight_loss(r, true)).epsilon(1e-12));

  MatX3 half = MatX3::Constant(2, 3, 0.5);
  CHECK_EQ(relight_loss(half, false), doctest::Approx(0.5).epsilon(1e-12));
  CHECK_EQ(relight_loss(half, true), doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("mask_loss: binary cross-entropy with clamped opacity") {
  Eigen::VectorXd m1 = Eigen::VectorXd::Ones(1), o1 = Eigen::VectorXd::Ones(1);
  CHECK_LT(mask_loss(m1, o1), 1e-4);  // clamp floor keeps -ln(1 - 1e-5) tiny

  Eigen::VectorXd m0 = Eigen::VectorXd::Zero(1), o0 = Eigen::VectorXd::Zero(1);
  CHECK_LT(mask_loss(m0, o0), 1e-4);

  Eigen::VectorXd oh = Eigen::VectorXd::Constant(1, 0.5);
  CHECK_EQ(mask_loss(m1, oh), doctest::Approx(std::log(2.0)).epsilon(1e-6));

  // mean over rays: both a hit and a miss against 0.5 cost ln 2 each
  Eigen::VectorXd m(2), o(2);
  m << 1, 0;
  o << 0.5, 0.5;
  CHECK_EQ(mask_loss(m, o), doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("total_loss: weighted sum, reporting, and non-finite detection") {
  LossWeights w;  // 1.0, 0.1, 1.0, 0.1
  LossBreakdown zero = total_loss(0, 0, 0, 0, w);
  CHECK_EQ(zero.total, 0.0);

  LossBreakdown unit = total_loss(1, 1, 1, 1, w);
  CHECK_EQ(unit.total, doctest::Approx(2.2).epsilon(1e-12));
  CHECK_EQ(unit.color, 1.0);
  CHECK_EQ(unit.eikonal, 1.0);

  LossWeights nm = w;
  nm.lambda_m = 0.0;
  CHECK_EQ(total_loss(0, 0, 0, 123.0, nm).total, 0.0);

  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    double c = rng.uniform(0.0, 2.0), e = rng.uniform(0.0, 2.0);
    double r = rng.uniform(0.0, 2.0), m = rng.uniform(0.0, 2.0);
    LossBreakdown b = total_loss(c, e, r, m, w);
    double expect = w.lambda_c * c + w.lambda_e * e + w.lambda_r * r + w.lambda_m * m;
    CHECK_LT(std::abs(b.total - expect), 1e-9);
  }

  bool threw = false;
  try {
    total_loss(1.0, std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0, w);
  } catch (const std::runtime_error& e) {
    threw = true;
    CHECK_NE(std::string(e.what()).find("eikonal"), std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("build_losses_t: tape values equal the plain loss computation") {
  Rng rng(5);
  const int N = 4, S = 3;
  MatX3 C = random_mat3(N, rng, 0.05, 0.95);
  MatX3 gt = random_mat3(N, rng, 0.0, 1.0);
  MatX3 cr = random_mat3(N * S, rng, -0.4, 0.4);
  MatX3 g = random_mat3(N * S, rng, -1.5, 1.5);
  Eigen::VectorXd opacity(N), mask(N);
  for (int i = 0; i < N; ++i) {
    opacity[i] = rng.uniform(0.05, 0.95);
    mask[i] = (i % 2 == 0) ? 1.0 : 0.0;
  }

  ad::Tape t;
  BatchRender br;
  br.C = t.leaf(tensor_of(C), true, "C");
  br.opacity = t.leaf(tensor_of(opacity), true, "O");
  br.c_r = t.leaf(tensor_of(cr), true, "cr");
  br.g = t.leaf(tensor_of(g), true, "g");
  br.n_rays = N;
  br.n_samples = S;
  br.gt = tensor_of(gt);
  br.mask = tensor_of(mask);

  LossWeights w;
  LossVars lv = build_losses_t(t, br, w);
  LossBreakdown vals = lv.values(t);

  CHECK_EQ(vals.color, doctest::Approx(color_loss(C, gt)).epsilon(1e-12));
  CHECK_EQ(vals.eikonal, doctest::Approx(eikonal_loss(g)).epsilon(1e-12));
  CHECK_EQ(vals.relight, doctest::Approx(relight_loss(cr, w.relight_squared)).epsilon(1e-12));
  CHECK_EQ(vals.mask, doctest::Approx(mask_loss(mask, opacity)).epsilon(1e-12));
  LossBreakdown plain = total_loss(vals.color, vals.eikonal, vals.relight, vals.mask, w);
  CHECK_EQ(vals.total, doctest::Approx(plain.total).epsilon(1e-12));

  // analytic gradient spot checks through the tape
  t.backward(lv.total);
  const Tensor& dC = t.grad(br.C);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK_EQ(dC.at(i, j),
               doctest::Approx(w.lambda_c * 2.0 * (C(i, j) - gt(i, j)) / N).epsilon(1e-9));
  const Tensor& dg = t.grad(br.g);
  for (int i = 0; i < 3; ++i) {
    Vec3 gi = g.row(i);
    double n = gi.norm();
    Vec3 expect = w.lambda_e * 2.0 * (n - 1.0) * gi / n / (N * S);
    for (int j = 0; j < 3; ++j) CHECK_EQ(dg.at(i, j), doctest::Approx(expect[j]).epsilon(1e-9));
  }
}

TEST_CASE("build_losses_t: zero-weight and absent terms never reach the tape") {
  Rng rng(6);
  const int N = 3, S = 2;
  ad::Tape t;
  BatchRender br;
  br.C = t.leaf(tensor_of(random_mat3(N, rng, 0.1, 0.9)), true, "C");
  br.opacity = t.leaf(tensor_of(Eigen::VectorXd::Constant(N, 0.5)), true, "O");
  br.c_r = ad::Var{};  // non-decomposed variant: no residual tensor exists
  br.g = t.leaf(tensor_of(random_mat3(N * S, rng, -1, 1)), true, "g");
  br.n_rays = N;
  br.n_samples = S;
  br.gt = tensor_of(random_mat3(N, rng, 0, 1));
  br.mask = Tensor();  // dataset without masks

  LossWeights w;
  w.lambda_e = 0.0;
  LossVars lv = build_losses_t(t, br, w);
  CHECK_FALSE(lv.eikonal.valid());
  CHECK_FALSE(lv.relight.valid());
  CHECK_FALSE(lv.mask.valid());
  CHECK(lv.color.valid());
  CHECK(lv.total.valid());

  LossBreakdown vals = lv.values(t);
  CHECK_EQ(vals.eikonal, 0.0);
  CHECK_EQ(vals.relight, 0.0);
  CHECK_EQ(vals.mask, 0.0);
  CHECK_EQ(vals.total, doctest::Approx(w.lambda_c * vals.color).epsilon(1e-12));

  // skipped terms contribute exactly zero gradient: g and opacity stay untouched
  t.backward(lv.total);
  CHECK(t.has_grad(br.C));
  CHECK_FALSE(t.has_grad(br.g));
  CHECK_FALSE(t.has_grad(br.opacity));
}
