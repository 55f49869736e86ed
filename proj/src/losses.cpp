#include "colorsurf/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace colorsurf {

namespace {
constexpr double kBceEps = 1e-5;
}

double color_loss(const MatX3& pred, const MatX3& gt) {
  if (pred.rows() != gt.rows() || pred.rows() < 1)
    throw std::invalid_argument("color_loss: ray counts differ or empty");
  return (pred - gt).rowwise().squaredNorm().mean();
}

double eikonal_loss(const MatX3& grads) {
  if (grads.rows() < 1) throw std::invalid_argument("eikonal_loss: no samples");
  Eigen::VectorXd norms = grads.rowwise().norm();
  return (norms.array() - 1.0).square().mean();
}

double relight_loss(const MatX3& residuals, bool squared) {
  if (residuals.rows() < 1) throw std::invalid_argument("relight_loss: no samples");
  return squared ? residuals.array().square().mean() : residuals.array().abs().mean();
}

double mask_loss(const Eigen::VectorXd& mask, const Eigen::VectorXd& opacity) {
  if (mask.size() != opacity.size() || mask.size() < 1)
    throw std::invalid_argument("mask_loss: size mismatch or empty");
  double acc = 0.0;
  for (int i = 0; i < mask.size(); ++i) {
    double o = std::clamp(opacity[i], kBceEps, 1.0 - kBceEps);
    acc -= mask[i] * std::log(o) + (1.0 - mask[i]) * std::log(1.0 - o);
  }
  return acc / static_cast<double>(mask.size());
}

LossBreakdown total_loss(double color, double eikonal, double relight, double mask,
                         const LossWeights& w) {
  auto check = [](double v, const char* name) {
    if (!std::isfinite(v))
      throw std::runtime_error(std::string("total_loss: non-finite ") + name + " component");
  };
  check(color, "color");
  check(eikonal, "eikonal");
  check(relight, "relight");
  check(mask, "mask");
  LossBreakdown b;
  b.color = color;
  b.eikonal = eikonal;
  b.relight = relight;
  b.mask = mask;
  b.total = w.lambda_c * color + w.lambda_e * eikonal + w.lambda_r * relight +
            w.lambda_m * mask;
  return b;
}

LossBreakdown LossVars::values(const ad::Tape& t) const {
  LossBreakdown b;
  if (color.valid()) b.color = t.val(color).value();
  if (eikonal.valid()) b.eikonal = t.val(eikonal).value();
  if (relight.valid()) b.relight = t.val(relight).value();
  if (mask.valid()) b.mask = t.val(mask).value();
  b.total = t.val(total).value();
  return b;
}

LossVars build_losses_t(ad::Tape& t, const BatchRender& br, const LossWeights& w) {
  LossVars lv;
  std::vector<std::pair<ad::Var, double>> terms;

  if (w.lambda_c != 0.0) {
    ad::Var gt = t.constant(br.gt, "gt_color");
    lv.color = t.scale(t.sum_all(t.square(t.sub(br.C, gt))), 1.0 / br.n_rays);
    terms.emplace_back(lv.color, w.lambda_c);
  }

  if (w.lambda_e != 0.0) {
    ad::Var norms = t.sqrt(t.row_sum(t.square(br.g)));
    lv.eikonal = t.mean_all(t.square(t.add_const(norms, -1.0)));
    terms.emplace_back(lv.eikonal, w.lambda_e);
  }

  if (br.c_r.valid() && w.lambda_r != 0.0) {
    lv.relight = w.relight_squared ? t.mean_all(t.square(br.c_r))
                                   : t.mean_all(t.abs(br.c_r));
    terms.emplace_back(lv.relight, w.lambda_r);
  }

  if (!br.mask.empty() && w.lambda_m != 0.0) {
    ad::Var m = t.constant(br.mask, "mask");
    ad::Var one_minus_m = t.constant([&] {
      Tensor inv = br.mask;
      for (double& v : inv.data) v = 1.0 - v;
      return inv;
    }(), "one_minus_mask");
    ad::Var oc = t.clamp(br.opacity, kBceEps, 1.0 - kBceEps);
    ad::Var lhs = t.mul(m, t.log(oc));
    ad::Var rhs = t.mul(one_minus_m, t.log(t.add_const(t.neg(oc), 1.0)));
    lv.mask = t.neg(t.mean_all(t.add(lhs, rhs)));
    terms.emplace_back(lv.mask, w.lambda_m);
  }

  if (terms.empty()) {
    lv.total = t.constant(Tensor::scalar(0.0), "total_loss");
  } else {
    ad::Var acc = t.scale(terms[0].first, terms[0].second);
    for (size_t i = 1; i < terms.size(); ++i)
      acc = t.add(acc, t.scale(terms[i].first, terms[i].second));
    lv.total = acc;
  }
  const Tensor& tv = t.val(lv.total);
  if (!tv.all_finite()) {
    LossBreakdown b = lv.values(t);
    std::string which = !std::isfinite(b.color)     ? "color"
                        : !std::isfinite(b.eikonal) ? "eikonal"
                        : !std::isfinite(b.relight) ? "relight"
                        : !std::isfinite(b.mask)    ? "mask"
                                                    : "total";
    throw std::runtime_error("build_losses_t: non-finite " + which + " loss");
  }
  return lv;
}

}  // namespace colorsurf
