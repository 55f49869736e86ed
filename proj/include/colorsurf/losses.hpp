#pragma once

#include "colorsurf/render.hpp"

namespace colorsurf {

struct LossWeights {
  double lambda_c = 1.0;
  double lambda_e = 0.1;
  double lambda_r = 1.0;
  double lambda_m = 0.1;  // forced to 0 when the dataset has no masks
  // The mean-zero relight constraint as printed is a signed mean, which is
  // unbounded below; |c_r| is the default and c_r^2 the optional alternative.
  bool relight_squared = false;
};

struct LossBreakdown {
  double color = 0.0, eikonal = 0.0, relight = 0.0, mask = 0.0, total = 0.0;
};

// mean over rays of the squared Euclidean color error
double color_loss(const MatX3& pred, const MatX3& gt);
// mean over samples of (|grad| - 1)^2
double eikonal_loss(const MatX3& grads);
// mean over samples and channels of |c_r| (or c_r^2)
double relight_loss(const MatX3& residuals, bool squared = false);
// mean binary cross-entropy of opacity against the mask bit; opacity clamped
// to [1e-5, 1 - 1e-5]
double mask_loss(const Eigen::VectorXd& mask, const Eigen::VectorXd& opacity);

// Weighted sum; throws std::runtime_error naming the first non-finite component.
LossBreakdown total_loss(double color, double eikonal, double relight, double mask,
                         const LossWeights& w);

// ---- tape builders -------------------------------------------------------------

struct LossVars {
  ad::Var color, eikonal, relight, mask, total;  // invalid when term is absent
  LossBreakdown values(const ad::Tape& t) const;
};

// Assembles the weighted loss over a rendered batch. Terms with zero weight (or
// without inputs: relight under non-decomposed variants, mask without masks)
// are skipped entirely so they contribute exactly zero gradient.
LossVars build_losses_t(ad::Tape& t, const BatchRender& br, const LossWeights& w);

}  // namespace colorsurf
