#include "colorsurf/autodiff.hpp"

#include <cmath>
#include <utility>

namespace colorsurf::ad {

namespace {

void check(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("autodiff: ") + what);
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var Tape::make(Tensor value, bool requires_grad, std::string tag) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad && grad_on_;
  n.tag = std::move(tag);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::set_back(Var v, std::function<void()> back) {
  Node& n = node(v);
  if (n.requires_grad) n.back = std::move(back);
}

Tensor& Tape::grad_buf(Var v) {
  Node& n = node(v);
  if (n.gradient.empty() && !n.value.empty())
    n.gradient = Tensor::zeros(n.value.rows, n.value.cols);
  return n.gradient;
}

Var Tape::leaf(Tensor v, bool requires_grad, std::string name) {
  return make(std::move(v), requires_grad, std::move(name));
}

Var Tape::constant(Tensor v, std::string name) {
  return make(std::move(v), false, std::move(name));
}

const Tensor& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.gradient.empty())
    throw std::logic_error("autodiff: gradient not computed for '" + n.tag + "'");
  return n.gradient;
}

void Tape::backward(Var loss) {
  check(val(loss).rows == 1 && val(loss).cols == 1, "backward: loss must be 1x1");
  if (!node(loss).requires_grad)
    throw std::logic_error("autodiff: loss does not depend on any differentiable leaf");
  grad_buf(loss).data[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.requires_grad || n.gradient.empty() || !n.back) continue;
    n.back();
  }
}

std::string Tape::first_nonfinite() const {
  for (const Node& n : nodes_)
    if (!n.value.all_finite()) return n.tag;
  return {};
}

// ---------------------------------------------------------------------------
// arithmetic

Var Tape::add(Var a, Var b) {
  check(val(a).same_shape(val(b)), "add: shape mismatch");
  Tensor out = val(a);
  out.mat() += val(b).mat();
  Var r = make(std::move(out), requires_grad(a) || requires_grad(b), "add");
  set_back(r, [this, a, b, r]() {
    const Tensor& g = grad(r);
    if (requires_grad(a)) grad_buf(a).mat() += g.mat();
    if (requires_grad(b)) grad_buf(b).mat() += g.mat();
  });
  return r;
}

Var Tape::sub(Var a, Var b) {
  check(val(a).same_shape(val(b)), "sub: shape mismatch");
  Tensor out = val(a);
  out.mat() -= val(b).mat();
  Var r = make(std::move(out), requires_grad(a) || requires_grad(b), "sub");
  set_back(r, [this, a, b, r]() {
    const Tensor& g = grad(r);
    if (requires_grad(a)) grad_buf(a).mat() += g.mat();
    if (requires_grad(b)) grad_buf(b).mat() -= g.mat();
  });
  return r;
}

Var Tape::mul(Var a, Var b) {
  check(val(a).same_shape(val(b)), "mul: shape mismatch");
  Tensor out = val(a);
  out.mat() = out.mat().cwiseProduct(val(b).mat());
  Var r = make(std::move(out), requires_grad(a) || requires_grad(b), "mul");
  set_back(r, [this, a, b, r]() {
    const Tensor& g = grad(r);
    if (requires_grad(a)) grad_buf(a).mat() += g.mat().cwiseProduct(val(b).mat());
    if (requires_grad(b)) grad_buf(b).mat() += g.mat().cwiseProduct(val(a).mat());
  });
  return r;
}

Var Tape::div(Var a, Var b) {
  check(val(a).same_shape(val(b)), "div: shape mismatch");
  Tensor out = val(a);
  out.mat() = out.mat().cwiseQuotient(val(b).mat());
  Var r = make(std::move(out), requires_grad(a) || requires_grad(b), "div");
  set_back(r, [this, a, b, r]() {
    const Tensor& g = grad(r);
    if (requires_grad(a)) grad_buf(a).mat() += g.mat().cwiseQuotient(val(b).mat());
    if (requires_grad(b))
      grad_buf(b).mat() -= g.mat().cwiseProduct(val(r).mat()).cwiseQuotient(val(b).mat());
  });
  return r;
}

Var Tape::neg(Var a) {
  Tensor out = val(a);
  out.mat() = -out.mat();
  Var r = make(std::move(out), requires_grad(a), "neg");
  set_back(r, [this, a, r]() { grad_buf(a).mat() -= grad(r).mat(); });
  return r;
}

Var Tape::scale(Var a, double k) {
  Tensor out = val(a);
  out.mat() *= k;
  Var r = make(std::move(out), requires_grad(a), "scale");
  set_back(r, [this, a, r, k]() { grad_buf(a).mat() += k * grad(r).mat(); });
  return r;
}

Var Tape::add_const(Var a, double k) {
  Tensor out = val(a);
  out.mat().array() += k;
  Var r = make(std::move(out), requires_grad(a), "add_const");
  set_back(r, [this, a, r]() { grad_buf(a).mat() += grad(r).mat(); });
  return r;
}

// ---------------------------------------------------------------------------
// linear algebra

Var Tape::matmul(Var a, Var b) {
  check(val(a).cols == val(b).rows, "matmul: inner dimension mismatch");
  Tensor out(val(a).rows, val(b).cols);
  out.mat().noalias() = val(a).mat() * val(b).mat();
  Var r = make(std::move(out), requires_grad(a) || requires_grad(b), "matmul");
  set_back(r, [this, a, b, r]() {
    const Tensor& g = grad(r);
    if (requires_grad(a)) grad_buf(a).mat().noalias() += g.mat() * val(b).mat().transpose();
    if (requires_grad(b)) grad_buf(b).mat().noalias() += val(a).mat().transpose() * g.mat();
  });
  return r;
}

Var Tape::matmul_nt(Var a, Var b) {
  check(val(a).cols == val(b).cols, "matmul_nt: inner dimension mismatch");
  Tensor out(val(a).rows, val(b).rows);
  out.mat().noalias() = val(a).mat() * val(b).mat().transpose();
  Var r = make(std::move(out), requires_grad(a) || requires_grad(b), "matmul_nt");
  set_back(r, [this, a, b, r]() {
    const Tensor& g = grad(r);
    if (requires_grad(a)) grad_buf(a).mat().noalias() += g.mat() * val(b).mat();
    if (requires_grad(b)) grad_buf(b).mat().noalias() += g.mat().transpose() * val(a).mat();
  });
  return r;
}

// ---------------------------------------------------------------------------
// broadcasts

Var Tape::add_rowvec(Var a, Var row) {
  check(val(row).rows == 1 && val(row).cols == val(a).cols, "add_rowvec: row must be 1 x cols(a)");
  Tensor out = val(a);
  out.mat().rowwise() += val(row).mat().row(0);
  Var r = make(std::move(out), requires_grad(a) || requires_grad(row), "add_rowvec");
  set_back(r, [this, a, row, r]() {
    const Tensor& g = grad(r);
    if (requires_grad(a)) grad_buf(a).mat() += g.mat();
    if (requires_grad(row)) grad_buf(row).mat().row(0) += g.mat().colwise().sum();
  });
  return r;
}

Var Tape::mul_colvec(Var a, Var col) {
  check(val(col).cols == 1 && val(col).rows == val(a).rows, "mul_colvec: col must be rows(a) x 1");
  Tensor out = val(a);
  out.mat().array().colwise() *= val(col).mat().col(0).array();
  Var r = make(std::move(out), requires_grad(a) || requires_grad(col), "mul_colvec");
  set_back(r, [this, a, col, r]() {
    const Tensor& g = grad(r);
    if (requires_grad(a))
      grad_buf(a).mat().array() += g.mat().array().colwise() * val(col).mat().col(0).array();
    if (requires_grad(col))
      grad_buf(col).mat().col(0) += g.mat().cwiseProduct(val(a).mat()).rowwise().sum();
  });
  return r;
}

Var Tape::mul_scalar(Var a, Var s) {
  check(val(s).rows == 1 && val(s).cols == 1, "mul_scalar: s must be 1x1");
  Tensor out = val(a);
  out.mat() *= val(s).value();
  Var r = make(std::move(out), requires_grad(a) || requires_grad(s), "mul_scalar");
  set_back(r, [this, a, s, r]() {
    const Tensor& g = grad(r);
    if (requires_grad(a)) grad_buf(a).mat() += val(s).value() * g.mat();
    if (requires_grad(s)) grad_buf(s).data[0] += (g.mat().cwiseProduct(val(a).mat())).sum();
  });
  return r;
}

Var Tape::broadcast_scalar(Var s, int rows, int cols) {
  check(val(s).rows == 1 && val(s).cols == 1, "broadcast_scalar: s must be 1x1");
  Tensor out = Tensor::full(rows, cols, val(s).value());
  Var r = make(std::move(out), requires_grad(s), "broadcast_scalar");
  set_back(r, [this, s, r]() { grad_buf(s).data[0] += grad(r).mat().sum(); });
  return r;
}

// ---------------------------------------------------------------------------
// elementwise

Var Tape::sin(Var a) {
  Tensor out = val(a);
  out.mat() = out.mat().array().sin().matrix();
  Var r = make(std::move(out), requires_grad(a), "sin");
  set_back(r, [this, a, r]() {
    grad_buf(a).mat().array() += grad(r).mat().array() * val(a).mat().array().cos();
  });
  return r;
}

Var Tape::cos(Var a) {
  Tensor out = val(a);
  out.mat() = out.mat().array().cos().matrix();
  Var r = make(std::move(out), requires_grad(a), "cos");
  set_back(r, [this, a, r]() {
    grad_buf(a).mat().array() -= grad(r).mat().array() * val(a).mat().array().sin();
  });
  return r;
}

Var Tape::exp(Var a) {
  Tensor out = val(a);
  out.mat() = out.mat().array().exp().matrix();
  Var r = make(std::move(out), requires_grad(a), "exp");
  set_back(r, [this, a, r]() {
    grad_buf(a).mat().array() += grad(r).mat().array() * val(r).mat().array();
  });
  return r;
}

Var Tape::log(Var a) {
  Tensor out = val(a);
  out.mat() = out.mat().array().log().matrix();
  Var r = make(std::move(out), requires_grad(a), "log");
  set_back(r, [this, a, r]() {
    grad_buf(a).mat().array() += grad(r).mat().array() / val(a).mat().array();
  });
  return r;
}

Var Tape::sqrt(Var a) {
  Tensor out = val(a);
  out.mat() = out.mat().array().sqrt().matrix();
  Var r = make(std::move(out), requires_grad(a), "sqrt");
  set_back(r, [this, a, r]() {
    grad_buf(a).mat().array() += grad(r).mat().array() * 0.5 / val(r).mat().array();
  });
  return r;
}

Var Tape::square(Var a) {
  Tensor out = val(a);
  out.mat() = out.mat().array().square().matrix();
  Var r = make(std::move(out), requires_grad(a), "square");
  set_back(r, [this, a, r]() {
    grad_buf(a).mat().array() += grad(r).mat().array() * 2.0 * val(a).mat().array();
  });
  return r;
}

Var Tape::abs(Var a) {
  Tensor out = val(a);
  out.mat() = out.mat().array().abs().matrix();
  Var r = make(std::move(out), requires_grad(a), "abs");
  set_back(r, [this, a, r]() {
    grad_buf(a).mat().array() +=
        grad(r).mat().array() * val(a).mat().array().sign();
  });
  return r;
}

Var Tape::sigmoid(Var a) {
  Tensor out = val(a);
  for (double& v : out.data) v = stable_sigmoid(v);
  Var r = make(std::move(out), requires_grad(a), "sigmoid");
  set_back(r, [this, a, r]() {
    auto y = val(r).mat().array();
    grad_buf(a).mat().array() += grad(r).mat().array() * y * (1.0 - y);
  });
  return r;
}

Var Tape::softplus(Var a, double beta) {
  check(beta > 0.0, "softplus: beta must be positive");
  Tensor out = val(a);
  for (double& v : out.data) {
    double bx = beta * v;
    v = bx > 30.0 ? v : std::log1p(std::exp(bx)) / beta;
  }
  Var r = make(std::move(out), requires_grad(a), "softplus");
  set_back(r, [this, a, r, beta]() {
    Tensor& ga = grad_buf(a);
    const Tensor& g = grad(r);
    const Tensor& x = val(a);
    for (size_t i = 0; i < ga.data.size(); ++i)
      ga.data[i] += g.data[i] * stable_sigmoid(beta * x.data[i]);
  });
  return r;
}

Var Tape::relu(Var a) {
  Tensor out = val(a);
  out.mat() = out.mat().cwiseMax(0.0);
  Var r = make(std::move(out), requires_grad(a), "relu");
  set_back(r, [this, a, r]() {
    auto mask = (val(a).mat().array() > 0.0).cast<double>();
    grad_buf(a).mat().array() += grad(r).mat().array() * mask;
  });
  return r;
}

Var Tape::step(Var a) {
  Tensor out = val(a);
  out.mat() = (out.mat().array() > 0.0).cast<double>().matrix();
  // Derivative is zero almost everywhere; the node is a local constant.
  return make(std::move(out), false, "step");
}

Var Tape::clamp(Var a, double lo, double hi) {
  check(lo <= hi, "clamp: lo > hi");
  Tensor out = val(a);
  out.mat() = out.mat().cwiseMax(lo).cwiseMin(hi);
  Var r = make(std::move(out), requires_grad(a), "clamp");
  set_back(r, [this, a, r, lo, hi]() {
    auto x = val(a).mat().array();
    auto mask = (x >= lo && x <= hi).cast<double>();
    grad_buf(a).mat().array() += grad(r).mat().array() * mask;
  });
  return r;
}

// ---------------------------------------------------------------------------
// reductions

Var Tape::sum_all(Var a) {
  Tensor out = Tensor::scalar(val(a).mat().sum());
  Var r = make(std::move(out), requires_grad(a), "sum_all");
  set_back(r, [this, a, r]() { grad_buf(a).mat().array() += grad(r).value(); });
  return r;
}

Var Tape::mean_all(Var a) {
  double n = static_cast<double>(val(a).size());
  check(n > 0, "mean_all: empty tensor");
  Tensor out = Tensor::scalar(val(a).mat().sum() / n);
  Var r = make(std::move(out), requires_grad(a), "mean_all");
  set_back(r, [this, a, r, n]() { grad_buf(a).mat().array() += grad(r).value() / n; });
  return r;
}

Var Tape::row_sum(Var a) {
  Tensor out(val(a).rows, 1);
  out.mat().col(0) = val(a).mat().rowwise().sum();
  Var r = make(std::move(out), requires_grad(a), "row_sum");
  set_back(r, [this, a, r]() {
    grad_buf(a).mat().array().colwise() += grad(r).mat().col(0).array();
  });
  return r;
}

// ---------------------------------------------------------------------------
// structure

Var Tape::concat_cols(const std::vector<Var>& parts) {
  check(!parts.empty(), "concat_cols: empty");
  int rows = val(parts[0]).rows;
  int cols = 0;
  bool rg = false;
  for (Var p : parts) {
    check(val(p).rows == rows, "concat_cols: row mismatch");
    cols += val(p).cols;
    rg = rg || requires_grad(p);
  }
  Tensor out(rows, cols);
  int c = 0;
  for (Var p : parts) {
    out.mat().middleCols(c, val(p).cols) = val(p).mat();
    c += val(p).cols;
  }
  std::vector<Var> ps = parts;
  Var r = make(std::move(out), rg, "concat_cols");
  set_back(r, [this, ps, r]() {
    int c = 0;
    for (Var p : ps) {
      int w = val(p).cols;
      if (requires_grad(p)) grad_buf(p).mat() += grad(r).mat().middleCols(c, w);
      c += w;
    }
  });
  return r;
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  check(!parts.empty(), "concat_rows: empty");
  int cols = val(parts[0]).cols;
  int rows = 0;
  bool rg = false;
  for (Var p : parts) {
    check(val(p).cols == cols, "concat_rows: col mismatch");
    rows += val(p).rows;
    rg = rg || requires_grad(p);
  }
  Tensor out(rows, cols);
  int rr = 0;
  for (Var p : parts) {
    out.mat().middleRows(rr, val(p).rows) = val(p).mat();
    rr += val(p).rows;
  }
  std::vector<Var> ps = parts;
  Var r = make(std::move(out), rg, "concat_rows");
  set_back(r, [this, ps, r]() {
    int rr = 0;
    for (Var p : ps) {
      int h = val(p).rows;
      if (requires_grad(p)) grad_buf(p).mat() += grad(r).mat().middleRows(rr, h);
      rr += h;
    }
  });
  return r;
}

Var Tape::slice_cols(Var a, int c0, int c1) {
  check(0 <= c0 && c0 < c1 && c1 <= val(a).cols, "slice_cols: bad range");
  Tensor out(val(a).rows, c1 - c0);
  out.mat() = val(a).mat().middleCols(c0, c1 - c0);
  Var r = make(std::move(out), requires_grad(a), "slice_cols");
  set_back(r, [this, a, r, c0]() {
    grad_buf(a).mat().middleCols(c0, val(r).cols) += grad(r).mat();
  });
  return r;
}

Var Tape::slice_rows(Var a, int r0, int r1) {
  check(0 <= r0 && r0 < r1 && r1 <= val(a).rows, "slice_rows: bad range");
  Tensor out(r1 - r0, val(a).cols);
  out.mat() = val(a).mat().middleRows(r0, r1 - r0);
  Var r = make(std::move(out), requires_grad(a), "slice_rows");
  set_back(r, [this, a, r, r0]() {
    grad_buf(a).mat().middleRows(r0, val(r).rows) += grad(r).mat();
  });
  return r;
}

Var Tape::tile_rows(Var a, int k) {
  check(k >= 1, "tile_rows: k must be >= 1");
  int rows = val(a).rows;
  Tensor out(rows * k, val(a).cols);
  for (int i = 0; i < k; ++i) out.mat().middleRows(i * rows, rows) = val(a).mat();
  Var r = make(std::move(out), requires_grad(a), "tile_rows");
  set_back(r, [this, a, r, k]() {
    int rows = val(a).rows;
    for (int i = 0; i < k; ++i)
      grad_buf(a).mat() += grad(r).mat().middleRows(i * rows, rows);
  });
  return r;
}

// ---------------------------------------------------------------------------
// segmented

Var Tape::cumsum_exclusive_seg(Var x, int seg) {
  check(val(x).cols == 1, "cumsum_exclusive_seg: x must be a column");
  check(seg >= 1 && val(x).rows % seg == 0, "cumsum_exclusive_seg: rows not a multiple of seg");
  const Tensor& v = val(x);
  Tensor out(v.rows, 1);
  for (int r0 = 0; r0 < v.rows; r0 += seg) {
    double acc = 0.0;
    for (int i = 0; i < seg; ++i) {
      out.data[static_cast<size_t>(r0) + i] = acc;
      acc += v.data[static_cast<size_t>(r0) + i];
    }
  }
  Var r = make(std::move(out), requires_grad(x), "cumsum_exclusive_seg");
  set_back(r, [this, x, r, seg]() {
    Tensor& gx = grad_buf(x);
    const Tensor& g = grad(r);
    for (int r0 = 0; r0 < gx.rows; r0 += seg) {
      double acc = 0.0;
      for (int i = seg - 1; i >= 0; --i) {
        gx.data[static_cast<size_t>(r0) + i] += acc;
        acc += g.data[static_cast<size_t>(r0) + i];
      }
    }
  });
  return r;
}

Var Tape::seg_sum(Var x, int seg) {
  check(seg >= 1 && val(x).rows % seg == 0, "seg_sum: rows not a multiple of seg");
  int segments = val(x).rows / seg;
  Tensor out(segments, val(x).cols);
  for (int s = 0; s < segments; ++s)
    out.mat().row(s) = val(x).mat().middleRows(s * seg, seg).colwise().sum();
  Var r = make(std::move(out), requires_grad(x), "seg_sum");
  set_back(r, [this, x, r, seg]() {
    int segments = val(r).rows;
    for (int s = 0; s < segments; ++s)
      grad_buf(x).mat().middleRows(s * seg, seg).rowwise() += grad(r).mat().row(s);
  });
  return r;
}

Var Tape::repeat_rows_seg(Var x, int seg) {
  check(seg >= 1, "repeat_rows_seg: seg must be >= 1");
  int segments = val(x).rows;
  Tensor out(segments * seg, val(x).cols);
  for (int s = 0; s < segments; ++s)
    out.mat().middleRows(s * seg, seg).rowwise() = val(x).mat().row(s);
  Var r = make(std::move(out), requires_grad(x), "repeat_rows_seg");
  set_back(r, [this, x, r, seg]() {
    int segments = val(x).rows;
    for (int s = 0; s < segments; ++s)
      grad_buf(x).mat().row(s) += grad(r).mat().middleRows(s * seg, seg).colwise().sum();
  });
  return r;
}

}  // namespace colorsurf::ad
