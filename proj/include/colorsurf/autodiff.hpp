#pragma once

#include <functional>
#include <string>
#include <vector>

#include "colorsurf/tensor.hpp"

namespace colorsurf::ad {

// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff tape over 2-D double tensors. Ops execute eagerly;
// backward() walks nodes in reverse creation order. Creation order is a
// topological order by construction.
//
// Gradients of loss terms that contain input-gradients of a network (e.g.
// eikonal penalties on the spatial gradient of a field) need no special
// machinery here: the forward-mode tangent propagation that produces those
// input-gradients is itself built from tape ops, so one reverse pass covers
// the second-order path.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_on_(grad_enabled) {}

  bool grad_enabled() const { return grad_on_; }
  int size() const { return static_cast<int>(nodes_.size()); }
  void clear() { nodes_.clear(); }

  Var leaf(Tensor v, bool requires_grad, std::string name = "leaf");
  Var constant(Tensor v, std::string name = "const");

  const Tensor& val(Var v) const { return node(v).value; }
  const Tensor& grad(Var v) const;
  bool has_grad(Var v) const { return !node(v).gradient.empty(); }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  const std::string& name(Var v) const { return node(v).tag; }

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
  // contributing node. `loss` must be 1x1.
  void backward(Var loss);

  // Name of the first node (in creation order) holding a non-finite entry,
  // or empty string if all values are finite.
  std::string first_nonfinite() const;

  // --- arithmetic ---
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var neg(Var a);
  Var scale(Var a, double k);
  Var add_const(Var a, double k);

  // --- linear algebra ---
  Var matmul(Var a, Var b);     // (m x k)(k x n)
  Var matmul_nt(Var a, Var b);  // a * b^T : (m x k)(n x k)^T

  // --- broadcasts ---
  Var add_rowvec(Var a, Var row);      // row is 1 x n
  Var mul_colvec(Var a, Var col);      // col is m x 1, scales each row
  Var mul_scalar(Var a, Var s);        // s is 1 x 1
  Var broadcast_scalar(Var s, int rows, int cols);

  // --- elementwise ---
  Var sin(Var a);
  Var cos(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var sqrt(Var a);
  Var square(Var a);
  Var abs(Var a);
  Var sigmoid(Var a);
  Var softplus(Var a, double beta);
  Var relu(Var a);
  Var step(Var a);  // 1[x > 0]; treated as locally constant (zero derivative)
  Var clamp(Var a, double lo, double hi);

  // --- reductions ---
  Var sum_all(Var a);   // -> 1 x 1
  Var mean_all(Var a);  // -> 1 x 1
  Var row_sum(Var a);   // m x n -> m x 1

  // --- structure ---
  Var concat_cols(const std::vector<Var>& parts);
  Var concat_rows(const std::vector<Var>& parts);
  Var slice_cols(Var a, int c0, int c1);
  Var slice_rows(Var a, int r0, int r1);
  Var tile_rows(Var a, int k);  // stacks k copies of a vertically

  // --- segmented ops over fixed-length segments of `seg` consecutive rows ---
  // x has R*seg rows; segment r covers rows [r*seg, (r+1)*seg).
  Var cumsum_exclusive_seg(Var x, int seg);  // per-segment exclusive prefix sum (x is R*seg x 1)
  Var seg_sum(Var x, int seg);               // (R*seg x C) -> (R x C)
  Var repeat_rows_seg(Var x, int seg);       // (R x C) -> (R*seg x C)

 private:
  struct Node {
    Tensor value;
    Tensor gradient;  // sized lazily during backward
    std::function<void()> back;
    bool requires_grad = false;
    std::string tag;
  };

  Node& node(Var v) { return nodes_.at(static_cast<size_t>(v.id)); }
  const Node& node(Var v) const { return nodes_.at(static_cast<size_t>(v.id)); }

  Var make(Tensor value, bool requires_grad, std::string tag);
  void set_back(Var v, std::function<void()> back);
  Tensor& grad_buf(Var v);  // allocates zeros on first touch

  std::vector<Node> nodes_;
  bool grad_on_;
};

}  // namespace colorsurf::ad
