#include "colorsurf/tape_geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace colorsurf {

using ad::Tape;
using ad::Var;

Var rot6d_basis_t(Tape& t, Var r6) {
  if (t.val(r6).rows != 1 || t.val(r6).cols != 6)
    throw std::invalid_argument("rot6d_basis_t: expected 1x6");
  Var one = t.constant(Tensor::scalar(1.0), "one");
  Var a1 = t.slice_cols(r6, 0, 3);
  Var a2 = t.slice_cols(r6, 3, 6);
  Var b1 = t.mul_scalar(a1, t.div(one, t.sqrt(t.row_sum(t.square(a1)))));
  Var dot = t.row_sum(t.mul(b1, a2));
  Var u2 = t.sub(a2, t.mul_scalar(b1, dot));
  Var b2 = t.mul_scalar(u2, t.div(one, t.sqrt(t.row_sum(t.square(u2)))));
  auto comp = [&](Var v, int i) { return t.slice_cols(v, i, i + 1); };
  Var x1 = comp(b1, 0), y1 = comp(b1, 1), z1 = comp(b1, 2);
  Var x2 = comp(b2, 0), y2 = comp(b2, 1), z2 = comp(b2, 2);
  Var b3 = t.concat_cols({t.sub(t.mul(y1, z2), t.mul(z1, y2)),
                          t.sub(t.mul(z1, x2), t.mul(x1, z2)),
                          t.sub(t.mul(x1, y2), t.mul(y1, x2))});
  return t.concat_rows({b1, b2, b3});
}

Var normalize_rows_t(Tape& t, Var d) {
  Var norm = t.sqrt(t.row_sum(t.square(d)));
  Var inv = t.div(t.constant(Tensor::full(t.val(norm).rows, 1, 1.0), "ones"), norm);
  return t.mul_colvec(d, inv);
}

Var positional_encode_t(Tape& t, Var x, const EncodingSpec& spec) {
  std::vector<Var> parts;
  if (spec.include_input) parts.push_back(x);
  for (int k = 0; k < spec.num_frequencies; ++k) {
    double f = std::ldexp(M_PI, k);
    Var xs = t.scale(x, f);
    parts.push_back(t.sin(xs));
    parts.push_back(t.cos(xs));
  }
  return t.concat_cols(parts);
}

EncodedWithDeriv positional_encode_with_deriv_t(Tape& t, Var x,
                                                const EncodingSpec& spec) {
  const Tensor& xv = t.val(x);
  std::vector<Var> enc_parts, d_parts;
  if (spec.include_input) {
    enc_parts.push_back(x);
    d_parts.push_back(t.constant(Tensor::full(xv.rows, xv.cols, 1.0), "enc_dpass"));
  }
  for (int k = 0; k < spec.num_frequencies; ++k) {
    double f = std::ldexp(M_PI, k);
    Var xs = t.scale(x, f);
    Var s = t.sin(xs), c = t.cos(xs);
    enc_parts.push_back(s);
    enc_parts.push_back(c);
    d_parts.push_back(t.scale(c, f));
    d_parts.push_back(t.scale(s, -f));
  }
  return {t.concat_cols(enc_parts), t.concat_cols(d_parts)};
}

Tensor encode_selector(int n_rows, int input_dim, const EncodingSpec& spec) {
  int blocks = (spec.include_input ? 1 : 0) + 2 * spec.num_frequencies;
  int D = blocks * input_dim;
  Tensor S = Tensor::zeros(n_rows * input_dim, D);
  for (int j = 0; j < input_dim; ++j)
    for (int b = 0; b < blocks; ++b) {
      int c = b * input_dim + j;
      for (int i = 0; i < n_rows; ++i) S.at(j * n_rows + i, c) = 1.0;
    }
  return S;
}

}  // namespace colorsurf
