#pragma once

#include "colorsurf/autodiff.hpp"
#include "colorsurf/geometry.hpp"

namespace colorsurf {

// Gram-Schmidt basis of a 1x6 rotation parameter on the tape. Returns the 3x3
// matrix whose ROWS are (b1, b2, b1 x b2), i.e. the transpose of
// rot6d_to_matrix. World directions follow as matmul(cam_dirs, basis).
ad::Var rot6d_basis_t(ad::Tape& t, ad::Var r6);

// Row-normalizes an N x 3 matrix of directions.
ad::Var normalize_rows_t(ad::Tape& t, ad::Var d);

// Tape version of positional_encode_rows: N x d -> N x spec.output_dim(d).
ad::Var positional_encode_t(ad::Tape& t, ad::Var x, const EncodingSpec& spec);

// Encoding plus the per-column derivative factor d(enc_col)/d(source coord):
// ones for pass-through columns, 2^k pi cos(.) for sin columns, and
// -2^k pi sin(.) for cos columns. Used to seed forward-mode tangents.
struct EncodedWithDeriv {
  ad::Var enc;    // N x D
  ad::Var dcoef;  // N x D
};
EncodedWithDeriv positional_encode_with_deriv_t(ad::Tape& t, ad::Var x,
                                                const EncodingSpec& spec);

// 0/1 selector S of shape (d*N) x D with S[j*N + i, c] = 1 iff encoding column
// c is sourced from input coordinate j. Row block j of tile_rows(dcoef, d) .* S
// is then the tangent of the encoding along input direction e_j.
Tensor encode_selector(int n_rows, int input_dim, const EncodingSpec& spec);

}  // namespace colorsurf
