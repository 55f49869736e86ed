#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "colorsurf/autodiff.hpp"
#include "colorsurf/geometry.hpp"
#include "colorsurf/tensor.hpp"

namespace colorsurf {

enum class Variant { color_neus, naive, neus_baseline };
enum class Composition { sigmoid, clamp };

const char* to_string(Variant v);
const char* to_string(Composition c);
Variant variant_from_string(const std::string& s);
Composition composition_from_string(const std::string& s);

struct ModelConfig {
  Variant variant = Variant::color_neus;
  bool relight_uses_gradient = true;
  Composition composition = Composition::sigmoid;
};

struct NetDims {
  int hidden = 256;
  int feature = 256;
  int sdf_hidden_layers = 8;    // skip connection re-feeds the encoding
  int color_hidden_layers = 4;
  int skip_layer = 4;           // index within the SDF hidden stack
  int pos_frequencies = 6;      // encoding of p inside the SDF net
  int dir_frequencies = 4;      // encoding of d in relight/baseline nets
  EncodingSpec pos_spec() const { return {pos_frequencies, true}; }
  EncodingSpec dir_spec() const { return {dir_frequencies, true}; }
};

// One named parameter tensor plus its Adam moments. Values and moments are
// kept float32-representable at all times (see Tensor::quantize_f32) so the
// float32 checkpoint round-trips bitwise and resumed runs are bit-identical.
struct Param {
  std::string name;
  Tensor value, m, v;
};

struct ParamStore {
  ModelConfig config;
  NetDims dims;
  std::vector<Param> params;  // declared order = checkpoint order

  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool has(const std::string& name) const;
  double alpha() const;  // exp(alpha_log), always > 0
};

// Per-image camera refinement parameters: pose/<i>/rot6d (1x6), pose/<i>/t (1x3).
// Poses are absolute camera-to-world replacements for the dataset poses.
struct PoseStore {
  bool trainable = false;
  std::vector<Param> params;

  int num_images() const { return static_cast<int>(params.size()) / 2; }
  CameraPose pose(int i, const Mat3& intrinsics) const;
  static PoseStore from_poses(const std::vector<CameraPose>& poses, bool trainable);
};

struct FieldSample {
  double s = 0.0;
  Eigen::VectorXd f;
  Vec3 g = Vec3::Zero();
};

// Deterministic given (config, dims, seed). SDF net gets a geometric init
// approximating s(p) = |p| - 1; relight output layer is zero so the relight
// residual is exactly 0 at step 0 and the model starts at its naive form.
ParamStore init_networks(const ModelConfig& config, const NetDims& dims, uint64_t seed);

// ---- plain (inference) evaluation; pure, no tape ----------------------------

using MatX3 = Eigen::Matrix<double, Eigen::Dynamic, 3>;

struct SdfBatch {
  Eigen::VectorXd s;
  Eigen::MatrixXd f;
  MatX3 g;  // spatial gradient via forward-mode tangents (exact)
};

Eigen::VectorXd sdf_values(const ParamStore& ps, const MatX3& P);
SdfBatch sdf_forward(const ParamStore& ps, const MatX3& P);
FieldSample sdf_eval(const ParamStore& ps, const Vec3& p);

MatX3 global_color_logits(const ParamStore& ps, const MatX3& P,
                          const Eigen::MatrixXd& f, const MatX3& g);
MatX3 global_color(const ParamStore& ps, const MatX3& P,
                   const Eigen::MatrixXd& f, const MatX3& g);
Vec3 global_color_eval(const ParamStore& ps, const Vec3& p,
                       const Eigen::VectorXd& f, const Vec3& g);

// Relight residual; requires variant color_neus. g ignored when
// relight_uses_gradient is false.
MatX3 relight(const ParamStore& ps, const MatX3& c_g, const MatX3& P,
              const MatX3& d, const MatX3& g);
Vec3 relight_eval(const ParamStore& ps, const Vec3& c_g, const Vec3& p,
                  const Vec3& d, const Vec3& g);

// View-dependent color; requires variant neus_baseline.
MatX3 baseline_color(const ParamStore& ps, const MatX3& P, const MatX3& d,
                     const Eigen::MatrixXd& f, const MatX3& g);
Vec3 baseline_color_eval(const ParamStore& ps, const Vec3& p, const Vec3& d,
                         const Eigen::VectorXd& f, const Vec3& g);

// ---- tape (training) evaluation ---------------------------------------------

struct TapeParams {
  std::map<std::string, ad::Var> vars;
  ad::Var at(const std::string& name) const;
  bool has(const std::string& name) const { return vars.count(name) != 0; }
};

TapeParams lift_params(ad::Tape& t, const ParamStore& ps);
TapeParams lift_poses(ad::Tape& t, const PoseStore& poses);

struct SdfEvalT {
  ad::Var s;  // M x 1
  ad::Var f;  // M x feature
  ad::Var g;  // M x 3, gradient of s w.r.t. P; differentiable w.r.t. params
};

// P is M x 3 on the tape. The spatial gradient is built by pushing the three
// coordinate tangent streams through the same tape ops as the primal pass
// (forward-over-reverse), so backward() through g is exact second order.
SdfEvalT sdf_eval_t(ad::Tape& t, const TapeParams& tp, const NetDims& dims, ad::Var P);

ad::Var global_color_logits_t(ad::Tape& t, const TapeParams& tp, const NetDims& dims,
                              ad::Var P, ad::Var f, ad::Var g);
ad::Var relight_t(ad::Tape& t, const TapeParams& tp, const ModelConfig& config,
                  const NetDims& dims, ad::Var c_g, ad::Var P, ad::Var d, ad::Var g);
ad::Var baseline_color_t(ad::Tape& t, const TapeParams& tp, const NetDims& dims,
                         ad::Var P, ad::Var d, ad::Var f, ad::Var g);

// Backpropagates a finite 1x1 loss and returns gradients for every parameter in
// tp (zeros where the loss does not depend on it). Throws std::runtime_error
// naming the first non-finite tape node if the graph contains one.
std::map<std::string, Tensor> loss_gradients(ad::Tape& t, const TapeParams& tp, ad::Var loss);

// ---- checkpoint --------------------------------------------------------------
// Binary container, little-endian: magic "CSRFCKPT", u32 version, u64 header
// length, JSON header (model/dims/iteration/tensor directory), then float32
// blobs: every parameter value in declared order (networks incl. alpha_log and
// background, then poses), then Adam moments (m, v) in the same order. The
// moment section makes resumed runs bit-identical. Documented in README.

struct Checkpoint {
  ParamStore params;
  PoseStore poses;
  int64_t iteration = 0;
  // renderer settings the checkpoint was trained with (self-describing render/extract)
  int n_coarse = 64;
  int n_importance = 64;
  double sphere_radius = 1.1;
  bool use_background = false;  // composite learnable background (no-mask datasets)
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);  // atomic
Checkpoint load_checkpoint(const std::string& path);

}  // namespace colorsurf
