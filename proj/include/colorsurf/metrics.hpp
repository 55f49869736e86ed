#pragma once

#include <cstdint>
#include <vector>

#include "colorsurf/image.hpp"
#include "colorsurf/mesh.hpp"

namespace colorsurf {

// Uniform scale + translation so the axis-aligned bbox has longest side 1,
// centered at the origin. Colors and connectivity pass through unchanged.
ColoredMesh normalize_mesh(const ColoredMesh& mesh);

// Static k-d tree over 3-D points (median split on the widest axis).
class KdTree3 {
 public:
  explicit KdTree3(const MatX3& pts);
  // Index of the closest point; squared distance via dist2 when non-null.
  int nearest(const Vec3& q, double* dist2 = nullptr) const;

 private:
  struct Node {
    int left = -1, right = -1;
    int axis = 0;
    int point = -1;
  };
  int build(int lo, int hi);
  void search(int node, const Vec3& q, int& best, double& best_d2) const;
  MatX3 pts_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

struct IcpResult {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  int iterations = 0;
  double rmse = 0.0;
};

// Point-to-point ICP: nearest-neighbor correspondences against target, rigid
// Kabsch refit of the original source points, repeated until the RMSE change
// drops below tol. Returns the transform x -> R x + t mapping source onto
// target. Throws on fewer than 3 points or collinear inputs.
IcpResult icp_align(const MatX3& source, const MatX3& target, int max_iters = 50,
                    double tol = 1e-7);

// Area-weighted uniform random surface samples; deterministic given seed.
MatX3 sample_mesh(const ColoredMesh& mesh, int count, uint64_t seed);

// Symmetric mean squared nearest-neighbor distance, reported in cm^2
// (inputs in meters; squared meters x 10^4). Throws on an empty set.
double chamfer_distance(const MatX3& A, const MatX3& B);

struct ChamferReport {
  double chamfer_cm2 = 0.0;
  int icp_iterations = 0;
  double icp_rmse = 0.0;
};

// Full mesh-comparison protocol: normalize both meshes to unit size, sample
// point sets (or take vertices when use_vertices), ICP-align pred onto gt,
// then symmetric chamfer in cm^2.
ChamferReport chamfer_protocol(const ColoredMesh& pred, const ColoredMesh& gt,
                               int samples = 100000, bool use_vertices = false,
                               uint64_t seed = 0);

// -10 log10(MSE) over all pixels/channels, capped at the 99 dB sentinel.
double psnr(const Image& a, const Image& b);

// Channel-averaged SSIM, 11x11 Gaussian window (sigma 1.5), k1=0.01, k2=0.03,
// evaluated on the valid (un-padded) region.
double ssim(const Image& a, const Image& b);

}  // namespace colorsurf
