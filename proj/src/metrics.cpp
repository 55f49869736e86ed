#include "colorsurf/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "colorsurf/rng.hpp"

namespace colorsurf {

ColoredMesh normalize_mesh(const ColoredMesh& mesh) {
  if (mesh.num_vertices() == 0) throw std::invalid_argument("cannot normalize an empty mesh");
  const Vec3 lo = mesh.vertices.colwise().minCoeff().transpose();
  const Vec3 hi = mesh.vertices.colwise().maxCoeff().transpose();
  const double longest = (hi - lo).maxCoeff();
  if (longest <= 0.0) throw std::invalid_argument("cannot normalize a degenerate mesh");
  const Vec3 center = 0.5 * (lo + hi);
  ColoredMesh out = mesh;
  out.vertices = (mesh.vertices.rowwise() - center.transpose()) / longest;
  return out;
}

KdTree3::KdTree3(const MatX3& pts) : pts_(pts) {
  const int n = static_cast<int>(pts.rows());
  if (n == 0) throw std::invalid_argument("k-d tree needs at least one point");
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(n);
  root_ = build(0, n);
}

int KdTree3::build(int lo, int hi) {
  if (lo >= hi) return -1;
  Vec3 bl = pts_.row(order_[lo]).transpose(), bh = bl;
  for (int i = lo + 1; i < hi; ++i) {
    bl = bl.cwiseMin(pts_.row(order_[i]).transpose());
    bh = bh.cwiseMax(pts_.row(order_[i]).transpose());
  }
  int axis = 0;
  (bh - bl).maxCoeff(&axis);
  const int mid = (lo + hi) / 2;
  std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                   [&](int a, int b) { return pts_(a, axis) < pts_(b, axis); });
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{-1, -1, axis, order_[mid]});
  const int left = build(lo, mid);
  const int right = build(mid + 1, hi);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree3::search(int node, const Vec3& q, int& best, double& best_d2) const {
  if (node < 0) return;
  const Node& nd = nodes_[node];
  const double d2 = (pts_.row(nd.point).transpose() - q).squaredNorm();
  if (d2 < best_d2) {
    best_d2 = d2;
    best = nd.point;
  }
  const double diff = q[nd.axis] - pts_(nd.point, nd.axis);
  const int near = diff < 0 ? nd.left : nd.right;
  const int far = diff < 0 ? nd.right : nd.left;
  search(near, q, best, best_d2);
  if (diff * diff < best_d2) search(far, q, best, best_d2);
}

int KdTree3::nearest(const Vec3& q, double* dist2) const {
  int best = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  search(root_, q, best, best_d2);
  if (dist2) *dist2 = best_d2;
  return best;
}

namespace {

void check_icp_input(const MatX3& pts, const char* which) {
  if (pts.rows() < 3)
    throw std::invalid_argument(std::string("icp ") + which + " needs at least 3 points");
  const Eigen::RowVector3d mean = pts.colwise().mean();
  const MatX3 centered = pts.rowwise() - mean;
  Eigen::SelfAdjointEigenSolver<Mat3> eig(centered.transpose() * centered);
  const Vec3 ev = eig.eigenvalues();  // ascending
  if (ev[1] <= 1e-12 * std::max(1.0, ev[2]))
    throw std::invalid_argument(std::string("icp ") + which + " points are collinear");
}

// Rigid transform minimizing sum |R*src_i + t - dst_i|^2 (Kabsch).
void kabsch(const MatX3& src, const MatX3& dst, Mat3* R, Vec3* t) {
  const Eigen::RowVector3d cs = src.colwise().mean();
  const Eigen::RowVector3d cd = dst.colwise().mean();
  const Mat3 H = (src.rowwise() - cs).transpose() * (dst.rowwise() - cd);
  Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 VUt = svd.matrixV() * svd.matrixU().transpose();
  Vec3 d(1.0, 1.0, VUt.determinant() < 0 ? -1.0 : 1.0);
  *R = svd.matrixV() * d.asDiagonal() * svd.matrixU().transpose();
  *t = cd.transpose() - *R * cs.transpose();
}

}  // namespace

IcpResult icp_align(const MatX3& source, const MatX3& target, int max_iters, double tol) {
  check_icp_input(source, "source");
  check_icp_input(target, "target");
  KdTree3 tree(target);
  IcpResult res;
  const int n = static_cast<int>(source.rows());
  MatX3 matched(n, 3);
  double prev = std::numeric_limits<double>::infinity();
  for (int iter = 1; iter <= max_iters; ++iter) {
    for (int i = 0; i < n; ++i) {
      const Vec3 p = res.rotation * source.row(i).transpose() + res.translation;
      matched.row(i) = target.row(tree.nearest(p));
    }
    kabsch(source, matched, &res.rotation, &res.translation);
    const MatX3 moved =
        (source * res.rotation.transpose()).rowwise() + res.translation.transpose();
    res.rmse = std::sqrt((moved - matched).rowwise().squaredNorm().mean());
    res.iterations = iter;
    if (res.rmse < tol || std::abs(prev - res.rmse) < tol) break;
    prev = res.rmse;
  }
  return res;
}

MatX3 sample_mesh(const ColoredMesh& mesh, int count, uint64_t seed) {
  if (mesh.num_triangles() == 0)
    throw std::invalid_argument("cannot sample points from a mesh without triangles");
  if (count <= 0) throw std::invalid_argument("sample count must be positive");
  const int T = mesh.num_triangles();
  std::vector<double> cum(T);
  double total = 0.0;
  for (int t = 0; t < T; ++t) {
    const Vec3 a = mesh.vertices.row(mesh.triangles(t, 0)).transpose();
    const Vec3 b = mesh.vertices.row(mesh.triangles(t, 1)).transpose();
    const Vec3 c = mesh.vertices.row(mesh.triangles(t, 2)).transpose();
    total += 0.5 * (b - a).cross(c - a).norm();
    cum[t] = total;
  }
  if (total <= 0.0) throw std::invalid_argument("mesh has zero surface area");
  Rng rng(seed, /*stream=*/0x5a3c9e17);
  MatX3 out(count, 3);
  for (int i = 0; i < count; ++i) {
    const double u = rng.uniform() * total;
    const int t = static_cast<int>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
    const int tc = std::min(t, T - 1);
    const Vec3 a = mesh.vertices.row(mesh.triangles(tc, 0)).transpose();
    const Vec3 b = mesh.vertices.row(mesh.triangles(tc, 1)).transpose();
    const Vec3 c = mesh.vertices.row(mesh.triangles(tc, 2)).transpose();
    const double su = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    out.row(i) = ((1.0 - su) * a + su * (1.0 - r2) * b + su * r2 * c).transpose();
  }
  return out;
}

double chamfer_distance(const MatX3& A, const MatX3& B) {
  if (A.rows() == 0 || B.rows() == 0)
    throw std::invalid_argument("chamfer distance needs non-empty point sets");
  const KdTree3 ta(A), tb(B);
  double ab = 0.0, ba = 0.0;
  for (int i = 0; i < A.rows(); ++i) {
    double d2;
    tb.nearest(A.row(i).transpose(), &d2);
    ab += d2;
  }
  for (int i = 0; i < B.rows(); ++i) {
    double d2;
    ta.nearest(B.row(i).transpose(), &d2);
    ba += d2;
  }
  return (ab / A.rows() + ba / B.rows()) * 1e4;  // squared meters -> cm^2
}

ChamferReport chamfer_protocol(const ColoredMesh& pred, const ColoredMesh& gt, int samples,
                               bool use_vertices, uint64_t seed) {
  const ColoredMesh np = normalize_mesh(pred);
  const ColoredMesh ng = normalize_mesh(gt);
  const MatX3 pp = use_vertices ? np.vertices : sample_mesh(np, samples, seed);
  const MatX3 gp = use_vertices ? ng.vertices : sample_mesh(ng, samples, seed + 1);
  const IcpResult icp = icp_align(pp, gp);
  const MatX3 aligned = (pp * icp.rotation.transpose()).rowwise() + icp.translation.transpose();
  ChamferReport rep;
  rep.chamfer_cm2 = chamfer_distance(aligned, gp);
  rep.icp_iterations = icp.iterations;
  rep.icp_rmse = icp.rmse;
  return rep;
}

namespace {

void check_same_dims(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height)
    throw std::invalid_argument("image dimensions differ");
  if (a.width <= 0 || a.height <= 0) throw std::invalid_argument("empty image");
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  check_same_dims(a, b);
  double mse = 0.0;
  for (size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.pixels.size());
  if (mse <= 0.0) return 99.0;
  return std::min(99.0, -10.0 * std::log10(mse));
}

double ssim(const Image& a, const Image& b) {
  check_same_dims(a, b);
  constexpr int W = 11;
  if (a.width < W || a.height < W)
    throw std::invalid_argument("images too small for the 11x11 ssim window");
  double kern[W];
  double ksum = 0.0;
  for (int i = 0; i < W; ++i) {
    const double x = i - (W - 1) / 2.0;
    kern[i] = std::exp(-x * x / (2.0 * 1.5 * 1.5));
    ksum += kern[i];
  }
  for (int i = 0; i < W; ++i) kern[i] /= ksum;

  const int ow = a.width - W + 1, oh = a.height - W + 1;
  // Separable valid-region Gaussian filter.
  auto blur = [&](const std::vector<double>& src) {
    std::vector<double> tmp(static_cast<size_t>(ow) * a.height, 0.0);
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < ow; ++x) {
        double s = 0.0;
        for (int k = 0; k < W; ++k) s += kern[k] * src[static_cast<size_t>(y) * a.width + x + k];
        tmp[static_cast<size_t>(y) * ow + x] = s;
      }
    std::vector<double> out(static_cast<size_t>(ow) * oh, 0.0);
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        double s = 0.0;
        for (int k = 0; k < W; ++k) s += kern[k] * tmp[static_cast<size_t>(y + k) * ow + x];
        out[static_cast<size_t>(y) * ow + x] = s;
      }
    return out;
  };

  constexpr double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  const size_t n = static_cast<size_t>(a.width) * a.height;
  std::vector<double> pa(n), pb(n), paa(n), pbb(n), pab(n);
  double total = 0.0;
  for (int ch = 0; ch < 3; ++ch) {
    for (size_t i = 0; i < n; ++i) {
      pa[i] = a.pixels[3 * i + ch];
      pb[i] = b.pixels[3 * i + ch];
      paa[i] = pa[i] * pa[i];
      pbb[i] = pb[i] * pb[i];
      pab[i] = pa[i] * pb[i];
    }
    const auto ma = blur(pa), mb = blur(pb), maa = blur(paa), mbb = blur(pbb), mab = blur(pab);
    double acc = 0.0;
    for (size_t i = 0; i < ma.size(); ++i) {
      const double va = maa[i] - ma[i] * ma[i];
      const double vb = mbb[i] - mb[i] * mb[i];
      const double cov = mab[i] - ma[i] * mb[i];
      acc += ((2.0 * ma[i] * mb[i] + C1) * (2.0 * cov + C2)) /
             ((ma[i] * ma[i] + mb[i] * mb[i] + C1) * (va + vb + C2));
    }
    total += acc / static_cast<double>(ma.size());
  }
  return total / 3.0;
}

}  // namespace colorsurf
