#include "colorsurf/geometry.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace colorsurf {

Mat3 rot6d_to_matrix(const Vec6& r) {
  Vec3 a1 = r.head<3>(), a2 = r.tail<3>();
  double n1 = a1.norm();
  if (n1 < 1e-12) throw std::invalid_argument("rot6d: first vector is zero");
  Vec3 b1 = a1 / n1;
  Vec3 u2 = a2 - b1.dot(a2) * b1;
  double n2 = u2.norm();
  if (n2 < 1e-12) throw std::invalid_argument("rot6d: vectors are parallel or second is zero");
  Vec3 b2 = u2 / n2;
  Mat3 R;
  R.col(0) = b1;
  R.col(1) = b2;
  R.col(2) = b1.cross(b2);
  return R;
}

Vec6 matrix_to_rot6d(const Mat3& R) {
  Vec6 r;
  r.head<3>() = R.col(0);
  r.tail<3>() = R.col(1);
  return r;
}

double rotation_angle(const Mat3& a, const Mat3& b) {
  double c = ((a.transpose() * b).trace() - 1.0) * 0.5;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

Ray ray_from_pixel(const CameraPose& pose, const Eigen::Vector2d& pixel,
                   double near, double far) {
  double det = pose.intrinsics.determinant();
  if (std::abs(det) < 1e-12) throw std::invalid_argument("ray_from_pixel: non-invertible intrinsics");
  Vec3 dir_cam = pose.intrinsics.inverse() * Vec3(pixel.x(), pixel.y(), 1.0);
  Mat3 R = rot6d_to_matrix(pose.rot6d);
  Ray ray;
  ray.origin = pose.translation;
  ray.direction = (R * dir_cam).normalized();
  ray.near = near;
  ray.far = far;
  return ray;
}

Eigen::Vector2d project_point(const CameraPose& pose, const Vec3& p) {
  Mat3 R = rot6d_to_matrix(pose.rot6d);
  Vec3 cam = R.transpose() * (p - pose.translation);
  if (cam.z() <= 0.0) throw std::invalid_argument("project_point: point behind camera");
  Vec3 pix = pose.intrinsics * (cam / cam.z());
  return {pix.x(), pix.y()};
}

Eigen::VectorXd positional_encode(const Eigen::VectorXd& x, const EncodingSpec& spec) {
  int d = static_cast<int>(x.size());
  Eigen::VectorXd out(spec.output_dim(d));
  int at = 0;
  if (spec.include_input) {
    out.head(d) = x;
    at = d;
  }
  for (int k = 0; k < spec.num_frequencies; ++k) {
    double f = std::ldexp(M_PI, k);  // 2^k * pi
    for (int i = 0; i < d; ++i) out[at + i] = std::sin(f * x[i]);
    at += d;
    for (int i = 0; i < d; ++i) out[at + i] = std::cos(f * x[i]);
    at += d;
  }
  return out;
}

Eigen::MatrixXd positional_encode_rows(const Eigen::MatrixXd& X, const EncodingSpec& spec) {
  int d = static_cast<int>(X.cols());
  Eigen::MatrixXd out(X.rows(), spec.output_dim(d));
  int at = 0;
  if (spec.include_input) {
    out.leftCols(d) = X;
    at = d;
  }
  for (int k = 0; k < spec.num_frequencies; ++k) {
    double f = std::ldexp(M_PI, k);
    out.middleCols(at, d) = (f * X.array()).sin();
    at += d;
    out.middleCols(at, d) = (f * X.array()).cos();
    at += d;
  }
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double inverse_sigmoid(double y) {
  constexpr double eps = 1e-6;
  y = std::clamp(y, eps, 1.0 - eps);
  return std::log(y / (1.0 - y));
}

std::optional<std::pair<double, double>> ray_sphere_interval(
    const Vec3& origin, const Vec3& dir, double radius, double min_t) {
  // |o + t d|^2 = r^2 with |d| = 1
  double b = origin.dot(dir);
  double c = origin.squaredNorm() - radius * radius;
  double disc = b * b - c;
  if (disc <= 0.0) return std::nullopt;
  double s = std::sqrt(disc);
  double t0 = -b - s, t1 = -b + s;
  if (t1 <= min_t) return std::nullopt;
  return std::make_pair(std::max(t0, min_t), t1);
}

}  // namespace colorsurf
