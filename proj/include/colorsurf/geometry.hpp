#pragma once

#include <Eigen/Core>
#include <optional>
#include <utility>

namespace colorsurf {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();  // unit norm
  double near = 0.0;
  double far = 1.0;
};

// Camera-to-world pose: x_world = R(rot6d) * x_cam + translation.
struct CameraPose {
  Vec6 rot6d = (Vec6() << 1, 0, 0, 0, 1, 0).finished();
  Vec3 translation = Vec3::Zero();
  Mat3 intrinsics = Mat3::Identity();  // [[fx,0,cx],[0,fy,cy],[0,0,1]]
};

struct EncodingSpec {
  int num_frequencies = 0;
  bool include_input = true;
  int output_dim(int input_dim) const {
    return input_dim * (include_input ? 1 : 0) + input_dim * 2 * num_frequencies;
  }
};

// Gram-Schmidt of the two 3-vectors in r; columns (b1, b2, b1 x b2).
// Throws std::invalid_argument on degenerate input.
Mat3 rot6d_to_matrix(const Vec6& r);

// Inverse embedding: first two columns of R flattened (rot6d_to_matrix of it
// recovers R for any rotation matrix).
Vec6 matrix_to_rot6d(const Mat3& R);

// Geodesic angle between two rotations, radians.
double rotation_angle(const Mat3& a, const Mat3& b);

// Back-projects a pixel to a world ray. Throws on non-invertible intrinsics.
Ray ray_from_pixel(const CameraPose& pose, const Eigen::Vector2d& pixel,
                   double near, double far);

// Projects a world point to pixel coordinates (oracle for ray_from_pixel).
Eigen::Vector2d project_point(const CameraPose& pose, const Vec3& p);

// [x? | sin(2^0 pi x) | cos(2^0 pi x) | ... | sin(2^{L-1} pi x) | cos(...)]
Eigen::VectorXd positional_encode(const Eigen::VectorXd& x, const EncodingSpec& spec);

// Row-wise encoding of an N x d matrix -> N x spec.output_dim(d).
Eigen::MatrixXd positional_encode_rows(const Eigen::MatrixXd& X, const EncodingSpec& spec);

double sigmoid(double x);
// Clamps y to [1e-6, 1 - 1e-6] before the logit.
double inverse_sigmoid(double y);

// Intersection interval of a ray (unit direction) with a sphere at the origin.
// Returns {t_near, t_far} with t_far > 0, t_near clamped to >= min_t, or
// nullopt if the ray misses or the sphere is entirely behind the origin.
std::optional<std::pair<double, double>> ray_sphere_interval(
    const Vec3& origin, const Vec3& dir, double radius, double min_t = 1e-4);

}  // namespace colorsurf
