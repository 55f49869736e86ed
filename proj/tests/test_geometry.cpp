#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "colorsurf/geometry.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "colorsurf/rng.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace colorsurf;
using namespace colorsurf::testutil;

namespace {

Vec6 rand6(Rng& rng) {
  Vec6 r;
  for (int i = 0; i < 6; ++i) r[i] = rng.uniform(-1.0, 1.0);
  return r;
}

Mat3 random_rotation(Rng& rng) {
  // valid with probability 1; rejection keeps it airtight
  for (;;) {
    Vec6 r = rand6(rng);
    if (r.head<3>().norm() > 0.1 && r.head<3>().cross(r.tail<3>()).norm() > 0.1)
      return rot6d_to_matrix(r);
  }
}

}  // namespace

TEST_CASE("rot6d_to_matrix: canonical and scaled canonical basis give identity") {
  Vec6 r;
  r << 1, 0, 0, 0, 1, 0;
  CHECK_LT((rot6d_to_matrix(r) - Mat3::Identity()).norm(), 1e-15);
  r << 2, 0, 0, 0, 3, 0;
  CHECK_LT((rot6d_to_matrix(r) - Mat3::Identity()).norm(), 1e-15);
}

TEST_CASE("rot6d_to_matrix: orthonormal with det +1 on 100 random inputs") {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    Mat3 R = random_rotation(rng);
    CHECK_LT((R.transpose() * R - Mat3::Identity()).norm(), 1e-7);
    CHECK_EQ(R.determinant(), doctest::Approx(1.0).epsilon(1e-7));
  }
}

TEST_CASE("rot6d_to_matrix: scale invariance in the first 3-vector") {
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    Vec6 r = rand6(rng);
    if (r.head<3>().norm() < 0.1 || r.head<3>().cross(r.tail<3>()).norm() < 0.1) continue;
    Vec6 r4 = r;
    r4.head<3>() *= 4.0;  // power-of-two scale: bitwise identical result
    CHECK_EQ((rot6d_to_matrix(r) - rot6d_to_matrix(r4)).norm(), 0.0);
    Vec6 rg = r;
    rg.head<3>() *= 1.7;
    CHECK_LT((rot6d_to_matrix(r) - rot6d_to_matrix(rg)).norm(), 1e-12);
  }
}

TEST_CASE("rot6d_to_matrix: degenerate inputs throw") {
  Vec6 z = Vec6::Zero();
  CHECK_THROWS_AS(rot6d_to_matrix(z), std::invalid_argument);
  Vec6 par;
  par << 1, 0, 0, 2, 0, 0;  // second vector parallel to first
  CHECK_THROWS_AS(rot6d_to_matrix(par), std::invalid_argument);
  Vec6 z2;
  z2 << 1, 0, 0, 0, 0, 0;
  CHECK_THROWS_AS(rot6d_to_matrix(z2), std::invalid_argument);
}

TEST_CASE("matrix_to_rot6d round trip and rotation_angle") {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    Mat3 R = random_rotation(rng);
    CHECK_LT((rot6d_to_matrix(matrix_to_rot6d(R)) - R).norm(), 1e-12);
    CHECK_LT(rotation_angle(R, R), 1e-6);
  }
  Mat3 Rz = Eigen::AngleAxisd(0.3, Vec3::UnitZ()).toRotationMatrix();
  CHECK_EQ(rotation_angle(Mat3::Identity(), Rz), doctest::Approx(0.3).epsilon(1e-9));
}

TEST_CASE("ray_from_pixel: canonical camera and rigid translation") {
  CameraPose pose;  // identity rotation, zero translation, fx=fy=1, cx=cy=0
  Ray r = ray_from_pixel(pose, {0.0, 0.0}, 0.1, 2.0);
  CHECK_LT(r.origin.norm(), 1e-15);
  CHECK_LT((r.direction - Vec3(0, 0, 1)).norm(), 1e-15);
  CHECK_EQ(r.near, 0.1);
  CHECK_EQ(r.far, 2.0);

  CameraPose moved = pose;
  moved.translation = Vec3(0.3, -0.7, 2.0);
  Ray m = ray_from_pixel(moved, {0.0, 0.0}, 0.1, 2.0);
  CHECK_LT((m.origin - moved.translation).norm(), 1e-15);
  CHECK_LT((m.direction - r.direction).norm(), 1e-15);
}

TEST_CASE("ray_from_pixel: reprojects to the source pixel at near and far") {
  Rng rng(4);
  CameraPose pose;
  pose.rot6d = matrix_to_rot6d(random_rotation(rng));
  pose.translation = Vec3(0.2, -0.4, 1.3);
  pose.intrinsics << 120.0, 0, 63.5, 0, 118.0, 60.5, 0, 0, 1;
  for (int i = 0; i < 8; ++i) {
    Eigen::Vector2d px(rng.uniform(0.0, 127.0), rng.uniform(0.0, 127.0));
    Ray r = ray_from_pixel(pose, px, 0.5, 3.0);
    CHECK_EQ(r.direction.norm(), doctest::Approx(1.0).epsilon(1e-9));
    for (double z : {r.near, r.far}) {
      Eigen::Vector2d back = project_point(pose, r.origin + z * r.direction);
      CHECK_LT((back - px).norm(), 1e-6);
    }
  }
}

TEST_CASE("ray_from_pixel: non-invertible intrinsics throw") {
  CameraPose pose;
  pose.intrinsics(0, 0) = 0.0;  // fx = 0
  CHECK_THROWS(ray_from_pixel(pose, {1.0, 1.0}, 0.1, 1.0));
}

TEST_CASE("positional_encode: zeros, sign case, and lengths") {
  EncodingSpec spec{6, true};
  Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd e = positional_encode(x, spec);
  REQUIRE_EQ(e.size(), 39);  // 3 + 3*2*6
  CHECK_LT(e.head(3).norm(), 1e-15);
  for (int k = 0; k < 6; ++k) {
    CHECK_LT(e.segment(3 + 6 * k, 3).norm(), 1e-15);               // sin block
    CHECK_LT((e.segment(6 + 6 * k, 3) - Eigen::VectorXd::Ones(3)).norm(), 1e-15);  // cos
  }

  EncodingSpec one{1, false};
  Eigen::VectorXd y(3);
  y << 1, 0, 0;
  Eigen::VectorXd f = positional_encode(y, one);
  REQUIRE_EQ(f.size(), 6);
  Eigen::VectorXd expect(6);
  expect << 0, 0, 0, -1, 1, 1;  // sin(pi),0,0,cos(pi),1,1
  CHECK_LT((f - expect).norm(), 1e-12);

  CHECK_EQ(EncodingSpec{4, true}.output_dim(3), 27);
  CHECK_EQ(positional_encode(y, {4, true}).size(), 27);
}

TEST_CASE("positional_encode: sin/cos blocks bounded, rows variant consistent") {
  Rng rng(5);
  EncodingSpec spec{4, true};
  Eigen::MatrixXd X(5, 3);
  for (int i = 0; i < 15; ++i) X.data()[i] = rng.uniform(-2.0, 2.0);
  Eigen::MatrixXd E = positional_encode_rows(X, spec);
  REQUIRE_EQ(E.cols(), 27);
  for (int i = 0; i < 5; ++i) {
    Eigen::VectorXd row = positional_encode(X.row(i).transpose(), spec);
    CHECK_LT((E.row(i).transpose() - row).norm(), 1e-15);
    CHECK_LE(row.tail(24).cwiseAbs().maxCoeff(), 1.0 + 1e-12);
  }
}

TEST_CASE("sigmoid / inverse_sigmoid contract") {
  CHECK_EQ(sigmoid(0.0), 0.5);
  CHECK_EQ(inverse_sigmoid(0.5), 0.0);
  CHECK_EQ(inverse_sigmoid(0.8), doctest::Approx(1.386294).epsilon(1e-6));
  for (double y : {1e-6, 0.001, 0.25, 0.5, 0.99, 1.0 - 1e-6})
    CHECK_EQ(sigmoid(inverse_sigmoid(y)), doctest::Approx(y).epsilon(1e-6));
  for (double x = -10.0; x <= 10.0; x += 0.625)
    CHECK_LT(std::abs(inverse_sigmoid(sigmoid(x)) - x), 1e-5);
  // boundary inputs absorbed by the clamp
  CHECK(std::isfinite(inverse_sigmoid(0.0)));
  CHECK(std::isfinite(inverse_sigmoid(1.0)));
  // strict monotonicity
  double prev = sigmoid(-20.0);
  for (double x = -19.5; x <= 20.0; x += 0.5) {
    double cur = sigmoid(x);
    CHECK_GT(cur, prev);
    prev = cur;
  }
}

TEST_CASE("ray_sphere_interval: hit, miss, inside, behind") {
  auto hit = ray_sphere_interval(Vec3(0, 0, -2), Vec3(0, 0, 1), 1.0);
  REQUIRE(hit.has_value());
  CHECK_EQ(hit->first, doctest::Approx(1.0).epsilon(1e-12));
  CHECK_EQ(hit->second, doctest::Approx(3.0).epsilon(1e-12));

  CHECK_FALSE(ray_sphere_interval(Vec3(0, 2, -2), Vec3(0, 0, 1), 1.0).has_value());
  CHECK_FALSE(ray_sphere_interval(Vec3(0, 0, -2), Vec3(0, 0, -1), 1.0).has_value());

  auto inside = ray_sphere_interval(Vec3::Zero(), Vec3(1, 0, 0), 1.0);
  REQUIRE(inside.has_value());
  CHECK_EQ(inside->first, 1e-4);  // clamped to min_t
  CHECK_EQ(inside->second, doctest::Approx(1.0).epsilon(1e-12));

  // tangent-ish grazing ray: either a valid tiny interval or a miss, never inverted
  auto graze = ray_sphere_interval(Vec3(0, 1.0 - 1e-12, -2), Vec3(0, 0, 1), 1.0);
  if (graze) CHECK_LE(graze->first, graze->second);
}
