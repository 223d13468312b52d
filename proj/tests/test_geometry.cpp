#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "don/geometry.hpp"

using namespace don;

namespace {

CameraIntrinsics cam(double f, double cx, double cy, int w = 128, int h = 128) {
  CameraIntrinsics k;
  k.fx = k.fy = f;
  k.cx = cx;
  k.cy = cy;
  k.width = w;
  k.height = h;
  return k;
}

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::InvalidArgument;
}

}  // namespace

TEST(Project, OpticalAxisHitsPrincipalPoint) {
  auto px = project({0, 0, 1}, cam(100, 64, 64));
  EXPECT_DOUBLE_EQ(px.u, 64.0);
  EXPECT_DOUBLE_EQ(px.v, 64.0);
}

TEST(Project, PinholeScalarCase) {
  auto px = project({0.1, -0.05, 2.0}, cam(100, 64, 48));
  EXPECT_NEAR(px.u, 69.0, 1e-12);
  EXPECT_NEAR(px.v, 45.5, 1e-12);
}

TEST(Project, RejectsPointsOnOrBehindCamera) {
  EXPECT_EQ(code_of([] { project({0, 0, -1}, cam(100, 64, 64)); }), Errc::NonPositiveDepth);
  EXPECT_EQ(code_of([] { project({0.3, 0.1, 0}, cam(100, 64, 64)); }), Errc::NonPositiveDepth);
}

TEST(Unproject, PrincipalPointLiftsToAxis) {
  Vec3 p = unproject({64, 64}, 1.0, cam(100, 64, 64));
  EXPECT_EQ(p, Vec3(0, 0, 1));
}

TEST(Unproject, InvertsTheProjectCase) {
  Vec3 p = unproject({69, 45.5}, 2.0, cam(100, 64, 48));
  EXPECT_NEAR(p.x(), 0.1, 1e-12);
  EXPECT_NEAR(p.y(), -0.05, 1e-12);
  EXPECT_DOUBLE_EQ(p.z(), 2.0);
}

TEST(Unproject, ZeroDepthIsTheInvalidSentinel) {
  EXPECT_EQ(code_of([] { unproject({10, 10}, 0.0, cam(100, 64, 64)); }), Errc::NonPositiveDepth);
}

TEST(Unproject, RoundTripProperty) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 2000; ++i) {
    auto k = cam(50 + 100 * u(rng), 10 + 100 * u(rng), 10 + 100 * u(rng));
    k.fy = 50 + 100 * u(rng);
    PixelCoord px{127 * u(rng), 127 * u(rng)};
    double d = 0.05 + 10 * u(rng);
    Vec3 p = unproject(px, d, k);
    EXPECT_DOUBLE_EQ(p.z(), d);
    auto back = project(p, k);
    EXPECT_LT(pixel_distance(px, back), 1e-9);
  }
}

TEST(Transform, IdentityLeavesPointsAlone) { EXPECT_EQ(transform(Pose::identity(), {1, 2, 3}), Vec3(1, 2, 3)); }

TEST(Transform, TranslationOnly) {
  EXPECT_EQ(transform(Pose::from_translation({0, 0, 0.5}), {1, 2, 3}), Vec3(1, 2, 3.5));
}

TEST(Transform, InverseRoundTrip) {
  Pose p = Pose::look_at({1.2, -0.4, 0.9}, {0, 0.1, 0.2});
  Vec3 q(0.3, -0.7, 2);
  EXPECT_LT((transform(p.inverse(), transform(p, q)) - q).norm(), 1e-12);
  EXPECT_LT((transform(p * p.inverse(), q) - q).norm(), 1e-12);
}

TEST(Transform, CompositionAppliesRightOperandFirst) {
  Pose a = Pose::look_at({1, 0, 1}, {0, 0, 0});
  Pose b = Pose::from_translation({0.1, 0.2, 0.3});
  Vec3 q(0.5, -0.5, 0.25);
  EXPECT_LT(((a * b).apply(q) - a.apply(b.apply(q))).norm(), 1e-12);
}

TEST(Pose, RejectsNonOrthonormalRotation) {
  Mat3 r = Mat3::Identity();
  r(0, 0) = 1.01;
  EXPECT_EQ(code_of([&] { Pose(r, Vec3::Zero()); }), Errc::InvalidArgument);
  Mat3 mirror = Mat3::Identity();
  mirror(2, 2) = -1;
  EXPECT_EQ(code_of([&] { Pose(mirror, Vec3::Zero()); }), Errc::InvalidArgument);
}

TEST(Pose, LookAtPutsTargetOnOpticalAxis) {
  Vec3 eye(0.8, 0.6, 1.0), target(0.1, -0.1, 0.2);
  Pose p = Pose::look_at(eye, target);
  Vec3 pc = p.inverse().apply(target);
  EXPECT_NEAR(pc.x(), 0.0, 1e-12);
  EXPECT_NEAR(pc.y(), 0.0, 1e-12);
  EXPECT_NEAR(pc.z(), (eye - target).norm(), 1e-12);
  // World up appears toward the top of the image (negative v).
  Vec3 above = p.inverse().apply(target + Vec3(0, 0, 0.1));
  EXPECT_LT(above.y(), 0.0);
}

TEST(Pose, LookAtStraightDownIsRejected) {
  EXPECT_EQ(code_of([] { Pose::look_at({0, 0, 2}, {0, 0, 0}); }), Errc::InvalidArgument);
}

TEST(NearestPixel, HalfUpRoundingAndBounds) {
  auto a = nearest_pixel({2.5, 3.49}, 64, 64);
  ASSERT_TRUE(a);
  EXPECT_EQ(*a, (PixelIndex{3, 3}));
  EXPECT_TRUE(nearest_pixel({-0.5, 0}, 64, 64));
  EXPECT_FALSE(nearest_pixel({-0.51, 0}, 64, 64));
  EXPECT_FALSE(nearest_pixel({63.5, 0}, 64, 64));
  EXPECT_TRUE(nearest_pixel({63.49, 63.49}, 64, 64));
}

TEST(Intrinsics, FieldOfViewFocalLength) {
  auto k = intrinsics_from_fov(64, 64, std::numbers::pi / 2);
  EXPECT_NEAR(k.fx, 32.0, 1e-12);
  EXPECT_DOUBLE_EQ(k.cx, 31.5);
  EXPECT_NO_THROW(k.validate());
}

TEST(Intrinsics, ValidationCatchesBadCalibration) {
  auto k = cam(100, 64, 64);
  k.fx = 0;
  EXPECT_EQ(code_of([&] { k.validate(); }), Errc::InvalidArgument);
  k = cam(100, 200, 64);
  EXPECT_EQ(code_of([&] { k.validate(); }), Errc::InvalidArgument);
}
