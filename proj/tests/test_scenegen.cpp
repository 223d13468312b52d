#include <cmath>
#include <optional>

#include <gtest/gtest.h>

#include "don/scenegen.hpp"

using namespace don;

namespace {

SceneSpec open_spec() {
  SceneSpec s;
  s.workspace = {Vec3(-5, -5, -5), Vec3(5, 5, 5)};
  s.ground_plane_z = -10.0;
  return s;
}

CameraIntrinsics centered_camera() {
  CameraIntrinsics k;
  k.cx = k.cy = 32.0;
  return k;
}

/// Independent ray-sphere solve for the depth at pixel (col,row) of an
/// identity-pose camera; nullopt when the ray misses.
std::optional<double> sphere_depth(const Vec3& center, double radius, const CameraIntrinsics& k, int col, int row) {
  Vec3 dir((col - k.cx) / k.fx, (row - k.cy) / k.fy, 1.0);
  double a = dir.dot(dir), b = -2.0 * dir.dot(center), c = center.dot(center) - radius * radius;
  double disc = b * b - 4 * a * c;
  if (disc < 0) return std::nullopt;
  return (-b - std::sqrt(disc)) / (2 * a);  // dir has unit z, so t is the depth
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

TEST(BuildScene, RejectsSpecsWithoutTargets) {
  SceneSpec s = open_spec();
  EXPECT_EQ(code_of([&] { build_scene(s, 1); }), Errc::InvalidSpec);
  s.objects.push_back({Shape::Sphere, Vec3::Zero(), 0.2, 1, Role::Distractor});
  EXPECT_EQ(code_of([&] { build_scene(s, 1); }), Errc::InvalidSpec);
}

TEST(BuildScene, RejectsObjectsOutsideWorkspace) {
  SceneSpec s = open_spec();
  s.objects.push_back({Shape::Sphere, Vec3(6, 0, 0), 0.2, 1, Role::Target});
  EXPECT_EQ(code_of([&] { build_scene(s, 1); }), Errc::InvalidSpec);
}

TEST(BuildScene, KeepsObjectCountAndIsDeterministic) {
  SceneSpec s = open_spec();
  s.objects.push_back({Shape::Sphere, Vec3(0, 0, 2), 0.5, 1, Role::Target});
  s.objects.push_back({Shape::Box, Vec3(1, 0, 3), 0.3, 2, Role::Distractor});
  Scene a = build_scene(s, 7), b = build_scene(s, 7), c = build_scene(s, 8);
  EXPECT_EQ(a.object_count(), 2);
  EXPECT_EQ(a.spec_fingerprint(), b.spec_fingerprint());
  EXPECT_NE(a.spec_fingerprint(), c.spec_fingerprint());
  auto ra = render_frame(a, Pose::identity(), centered_camera());
  auto rb = render_frame(b, Pose::identity(), centered_camera());
  EXPECT_EQ(ra.frame, rb.frame);
  EXPECT_EQ(ra.ids.data().size(), rb.ids.data().size());
  EXPECT_TRUE(std::equal(ra.ids.data().begin(), ra.ids.data().end(), rb.ids.data().begin()));
}

TEST(RenderFrame, UnitSphereCenterDepth) {
  SceneSpec s = open_spec();
  s.objects.push_back({Shape::Sphere, Vec3(0, 0, 2), 1.0, 1, Role::Target});
  auto r = render_frame(build_scene(s, 7), Pose::identity(), centered_camera());
  EXPECT_NEAR(r.frame.depth(32, 32), 1.0, 1e-6);
  EXPECT_EQ(r.ids(32, 32), 1);
}

TEST(RenderFrame, DepthMatchesIndependentRaySphereSolve) {
  SceneSpec s = open_spec();
  Vec3 center(0.1, -0.05, 1.5);
  s.objects.push_back({Shape::Sphere, center, 0.4, 1, Role::Target});
  auto k = centered_camera();
  auto r = render_frame(build_scene(s, 7), Pose::identity(), k);
  int hits = 0;
  for (int row = 0; row < k.height; ++row)
    for (int col = 0; col < k.width; ++col) {
      auto d = sphere_depth(center, 0.4, k, col, row);
      if (d) {
        ++hits;
        EXPECT_NEAR(r.frame.depth(col, row), *d, 1e-5);
        EXPECT_EQ(r.ids(col, row), 1);
      } else {
        EXPECT_EQ(r.frame.depth(col, row), 0.0f);
        EXPECT_EQ(r.ids(col, row), 0);
      }
    }
  EXPECT_GT(hits, 100);
}

TEST(RenderFrame, BoxTopFaceDepthFromAbove) {
  SceneSpec s;
  s.objects.push_back({Shape::Box, Vec3(0, 0, 0.1), 0.1, 1, Role::Target});
  Pose above = Pose::look_at({0.0, 0.001, 1.2}, {0, 0, 0});
  auto r = render_frame(build_scene(s, 1), above, centered_camera());
  // The optical axis meets the top face at z = 0.2.
  Vec3 fwd = above.rotation().col(2);
  double t = (0.2 - 1.2) / fwd.z();
  EXPECT_NEAR(r.frame.depth(32, 32), t, 1e-5);
  EXPECT_EQ(r.ids(32, 32), 1);
}

TEST(RenderFrame, NearerObjectWinsTheRay) {
  SceneSpec s = open_spec();
  s.objects.push_back({Shape::Sphere, Vec3(0, 0, 4), 0.5, 1, Role::Target});
  s.objects.push_back({Shape::Sphere, Vec3(0, 0, 2), 0.3, 2, Role::Target});
  auto r = render_frame(build_scene(s, 3), Pose::identity(), centered_camera());
  EXPECT_EQ(r.ids(32, 32), 2);
  EXPECT_NEAR(r.frame.depth(32, 32), 1.7, 1e-6);
}

TEST(RenderFrame, MissesAreDepthZeroAndIdZero) {
  SceneSpec s = open_spec();
  s.objects.push_back({Shape::Sphere, Vec3(0, 0, 2), 0.1, 1, Role::Target});
  auto r = render_frame(build_scene(s, 3), Pose::identity(), centered_camera());
  EXPECT_EQ(r.frame.depth(0, 0), 0.0f);
  EXPECT_EQ(r.ids(0, 0), 0);
}

TEST(RenderFrame, GroundBeyondMaximumRangeIsNoReturn) {
  SceneSpec s;
  s.objects.push_back({Shape::Sphere, Vec3(0, 0, 0.2), 0.2, 1, Role::Target});
  // Nearly horizontal camera: rows near the horizon hit the plane far away.
  Pose p = Pose::look_at({-1.0, 0, 0.5}, {0.0, 0, 0.45});
  auto r = render_frame(build_scene(s, 3), p, centered_camera());
  int zero = 0;
  for (float d : r.frame.depth.data()) {
    EXPECT_LE(d, Scene::kMaxRange);
    zero += d == 0.0f;
  }
  EXPECT_GT(zero, 0);
}

TEST(RenderFrame, ColorsAreQuantizedToBytes) {
  SceneSpec s;
  s.objects.push_back({Shape::Sphere, Vec3(0, 0, 0.2), 0.2, 1, Role::Target});
  auto r = render_frame(build_scene(s, 3), Pose::look_at({1, 0.5, 0.8}, {0, 0, 0.2}), centered_camera());
  for (double c : r.frame.rgb.data()) {
    EXPECT_GE(c, 0.0);
    EXPECT_LE(c, 1.0);
    EXPECT_DOUBLE_EQ(c * 255.0, std::round(c * 255.0));
  }
}

TEST(RenderFrame, WorldLightGivesViewIndependentColor) {
  SceneSpec s;
  s.objects.push_back({Shape::Sphere, Vec3(0, 0, 0.2), 0.2, 5, Role::Target});
  Scene scene = build_scene(s, 3);
  Vec3 p(0, 0, 0.4), n(0, 0, 1);
  Vec3 c1 = scene.shade(p, 1, n, scene.light_direction(Pose::look_at({1, 0, 1}, {0, 0, 0}).rotation()));
  Vec3 c2 = scene.shade(p, 1, n, scene.light_direction(Pose::look_at({0, 1, 2}, {0, 0, 0}).rotation()));
  EXPECT_EQ(c1, c2);
}

TEST(RenderFrame, CameraInsideObjectIsRejected) {
  SceneSpec s = open_spec();
  s.objects.push_back({Shape::Sphere, Vec3::Zero(), 0.5, 1, Role::Target});
  EXPECT_EQ(code_of([&] { render_frame(build_scene(s, 1), Pose::identity(), centered_camera()); }),
            Errc::CameraInsideGeometry);
}

TEST(Texture, SeedsChangeAppearanceNotGeometry) {
  SceneSpec a;
  a.objects.push_back({Shape::Sphere, Vec3(0, 0, 0.2), 0.2, 1, Role::Target});
  SceneSpec b = a;
  b.objects[0].texture_seed = 2;
  Pose p = Pose::look_at({1, 0.3, 0.7}, {0, 0, 0.2});
  auto ra = render_frame(build_scene(a, 3), p, centered_camera());
  auto rb = render_frame(build_scene(b, 3), p, centered_camera());
  EXPECT_EQ(ra.frame.depth, rb.frame.depth);
  EXPECT_NE(ra.frame.rgb, rb.frame.rgb);
}

namespace {

Scene small_scene() {
  SceneSpec s;
  s.objects.push_back({Shape::Sphere, Vec3(0, 0, 0.15), 0.15, 1, Role::Target});
  return build_scene(s, 7);
}

}  // namespace

TEST(GenerateTrajectory, DeterministicInSeed) {
  Scene scene = small_scene();
  TrajectorySpec t;
  t.n_frames = 10;
  t.seed = 3;
  auto a = generate_trajectory(scene, t);
  auto b = generate_trajectory(scene, t);
  ASSERT_EQ(a.size(), 10u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].frame, b[i].frame);
    EXPECT_EQ(a[i].frame.frame_id, static_cast<int>(i));
  }
  t.seed = 4;
  EXPECT_NE(generate_trajectory(scene, t)[0].frame.pose, a[0].frame.pose);
}

TEST(GenerateTrajectory, FixedRadiusOrbit) {
  TrajectorySpec t;
  t.n_frames = 12;
  t.orbit.center = Vec3(0.1, 0, 0.1);
  t.orbit.radius_min = t.orbit.radius_max = 2.0;
  for (const auto& p : orbit_poses(t)) EXPECT_NEAR((p.translation() - t.orbit.center).norm(), 2.0, 1e-9);
}

TEST(GenerateTrajectory, RadiusRangeIsExplored) {
  TrajectorySpec t;
  t.n_frames = 30;
  t.seed = 3;
  t.orbit.radius_min = 1.0;
  t.orbit.radius_max = 2.0;
  double lo = 1e9, hi = 0;
  for (const auto& p : orbit_poses(t)) {
    double r = (p.translation() - t.orbit.center).norm();
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  EXPECT_GE(hi / lo, 1.5);
}

TEST(GenerateTrajectory, CamerasAimAtTheOrbitCenter) {
  TrajectorySpec t;
  t.orbit.center = Vec3(0, 0, 0.15);
  for (const auto& p : orbit_poses(t)) {
    auto px = project(p.inverse().apply(t.orbit.center), CameraIntrinsics{});
    EXPECT_NEAR(px.u, 31.5, 1e-9);
    EXPECT_NEAR(px.v, 31.5, 1e-9);
  }
}

TEST(GenerateTrajectory, ValidatesSpec) {
  Scene scene = small_scene();
  TrajectorySpec t;
  t.n_frames = 1;
  EXPECT_EQ(code_of([&] { generate_trajectory(scene, t); }), Errc::InvalidSpec);
  t.n_frames = 5;
  t.orbit.radius_min = 0.1;
  EXPECT_EQ(code_of([&] { generate_trajectory(scene, t); }), Errc::InvalidSpec);
}
