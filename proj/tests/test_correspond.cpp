#include <set>

#include <gtest/gtest.h>

#include "don/correspond.hpp"
#include "fixture.hpp"

using namespace don;

namespace {

const test::SceneFixture& fixture() {
  static const test::SceneFixture fx = test::build_fixture("two_spheres.cfg");
  return fx;
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

Scene lateral_scene() {
  SceneSpec s;
  s.workspace = {Vec3(-1, -1, -0.05), Vec3(1, 1, 1)};
  s.objects.push_back({Shape::Sphere, Vec3(0, 0, 0.15), 0.15, 1, Role::Target});
  s.objects.push_back({Shape::Box, Vec3(0.5, 0.0, 0.2), 0.1, 2, Role::Target});
  return build_scene(s, 3);
}

}  // namespace

TEST(FindCorrespondence, SameFrameIsIdentity) {
  const auto& f = fixture().traj.frames[0];
  for (int r = 0; r < 64; r += 3)
    for (int c = 0; c < 64; c += 3) {
      PixelCoord u{static_cast<double>(c), static_cast<double>(r)};
      if (f.depth_at(u) <= 0.0) continue;
      auto ub = find_correspondence(u, f, f, 0.01);
      ASSERT_TRUE(ub);
      EXPECT_LT(pixel_distance(*ub, u), 1e-6);
    }
}

TEST(FindCorrespondence, LateralTranslationAgreesWithRendererOracle) {
  Scene scene = lateral_scene();
  Pose pa = Pose::look_at({-0.2, -1.2, 0.5}, {0, 0, 0.15});
  Pose pb(pa.rotation(), pa.translation() + pa.rotation() * Vec3(0.2, 0, 0));
  auto ra = render_frame(scene, pa, CameraIntrinsics{});
  auto rb = render_frame(scene, pb, CameraIntrinsics{});
  int checked = 0;
  for (int r = 0; r < 64; r += 2)
    for (int c = 0; c < 64; c += 2) {
      if (ra.ids(c, r) != 1) continue;
      PixelCoord u{static_cast<double>(c), static_cast<double>(r)};
      auto ub = find_correspondence(u, ra.frame, rb.frame, 0.01);
      if (!ub) continue;
      // Oracle: intersect the ray through u exactly and reproject the hit.
      Vec3 dir = pa.rotation() * Vec3((c - 31.5) / 70.0, (r - 31.5) / 70.0, 1.0);
      RayHit hit = scene.intersect(pa.translation(), dir);
      ASSERT_EQ(hit.object, 1);
      PixelCoord truth = project(pb.inverse().apply(pa.translation() + hit.t * dir), CameraIntrinsics{});
      EXPECT_LT(pixel_distance(*ub, truth), 0.5);
      // Equal viewing distance: mapping the rounded u_b back stays within a pixel.
      auto back = find_correspondence(to_coord(*nearest_pixel(*ub, rb.frame.intr)), rb.frame, ra.frame, 0.01);
      if (back) {
        EXPECT_LE(pixel_distance(*back, u), 1.0);
      }
      ++checked;
    }
  EXPECT_GT(checked, 30);
}

TEST(FindCorrespondence, OccludedPointHasNoMatch) {
  Scene scene = lateral_scene();
  // Frame b looks from behind the box, which hides part of the sphere.
  auto ra = render_frame(scene, Pose::look_at({-1.2, 0, 0.2}, {0, 0, 0.15}), CameraIntrinsics{});
  auto rb = render_frame(scene, Pose::look_at({1.2, 0, 0.2}, {0, 0, 0.15}), CameraIntrinsics{});
  const Pose& pb = rb.frame.pose;
  int occluded = 0;
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c) {
      if (ra.ids(c, r) != 1) continue;
      PixelCoord u{static_cast<double>(c), static_cast<double>(r)};
      Vec3 w = lift_to_world(u, ra.frame);
      auto px = nearest_pixel(project(pb.inverse().apply(w), CameraIntrinsics{}), CameraIntrinsics{});
      if (!px || rb.ids(px->col, px->row) != 2) continue;
      EXPECT_FALSE(find_correspondence(u, ra.frame, rb.frame, 0.01));
      ++occluded;
    }
  EXPECT_GT(occluded, 0);
}

TEST(FindCorrespondence, InvalidSourceDepth) {
  Scene scene = lateral_scene();
  auto r = render_frame(scene, Pose::look_at({-1.2, 0, 0.6}, {0, 0, 0.15}), CameraIntrinsics{});
  EXPECT_EQ(code_of([&] { find_correspondence({0, 0}, r.frame, r.frame, 0.01); }), Errc::InvalidSource);
}

TEST(Sampling, CardinalityAndMaskContract) {
  const auto& t = fixture().traj;
  SamplingConfig cfg{8, 4, 0.01, 5};
  PairSampler sampler(t, cfg);
  for (int k = 0; k < 20; ++k) {
    auto s = sampler.next();
    ASSERT_EQ(s.matches.size(), 8u);
    ASSERT_EQ(s.non_matches.size(), 8u);
    EXPECT_NE(s.frame_a, s.frame_b);
    const auto& fa = t.frames[static_cast<std::size_t>(s.frame_a)];
    const auto& fb = t.frames[static_cast<std::size_t>(s.frame_b)];
    for (std::size_t i = 0; i < s.matches.size(); ++i) {
      const auto& m = s.matches[i];
      EXPECT_TRUE(t.mask(static_cast<std::size_t>(s.frame_a), s.target_label)->test(static_cast<int>(m.u_a.u),
                                                                                      static_cast<int>(m.u_a.v)));
      auto again = find_correspondence(m.u_a, fa, fb, cfg.occlusion_tol);
      ASSERT_TRUE(again);
      EXPECT_EQ(*again, m.u_b);
      ASSERT_EQ(s.non_matches[i].size(), 4u);
      for (const auto& nm : s.non_matches[i]) EXPECT_GE(pixel_distance(nm, m.u_b), 2.0);
    }
  }
}

TEST(Sampling, DeterministicInSeed) {
  const auto& t = fixture().traj;
  SamplingConfig cfg{16, 4, 0.01, 9};
  auto a = sample_training_pair(t, cfg);
  auto b = sample_training_pair(t, cfg);
  ASSERT_EQ(a.matches.size(), b.matches.size());
  EXPECT_EQ(a.frame_a, b.frame_a);
  EXPECT_EQ(a.frame_b, b.frame_b);
  for (std::size_t i = 0; i < a.matches.size(); ++i) {
    EXPECT_EQ(a.matches[i].u_a, b.matches[i].u_a);
    EXPECT_EQ(a.matches[i].u_b, b.matches[i].u_b);
    EXPECT_EQ(a.non_matches[i], b.non_matches[i]);
  }
}

TEST(Sampling, EmptyLabelIsNeverChosen) {
  Trajectory t = fixture().traj;
  for (auto& per_frame : t.masks) per_frame[1].bits.fill(0);
  PairSampler sampler(t, {8, 2, 0.01, 1});
  for (int k = 0; k < 30; ++k) EXPECT_EQ(sampler.next().target_label, 1);
}

TEST(Sampling, NoCorrespondencesExhausts) {
  Trajectory t = fixture().traj;
  t.frames.resize(2);
  t.masks.resize(2);
  t.frames[1].depth.fill(0.0f);
  t.frames[0].depth.fill(0.0f);
  // Keep one valid pixel so frame a is drawable but never matches.
  t.frames[0].depth(0, 0) = 1.0f;
  for (auto& m : t.masks[0]) m.bits(0, 0) = 1;
  EXPECT_EQ(code_of([&] { sample_training_pair(t, {8, 2, 0.01, 1}); }), Errc::ExhaustedSampling);
}

TEST(Sampling, RejectsTrajectoriesWithoutMasks) {
  Trajectory t = fixture().traj;
  for (auto& per_frame : t.masks)
    for (auto& m : per_frame) m.bits.fill(0);
  EXPECT_EQ(code_of([&] { PairSampler(t, {}); }), Errc::EmptyMask);
}

TEST(Sampling, EpochVisitsEveryOrderedPairOnce) {
  const auto& t = fixture().traj;
  PairSampler sampler(t, {4, 2, 0.01, 3});
  std::set<std::pair<int, int>> seen;
  const std::size_t n = t.size() * (t.size() - 1);
  for (std::size_t i = 0; i < n; ++i) seen.insert(sampler.next_pair());
  EXPECT_EQ(seen.size(), n);
}

TEST(Sampling, BackgroundSamplesUseDistractorFrames) {
  const auto& fx = fixture();
  TrajectorySpec ts = trajectory_spec_from(fx.cfg);
  ts.n_frames = 3;
  SceneSpec clutter = fx.spec;
  clutter.objects = {{Shape::Box, Vec3(0, 0, 0.1), 0.1, 9, Role::Target}};
  Trajectory bg = make_background_trajectory(generate_trajectory(build_scene(clutter, 2), ts));
  PairSampler sampler(fx.traj, {8, 3, 0.01, 4});
  auto s = sampler.next_background(bg);
  EXPECT_TRUE(s.background_only);
  EXPECT_LT(s.frame_b, 3);
  ASSERT_EQ(s.matches.size(), 8u);
  for (const auto& nm : s.non_matches) EXPECT_EQ(nm.size(), 3u);
}
