#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "don/keypoints.hpp"

using namespace don;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::InvalidArgument;
}

ObjectMask box_mask(int label, int c0, int r0, int c1, int r1, int w = 16, int h = 12) {
  ObjectMask m;
  m.object_label = label;
  m.frame_id = 3;
  m.bits = BitMask(w, h, 1);
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c) m.bits(c, r) = 1;
  return m;
}

DescriptorMap ramp_map(int w, int h) {
  DescriptorMap d(w, h, 2);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      d.at(c, r)[0] = c;
      d.at(c, r)[1] = r;
    }
  return d;
}

Frame flat_frame(int w, int h, float depth) {
  Frame f;
  f.intr.width = w;
  f.intr.height = h;
  f.intr.fx = f.intr.fy = 50.0;
  f.intr.cx = (w - 1) / 2.0;
  f.intr.cy = (h - 1) / 2.0;
  f.rgb = RgbImage(w, h, 3);
  f.depth = DepthImage(w, h, 1, depth);
  return f;
}

}  // namespace

TEST(Activation, UniformMapIsUniform) {
  DescriptorMap d(5, 4, 3, 0.7);
  std::vector<double> ref{0.7, 0.7, 0.7};
  auto act = activation_map(d, ref, 0.05);
  for (double v : act.values) EXPECT_NEAR(v, 1.0 / 20, 1e-15);
}

TEST(Activation, SumsToOneAndPeaksAtTheNearestDescriptor) {
  auto d = ramp_map(9, 7);
  std::vector<double> ref{6.2, 1.9};
  auto act = activation_map(d, ref, 0.5);
  double sum = 0;
  for (double v : act.values) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  auto kp = extract_keypoint(act, d, ref);
  EXPECT_EQ(kp.pixel, (PixelCoord{6, 2}));
  EXPECT_EQ(kp.confidence, *std::max_element(act.values.begin(), act.values.end()));
}

TEST(Activation, LowTemperatureConcentratesOnTheMatch) {
  DescriptorMap d(3, 1, 1);
  d.at(0, 0)[0] = 0.0;
  d.at(1, 0)[0] = 1.0;
  d.at(2, 0)[0] = 2.0;
  std::vector<double> ref{1.0};
  auto act = activation_map(d, ref, 0.01);
  EXPECT_GT(act.at(1, 0), 0.99);
}

TEST(Activation, DistancesAreScaledBySqrtD) {
  DescriptorMap d(1, 1, 4, 0.0);
  std::vector<double> ref{1, 1, 1, 1};
  EXPECT_DOUBLE_EQ(distance_map(d, ref)[0], 1.0);
  std::vector<double> bad{1, 1};
  EXPECT_EQ(code_of([&] { distance_map(d, bad); }), Errc::DimensionMismatch);
  EXPECT_EQ(code_of([&] { activation_map(d, ref, 0.0); }), Errc::InvalidArgument);
}

TEST(ExtractKeypoint, TiesGoToLowestRowMajorIndex) {
  DescriptorMap d(4, 3, 1, 5.0);
  d.at(2, 1)[0] = 0.0;
  d.at(1, 2)[0] = 0.0;
  d.at(3, 0)[0] = 0.0;
  std::vector<double> ref{0.0};
  auto kp = extract_keypoint(activation_map(d, ref, 0.05), d, ref);
  EXPECT_EQ(kp.pixel, (PixelCoord{3, 0}));
}

TEST(NormalizePixels, MapsCornersAndCenter) {
  auto a = normalize_pixels({32, 0}, 65, 65);
  EXPECT_DOUBLE_EQ(a[0], 0.0);
  EXPECT_DOUBLE_EQ(a[1], -1.0);
  auto b = normalize_pixels({64, 64}, 65, 65);
  EXPECT_DOUBLE_EQ(b[0], 1.0);
  EXPECT_DOUBLE_EQ(b[1], 1.0);
  auto c = normalize_pixels({0, 31.5}, 64, 64);
  EXPECT_DOUBLE_EQ(c[0], -1.0);
  EXPECT_DOUBLE_EQ(c[1], 0.0);
}

TEST(NormalizePixels, RejectsOutsidePixels) {
  EXPECT_EQ(code_of([] { normalize_pixels({-0.1, 3}, 64, 64); }), Errc::OutOfBounds);
  EXPECT_EQ(code_of([] { normalize_pixels({3, 63.5}, 64, 64); }), Errc::OutOfBounds);
  EXPECT_EQ(code_of([] { normalize_pixels({0, 0}, 1, 64); }), Errc::InvalidArgument);
}

TEST(LiftKeypoint, CameraFrameUnprojects) {
  Frame f = flat_frame(11, 9, 2.0f);
  Keypoint kp;
  kp.pixel = {8, 2};
  auto out = lift_keypoint(kp, f, LiftMode::CameraFrame);
  EXPECT_EQ(out.flags, 0u);
  EXPECT_DOUBLE_EQ(out.depth, 2.0);
  EXPECT_NEAR(out.lift.x(), (8 - 5.0) / 50.0 * 2.0, 1e-12);
  EXPECT_NEAR(out.lift.y(), (2 - 4.0) / 50.0 * 2.0, 1e-12);
  EXPECT_DOUBLE_EQ(out.lift.z(), 2.0);
}

TEST(LiftKeypoint, DepthAppendUsesNormalizedCoordinates) {
  Frame f = flat_frame(11, 9, 1.5f);
  Keypoint kp;
  kp.pixel = {10, 0};
  auto out = lift_keypoint(kp, f, LiftMode::DepthAppend);
  EXPECT_EQ(out.lift, Vec3(1.0, -1.0, 1.5));
}

TEST(LiftKeypoint, MissingDepthFallsBackToNeighborThenMedian) {
  Frame f = flat_frame(11, 9, 0.0f);
  f.depth(4, 4) = 1.25f;
  f.depth(9, 8) = 3.0f;
  f.depth(0, 0) = 2.0f;
  Keypoint kp;
  kp.pixel = {5, 5};
  auto near = lift_keypoint(kp, f, LiftMode::CameraFrame);
  EXPECT_EQ(near.flags, static_cast<std::uint32_t>(kDepthFromNeighbor));
  EXPECT_DOUBLE_EQ(near.depth, 1.25);

  kp.pixel = {6, 1};
  auto far = lift_keypoint(kp, f, LiftMode::CameraFrame);
  EXPECT_EQ(far.flags, static_cast<std::uint32_t>(kDepthFromMedian));
  EXPECT_EQ(far.depth, 0.0);
  EXPECT_DOUBLE_EQ(far.lift.z(), 2.0);
}

TEST(SelectReferences, KPerObjectInsideMasks) {
  DescriptorMap d = ramp_map(16, 12);
  std::vector<ObjectMask> masks{box_mask(1, 1, 1, 5, 4), box_mask(2, 9, 6, 14, 10)};
  auto refs = select_references(d, masks, 5, 17);
  ASSERT_EQ(refs.size(), 10u);
  std::set<std::pair<int, int>> unique;
  for (const auto& e : refs.entries) {
    const auto& m = masks[static_cast<std::size_t>(e.object_label - 1)];
    EXPECT_TRUE(m.test(static_cast<int>(e.pixel.u), static_cast<int>(e.pixel.v)));
    EXPECT_EQ(e.frame_id, 3);
    EXPECT_EQ(e.descriptor, (std::vector<double>{e.pixel.u, e.pixel.v}));
    unique.insert({static_cast<int>(e.pixel.u), static_cast<int>(e.pixel.v)});
  }
  EXPECT_EQ(unique.size(), 10u);
  auto again = select_references(d, masks, 5, 17);
  for (std::size_t i = 0; i < refs.size(); ++i) EXPECT_EQ(refs.entries[i].pixel, again.entries[i].pixel);
}

TEST(SelectReferences, SmallMaskSamplesWithReplacement) {
  DescriptorMap d = ramp_map(16, 12);
  std::vector<ObjectMask> masks{box_mask(1, 2, 2, 2, 3)};
  EXPECT_EQ(select_references(d, masks, 6, 1).size(), 6u);
}

TEST(SelectReferences, EmptyMaskAndBadK) {
  DescriptorMap d = ramp_map(16, 12);
  std::vector<ObjectMask> masks{box_mask(1, 2, 2, 1, 1)};
  EXPECT_EQ(code_of([&] { select_references(d, masks, 2, 1); }), Errc::EmptyMask);
  EXPECT_EQ(code_of([&] { select_references(d, masks, 0, 1); }), Errc::InvalidArgument);
}

TEST(SelectReferences, ManualPicks) {
  DescriptorMap d = ramp_map(16, 12);
  std::vector<ObjectMask> masks{box_mask(1, 1, 1, 5, 4), box_mask(2, 9, 6, 14, 10)};
  std::vector<ManualPick> good{{1, {2, 2}}, {2, {10.2, 7.4}}};
  auto refs = select_references(d, masks, good);
  ASSERT_EQ(refs.size(), 2u);
  EXPECT_EQ(refs.entries[1].pixel, (PixelCoord{10, 7}));
  std::vector<ManualPick> outside{{1, {2, 2}}, {2, {2, 2}}};
  EXPECT_EQ(code_of([&] { select_references(d, masks, outside); }), Errc::ManualOutsideMask);
  std::vector<ManualPick> uneven{{1, {2, 2}}, {1, {3, 3}}, {2, {10, 7}}};
  EXPECT_EQ(code_of([&] { select_references(d, masks, uneven); }), Errc::InvalidArgument);
}

TEST(ExtractKeypoints, OnePerReferenceWithUncertaintyFlag) {
  DescriptorMap d = ramp_map(11, 9);
  Frame f = flat_frame(11, 9, 1.0f);
  ReferenceSet refs;
  refs.entries.push_back({{3, 4}, 1, 0, {3, 4}});
  refs.entries.push_back({{30, 40}, 2, 0, {0, 0}});
  KeypointConfig cfg;
  cfg.flag_uncertain = true;
  auto kps = extract_keypoints(d, f, refs, cfg);
  ASSERT_EQ(kps.size(), 2u);
  EXPECT_EQ(kps[0].pixel, (PixelCoord{3, 4}));
  EXPECT_EQ(kps[0].flags & kUncertain, 0u);
  EXPECT_EQ(kps[1].pixel, (PixelCoord{10, 8}));
  EXPECT_NE(kps[1].flags & kUncertain, 0u);
  std::vector<std::vector<Keypoint>> cams{kps, kps};
  EXPECT_EQ(keypoint_features(cams).size(), 12u);
}
