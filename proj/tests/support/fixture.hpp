#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "don/config.hpp"
#include "don/don.hpp"

namespace don::test {

inline std::filesystem::path fixture_path(const std::string& name) {
  return std::filesystem::path(DON_FIXTURE_DIR) / name;
}

inline Config load_fixture(const std::string& name) {
  Config cfg = Config::load(fixture_path(name));
  derive_stage_seeds(cfg);
  return cfg;
}

/// A fused scene: the training scan with masks plus what produced it.
struct SceneFixture {
  Config cfg;
  SceneSpec spec;
  Scene scene;
  CameraIntrinsics intr;
  FusionConfig fusion;
  LabeledCloud cloud;
  Trajectory traj;
};

inline std::vector<Frame> frames_of(const std::vector<RenderedFrame>& rendered) {
  std::vector<Frame> out;
  for (const auto& r : rendered) out.push_back(r.frame);
  return out;
}

inline SceneFixture build_fixture(const Config& cfg) {
  SceneFixture fx;
  fx.cfg = cfg;
  fx.spec = scene_spec_from(cfg);
  fx.scene = build_scene(fx.spec, cfg.get_u64("scene.seed", 0));
  fx.intr = intrinsics_from(cfg);
  fx.fusion = fusion_config_from(cfg);
  auto rendered = generate_trajectory(fx.scene, trajectory_spec_from(cfg), fx.intr);
  fx.cloud = fuse_and_cluster(frames_of(rendered), fx.spec.workspace, fx.spec.ground_plane_z, fx.fusion);
  fx.traj = make_trajectory(std::move(rendered), fx.cloud, fx.fusion.occlusion_tol());
  return fx;
}

inline SceneFixture build_fixture(const std::string& name) { return build_fixture(load_fixture(name)); }

/// Another scan of the same scene, masked with the fixture's fused cloud.
inline Trajectory rescan(const SceneFixture& fx, std::uint64_t seed, int frames = 0) {
  TrajectorySpec t = trajectory_spec_from(fx.cfg);
  t.seed = seed;
  if (frames > 0) t.n_frames = frames;
  return make_trajectory(generate_trajectory(fx.scene, t, fx.intr), fx.cloud, fx.fusion.occlusion_tol());
}

inline double mask_iou(const ObjectMask& mask, const IdRaster& ids, int id) {
  std::size_t inter = 0, uni = 0;
  for (int r = 0; r < ids.height(); ++r)
    for (int c = 0; c < ids.width(); ++c) {
      bool a = mask.test(c, r), b = ids(c, r) == id;
      inter += a && b;
      uni += a || b;
    }
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
}

/// Pixels of `id` in an oracle raster.
inline std::size_t id_area(const IdRaster& ids, int id) {
  std::size_t n = 0;
  for (auto v : ids.data()) n += v == id;
  return n;
}

}  // namespace don::test
