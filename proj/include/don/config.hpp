#pragma once

#include <cstdint>
#include <cstdlib>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "don/correspond.hpp"
#include "don/descriptor.hpp"
#include "don/error.hpp"
#include "don/fusion.hpp"
#include "don/geometry.hpp"
#include "don/keypoints.hpp"
#include "don/policy.hpp"
#include "don/scenegen.hpp"

namespace don {

/// Sectioned key = value configuration. Keys are addressed as
/// "section.key". Every lookup records the value actually used, so the
/// effective configuration (defaults included) can be written back out.
class Config {
 public:
  Config() = default;

  static Config parse(const std::string& text, const std::string& name = "config") {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream in(text);
    try {
      pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
      throw Error(Errc::FormatError, name + ":" + std::to_string(e.line()) + ": " + e.message());
    }
    Config c;
    for (const auto& [section, body] : tree) {
      if (body.empty()) throw Error(Errc::FormatError, name + ": key '" + section + "' outside any section");
      for (const auto& [key, value] : body) c.values_[section + "." + key] = value.data();
    }
    return c;
  }

  static Config load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::MissingArtifact, "cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
  }

  /// "section.key=value" override; wins over the file.
  void set_override(const std::string& assignment) {
    auto eq = assignment.find('=');
    auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq || dot == 0 || dot + 1 == eq) {
      throw Error(Errc::InvalidArgument, "override '" + assignment + "' is not section.key=value");
    }
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    std::string v = it == values_.end() ? fallback : it->second;
    used_[key] = v;
    return v;
  }

  double get_real(const std::string& key, double fallback) const {
    auto s = get_string(key, format(fallback));
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (s.empty() || *end != '\0') bad(key, s, "a real number");
    return v;
  }

  long get_int(const std::string& key, long fallback) const {
    auto s = get_string(key, std::to_string(fallback));
    char* end = nullptr;
    long v = std::strtol(s.c_str(), &end, 10);
    if (s.empty() || *end != '\0') bad(key, s, "an integer");
    return v;
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    auto s = get_string(key, std::to_string(fallback));
    char* end = nullptr;
    unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (s.empty() || *end != '\0' || s[0] == '-') bad(key, s, "a nonnegative integer");
    return v;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto s = get_string(key, fallback ? "true" : "false");
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    bad(key, s, "true or false");
  }

  Vec3 get_vec3(const std::string& key, const Vec3& fallback) const {
    auto s = get_string(key, format(fallback[0]) + " " + format(fallback[1]) + " " + format(fallback[2]));
    std::istringstream in(s);
    Vec3 v;
    std::string extra;
    if (!(in >> v[0] >> v[1] >> v[2]) || (in >> extra)) bad(key, s, "three reals");
    return v;
  }

  /// Keys read so far plus every key given explicitly, as INI text.
  std::string effective_ini() const {
    std::map<std::string, std::string> all = values_;
    for (const auto& [k, v] : used_) all[k] = v;
    std::string out, section;
    for (const auto& [k, v] : all) {
      auto dot = k.find('.');
      auto sec = k.substr(0, dot);
      if (sec != section) {
        if (!out.empty()) out += "\n";
        out += "[" + sec + "]\n";
        section = sec;
      }
      out += k.substr(dot + 1) + " = " + v + "\n";
    }
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t");
    auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }

  static std::string format(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  }

  [[noreturn]] static void bad(const std::string& key, const std::string& value, const char* expected) {
    throw Error(Errc::InvalidArgument, "config key " + key + " = '" + value + "' is not " + expected);
  }

  std::map<std::string, std::string> values_;
  mutable std::map<std::string, std::string> used_;
};

/// Fills every stage seed the configuration leaves unset as run.seed plus a
/// fixed per-stage offset, so one master seed controls the whole pipeline.
inline void derive_stage_seeds(Config& cfg) {
  const std::uint64_t seed = cfg.get_u64("run.seed", 0);
  const std::pair<const char*, std::uint64_t> stage_seeds[] = {
      {"scene.seed", 0},  {"trajectory.seed", 1}, {"sampling.seed", 2}, {"train.seed", 3},
      {"refs.seed", 4},   {"eval.seed", 5},       {"policy.seed", 6},   {"bc.seed", 7},
  };
  for (const auto& [key, salt] : stage_seeds)
    if (!cfg.has(key)) cfg.set(key, std::to_string(seed + salt));
}

// Stage settings read from a Config. Missing keys fall back to library defaults.

inline SceneSpec scene_spec_from(const Config& c) {
  SceneSpec s;
  s.workspace.min = c.get_vec3("scene.workspace_min", s.workspace.min);
  s.workspace.max = c.get_vec3("scene.workspace_max", s.workspace.max);
  s.ground_plane_z = c.get_real("scene.ground_z", s.ground_plane_z);
  s.texture.base_frequency = c.get_real("scene.texture_frequency", s.texture.base_frequency);
  s.texture.octaves = static_cast<int>(c.get_int("scene.texture_octaves", s.texture.octaves));
  s.texture.tint_weight = c.get_real("scene.texture_tint", s.texture.tint_weight);
  s.texture.contrast = c.get_real("scene.texture_contrast", s.texture.contrast);
  s.lighting.camera_fixed = c.get_bool("scene.light_camera_fixed", s.lighting.camera_fixed);
  s.lighting.ambient = c.get_real("scene.light_ambient", s.lighting.ambient);
  s.lighting.direction = c.get_vec3("scene.light_direction", s.lighting.direction).normalized();
  long n = c.get_int("scene.objects", 0);
  for (long i = 1; i <= n; ++i) {
    const std::string sec = "object" + std::to_string(i) + ".";
    ObjectSpec o;
    auto shape = c.get_string(sec + "shape", "sphere");
    if (shape == "sphere") {
      o.shape = Shape::Sphere;
    } else if (shape == "box") {
      o.shape = Shape::Box;
    } else {
      throw Error(Errc::InvalidSpec, sec + "shape must be sphere or box");
    }
    o.center = c.get_vec3(sec + "center", o.center);
    o.size = c.get_real(sec + "size", o.size);
    o.texture_seed = c.get_u64(sec + "texture_seed", static_cast<std::uint64_t>(i));
    auto role = c.get_string(sec + "role", "target");
    if (role == "target") {
      o.role = Role::Target;
    } else if (role == "distractor") {
      o.role = Role::Distractor;
    } else {
      throw Error(Errc::InvalidSpec, sec + "role must be target or distractor");
    }
    s.objects.push_back(o);
  }
  return s;
}

inline CameraIntrinsics intrinsics_from(const Config& c) {
  CameraIntrinsics k;
  k.fx = c.get_real("camera.fx", k.fx);
  k.fy = c.get_real("camera.fy", k.fy);
  k.cx = c.get_real("camera.cx", k.cx);
  k.cy = c.get_real("camera.cy", k.cy);
  k.width = static_cast<int>(c.get_int("camera.width", k.width));
  k.height = static_cast<int>(c.get_int("camera.height", k.height));
  k.validate();
  return k;
}

inline TrajectorySpec trajectory_spec_from(const Config& c) {
  TrajectorySpec t;
  t.n_frames = static_cast<int>(c.get_int("trajectory.frames", t.n_frames));
  t.seed = c.get_u64("trajectory.seed", t.seed);
  t.orbit.center = c.get_vec3("trajectory.center", t.orbit.center);
  t.orbit.radius_min = c.get_real("trajectory.radius_min", t.orbit.radius_min);
  t.orbit.radius_max = c.get_real("trajectory.radius_max", t.orbit.radius_max);
  t.orbit.elevation_min = c.get_real("trajectory.elevation_min", t.orbit.elevation_min);
  t.orbit.elevation_max = c.get_real("trajectory.elevation_max", t.orbit.elevation_max);
  return t;
}

inline FusionConfig fusion_config_from(const Config& c) {
  FusionConfig f;
  f.voxel_size = c.get_real("fusion.voxel", f.voxel_size);
  f.truncation_voxels = c.get_real("fusion.truncation_voxels", f.truncation_voxels);
  f.occlusion_voxels = c.get_real("fusion.occlusion_voxels", f.occlusion_voxels);
  f.cluster_voxels = c.get_real("fusion.cluster_voxels", f.cluster_voxels);
  long min_size = c.get_int("fusion.min_cluster_size", static_cast<long>(f.min_cluster_size));
  if (min_size < 1) throw Error(Errc::InvalidArgument, "fusion.min_cluster_size must be >= 1");
  f.min_cluster_size = static_cast<std::size_t>(min_size);
  if (!(f.voxel_size > 0.0 && f.truncation_voxels > 0.0 && f.occlusion_voxels > 0.0 && f.cluster_voxels > 0.0)) {
    throw Error(Errc::InvalidArgument, "fusion distances must be positive");
  }
  return f;
}

inline SamplingConfig sampling_config_from(const Config& c) {
  SamplingConfig s;
  s.m = static_cast<int>(c.get_int("sampling.m", s.m));
  s.n = static_cast<int>(c.get_int("sampling.n", s.n));
  s.occlusion_tol = c.get_real("sampling.occlusion_tol", s.occlusion_tol);
  s.rng_seed = c.get_u64("sampling.seed", s.rng_seed);
  s.validate();
  return s;
}

inline EncoderConfig encoder_config_from(const Config& c) {
  EncoderConfig e;
  e.patch_radius = static_cast<int>(c.get_int("encoder.patch_radius", e.patch_radius));
  e.descriptor_dim = static_cast<int>(c.get_int("encoder.descriptor_dim", e.descriptor_dim));
  e.hidden = static_cast<int>(c.get_int("encoder.hidden", e.hidden));
  e.use_pixel_coords = c.get_bool("encoder.use_pixel_coords", e.use_pixel_coords);
  e.validate();
  return e;
}

inline LossConfig loss_config_from(const Config& c) {
  LossConfig l;
  l.margin = c.get_real("loss.margin", l.margin);
  l.normalize_by_sqrt_d = c.get_bool("loss.normalize", l.normalize_by_sqrt_d);
  l.validate();
  return l;
}

inline TrainConfig train_config_from(const Config& c) {
  TrainConfig t;
  t.lr0 = c.get_real("train.lr0", t.lr0);
  t.decay_factor = c.get_real("train.decay_factor", t.decay_factor);
  t.decay_every = static_cast<int>(c.get_int("train.decay_every", t.decay_every));
  t.weight_decay = c.get_real("train.weight_decay", t.weight_decay);
  t.steps = static_cast<int>(c.get_int("train.steps", t.steps));
  t.seed = c.get_u64("train.seed", t.seed);
  t.validation_every = static_cast<int>(c.get_int("train.validation_every", t.validation_every));
  t.validation_samples = static_cast<int>(c.get_int("train.validation_samples", t.validation_samples));
  t.validate();
  return t;
}

inline KeypointConfig keypoint_config_from(const Config& c) {
  KeypointConfig k;
  k.temperature = c.get_real("keypoints.temperature", k.temperature);
  auto lift = c.get_string("keypoints.lift", "camera_frame");
  if (lift == "camera_frame") {
    k.lift = LiftMode::CameraFrame;
  } else if (lift == "depth_append") {
    k.lift = LiftMode::DepthAppend;
  } else {
    throw Error(Errc::InvalidArgument, "keypoints.lift must be camera_frame or depth_append");
  }
  k.flag_uncertain = c.get_bool("keypoints.flag_uncertain", k.flag_uncertain);
  k.uncertainty_distance = c.get_real("keypoints.uncertainty_distance", k.uncertainty_distance);
  if (!(k.temperature > 0.0)) throw Error(Errc::InvalidArgument, "keypoints.temperature must be positive");
  return k;
}

inline PolicyTrainConfig policy_config_from(const Config& c) {
  PolicyTrainConfig p;
  p.lr = c.get_real("policy.lr", p.lr);
  p.weight_decay = c.get_real("policy.weight_decay", p.weight_decay);
  p.steps = static_cast<int>(c.get_int("policy.steps", p.steps));
  p.batch_trajectories = static_cast<int>(c.get_int("policy.batch_trajectories", p.batch_trajectories));
  p.seed = c.get_u64("policy.seed", p.seed);
  return p;
}

}  // namespace don
