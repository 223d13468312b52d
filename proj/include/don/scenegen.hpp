#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "don/error.hpp"
#include "don/geometry.hpp"
#include "don/parallel.hpp"
#include "don/raster.hpp"

namespace don {

enum class Shape { Sphere, Box };
enum class Role { Target, Distractor };

/// `size` is the radius of a sphere or the half-edge of an axis-aligned cube.
struct ObjectSpec {
  Shape shape = Shape::Sphere;
  Vec3 center = Vec3::Zero();
  double size = 0.1;
  std::uint64_t texture_seed = 0;
  Role role = Role::Target;
};

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

struct TextureSpec {
  double base_frequency = 8.0;  // lattice cells per meter for the first octave
  int octaves = 3;
  double tint_weight = 0.35;    // share of the per-object base hue in the albedo
  double contrast = 1.0;        // noise amplitude gain around mid-gray, clamped to [0, 1]
};

/// Lambert shading against one directional light. A camera-fixed light
/// (a lamp mounted on the sensor) makes shading depend on the viewpoint.
struct LightingSpec {
  bool camera_fixed = false;
  double ambient = 0.65;
  Vec3 direction = Vec3(0.3, 0.5, 1.0).normalized();  // toward the light; camera frame when camera_fixed
};

struct SceneSpec {
  std::vector<ObjectSpec> objects;
  Aabb workspace{Vec3(-0.5, -0.5, -0.05), Vec3(0.5, 0.5, 0.6)};
  double ground_plane_z = 0.0;
  TextureSpec texture;
  LightingSpec lighting;

  void validate() const {
    if (objects.empty()) throw Error(Errc::InvalidSpec, "scene has no objects");
    if (objects.size() > 254) throw Error(Errc::InvalidSpec, "at most 254 objects are supported");
    bool any_target = std::any_of(objects.begin(), objects.end(),
                                  [](const ObjectSpec& o) { return o.role == Role::Target; });
    if (!any_target) throw Error(Errc::InvalidSpec, "at least one target object is required");
    if (!(workspace.max.array() > workspace.min.array()).all()) {
      throw Error(Errc::InvalidSpec, "workspace box is empty");
    }
    for (std::size_t i = 0; i < objects.size(); ++i) {
      if (!(objects[i].size > 0.0)) {
        throw Error(Errc::InvalidSpec, "object " + std::to_string(i + 1) + " has nonpositive size");
      }
      if (!workspace.contains(objects[i].center)) {
        throw Error(Errc::InvalidSpec, "object " + std::to_string(i + 1) + " center outside workspace");
      }
    }
    if (!(texture.base_frequency > 0.0) || texture.octaves < 1) {
      throw Error(Errc::InvalidSpec, "texture frequency and octaves must be positive");
    }
  }

  double largest_object_size() const {
    double s = 0.0;
    for (const auto& o : objects) s = std::max(s, o.size);
    return s;
  }
};

namespace detail {

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline double lattice_value(std::int64_t ix, std::int64_t iy, std::int64_t iz, std::uint64_t seed) {
  std::uint64_t h = mix64(seed ^ mix64(static_cast<std::uint64_t>(ix) * 0x8da6b343ULL ^
                                       static_cast<std::uint64_t>(iy) * 0xd8163841ULL ^
                                       static_cast<std::uint64_t>(iz) * 0xcb1ab31fULL));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

}  // namespace detail

/// Multi-octave trilinear value noise in [0,1], deterministic in its seed.
class ValueNoise {
 public:
  ValueNoise() = default;
  ValueNoise(std::uint64_t seed, double base_frequency, int octaves)
      : seed_(seed), base_frequency_(base_frequency), octaves_(octaves) {}

  double operator()(const Vec3& p) const {
    double sum = 0.0, norm = 0.0, amp = 1.0, freq = base_frequency_;
    for (int o = 0; o < octaves_; ++o) {
      sum += amp * single(p * freq, seed_ + static_cast<std::uint64_t>(o) * 0x51ed27ULL);
      norm += amp;
      amp *= 0.5;
      freq *= 2.0;
    }
    return sum / norm;
  }

 private:
  static double single(const Vec3& q, std::uint64_t seed) {
    double fx = std::floor(q.x()), fy = std::floor(q.y()), fz = std::floor(q.z());
    auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy),
         iz = static_cast<std::int64_t>(fz);
    double tx = detail::smooth(q.x() - fx), ty = detail::smooth(q.y() - fy), tz = detail::smooth(q.z() - fz);
    double c[2][2][2];
    for (int dx = 0; dx < 2; ++dx)
      for (int dy = 0; dy < 2; ++dy)
        for (int dz = 0; dz < 2; ++dz) c[dx][dy][dz] = detail::lattice_value(ix + dx, iy + dy, iz + dz, seed);
    auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
    double x00 = lerp(c[0][0][0], c[1][0][0], tx), x10 = lerp(c[0][1][0], c[1][1][0], tx);
    double x01 = lerp(c[0][0][1], c[1][0][1], tx), x11 = lerp(c[0][1][1], c[1][1][1], tx);
    return lerp(lerp(x00, x10, ty), lerp(x01, x11, ty), tz);
  }

  std::uint64_t seed_ = 0;
  double base_frequency_ = 1.0;
  int octaves_ = 1;
};

/// Albedo as a function of world position: a per-object hue blended with
/// independent per-channel value noise.
class ColorField {
 public:
  ColorField() = default;
  ColorField(std::uint64_t seed, const TextureSpec& tex, double saturation = 1.0) : tint_weight_(tex.tint_weight), contrast_(tex.contrast) {
    for (int ch = 0; ch < 3; ++ch) {
      channels_[ch] = ValueNoise(detail::mix64(seed * 3 + ch + 1), tex.base_frequency, tex.octaves);
      tint_[ch] = 0.15 + 0.7 * detail::lattice_value(ch, 17, 29, detail::mix64(seed));
    }
    // Desaturate toward gray for low-saturation fields such as the ground.
    double gray = (tint_[0] + tint_[1] + tint_[2]) / 3.0;
    for (auto& t : tint_) t = gray + saturation * (t - gray);
    saturation_ = saturation;
  }

  Vec3 operator()(const Vec3& p) const {
    Vec3 c;
    for (int ch = 0; ch < 3; ++ch) {
      double n = std::clamp(0.5 + contrast_ * saturation_ * (channels_[ch](p) - 0.5), 0.0, 1.0);
      c[ch] = tint_weight_ * tint_[ch] + (1.0 - tint_weight_) * n;
    }
    return c;
  }

 private:
  std::array<ValueNoise, 3> channels_{};
  std::array<double, 3> tint_{0.5, 0.5, 0.5};
  double tint_weight_ = 0.0;
  double contrast_ = 1.0;
  double saturation_ = 1.0;
};

struct RayHit {
  double t = std::numeric_limits<double>::infinity();
  int object = 0;  // 0 = ground plane / nothing, k = object k
  Vec3 normal = Vec3::UnitZ();
};

/// A renderable scene: the validated spec plus its procedural textures.
class Scene {
 public:
  static constexpr double kMaxRange = 100.0;

  Scene() = default;
  Scene(SceneSpec spec, std::uint64_t seed) : spec_(std::move(spec)), seed_(seed) {
    spec_.validate();
    for (const auto& o : spec_.objects) {
      textures_.emplace_back(detail::mix64(o.texture_seed) ^ detail::mix64(seed ^ 0xabcdefULL), spec_.texture);
    }
    ground_ = ColorField(detail::mix64(seed ^ 0x6a09e667ULL), spec_.texture, 0.25);
  }

  const SceneSpec& spec() const noexcept { return spec_; }
  std::uint64_t seed() const noexcept { return seed_; }
  int object_count() const noexcept { return static_cast<int>(spec_.objects.size()); }

  static Vec3 sky_color() { return Vec3(0.55, 0.62, 0.75); }

  bool inside_any_object(const Vec3& p) const {
    for (const auto& o : spec_.objects) {
      if (o.shape == Shape::Sphere) {
        if ((p - o.center).norm() < o.size) return true;
      } else if (((p - o.center).cwiseAbs().array() < o.size).all()) {
        return true;
      }
    }
    return false;
  }

  /// Nearest hit with t in (0, kMaxRange) along origin + t * dir; dir need not be unit length.
  RayHit intersect(const Vec3& origin, const Vec3& dir) const {
    RayHit best;
    constexpr double kEps = 1e-9;
    for (int k = 0; k < object_count(); ++k) {
      const auto& o = spec_.objects[static_cast<std::size_t>(k)];
      if (o.shape == Shape::Sphere) {
        Vec3 oc = origin - o.center;
        double a = dir.squaredNorm();
        double b = oc.dot(dir);
        double c = oc.squaredNorm() - o.size * o.size;
        double disc = b * b - a * c;
        if (disc < 0.0) continue;
        double sq = std::sqrt(disc);
        double t = (-b - sq) / a;
        if (t <= kEps) t = (-b + sq) / a;
        if (t > kEps && t < best.t) {
          best.t = t;
          best.object = k + 1;
          best.normal = (origin + t * dir - o.center).normalized();
        }
      } else {
        double t_near = -std::numeric_limits<double>::infinity();
        double t_far = std::numeric_limits<double>::infinity();
        int axis_near = 0;
        bool miss = false;
        for (int ax = 0; ax < 3; ++ax) {
          double lo = o.center[ax] - o.size, hi = o.center[ax] + o.size;
          if (std::abs(dir[ax]) < 1e-15) {
            if (origin[ax] < lo || origin[ax] > hi) { miss = true; break; }
            continue;
          }
          double t1 = (lo - origin[ax]) / dir[ax], t2 = (hi - origin[ax]) / dir[ax];
          if (t1 > t2) std::swap(t1, t2);
          if (t1 > t_near) { t_near = t1; axis_near = ax; }
          t_far = std::min(t_far, t2);
        }
        if (miss || t_near > t_far || t_near <= kEps) continue;
        if (t_near < best.t) {
          best.t = t_near;
          best.object = k + 1;
          best.normal = Vec3::Zero();
          best.normal[axis_near] = dir[axis_near] > 0 ? -1.0 : 1.0;
        }
      }
    }
    if (dir.z() < 0.0 && origin.z() > spec_.ground_plane_z) {
      double t = (spec_.ground_plane_z - origin.z()) / dir.z();
      if (t > kEps && t < best.t) {
        best.t = t;
        best.object = 0;
        best.normal = Vec3::UnitZ();
      }
    }
    return best;
  }

  /// World-frame direction toward the light for a camera with this rotation.
  Vec3 light_direction(const Mat3& world_from_camera) const {
    const auto& l = spec_.lighting;
    return l.camera_fixed ? Vec3(world_from_camera * l.direction) : l.direction;
  }

  /// Shaded color at a world point. With a world-fixed light a surface point
  /// has the same color from every viewpoint.
  Vec3 shade(const Vec3& p, int object, const Vec3& normal, const Vec3& light_dir) const {
    Vec3 albedo = object == 0 ? ground_(p) : textures_[static_cast<std::size_t>(object - 1)](p);
    double lambert = std::max(0.0, normal.dot(light_dir));
    const double ambient = spec_.lighting.ambient;
    return albedo * (ambient + (1.0 - ambient) * lambert);
  }

  /// Stable 64-bit digest of the spec, used in manifests.
  std::uint64_t spec_fingerprint() const {
    std::uint64_t h = detail::mix64(seed_);
    auto feed = [&h](double v) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      h = detail::mix64(h ^ bits);
    };
    for (const auto& o : spec_.objects) {
      feed(static_cast<double>(o.shape));
      for (int i = 0; i < 3; ++i) feed(o.center[i]);
      feed(o.size);
      feed(static_cast<double>(o.texture_seed));
      feed(static_cast<double>(o.role));
    }
    for (int i = 0; i < 3; ++i) {
      feed(spec_.workspace.min[i]);
      feed(spec_.workspace.max[i]);
    }
    feed(spec_.ground_plane_z);
    feed(spec_.texture.base_frequency);
    feed(spec_.texture.octaves);
    feed(spec_.texture.tint_weight);
    feed(spec_.texture.contrast);
    feed(spec_.lighting.camera_fixed ? 1.0 : 0.0);
    feed(spec_.lighting.ambient);
    for (int i = 0; i < 3; ++i) feed(spec_.lighting.direction[i]);
    return h;
  }

 private:
  SceneSpec spec_;
  std::uint64_t seed_ = 0;
  std::vector<ColorField> textures_;
  ColorField ground_;
};

inline Scene build_scene(const SceneSpec& spec, std::uint64_t seed) { return Scene(spec, seed); }

/// One posed RGB-D observation.
struct Frame {
  int frame_id = 0;
  RgbImage rgb;
  DepthImage depth;
  Pose pose;  // world_from_camera
  CameraIntrinsics intr;

  int width() const noexcept { return intr.width; }
  int height() const noexcept { return intr.height; }

  /// Depth at the nearest raster cell, 0 when off-grid or invalid.
  double depth_at(PixelCoord px) const {
    auto idx = nearest_pixel(px, intr);
    return idx ? static_cast<double>(depth(idx->col, idx->row)) : 0.0;
  }

  bool operator==(const Frame&) const = default;
};

struct RenderedFrame {
  Frame frame;
  IdRaster ids;
};

inline double quantize_unit(double c) { return std::round(std::clamp(c, 0.0, 1.0) * 255.0) / 255.0; }

inline RenderedFrame render_frame(const Scene& scene, const Pose& pose, const CameraIntrinsics& intr,
                                  int frame_id = 0) {
  intr.validate();
  if (scene.inside_any_object(pose.translation())) {
    throw Error(Errc::CameraInsideGeometry, "camera origin lies inside an object");
  }
  RenderedFrame out;
  out.frame.frame_id = frame_id;
  out.frame.pose = pose;
  out.frame.intr = intr;
  out.frame.rgb = RgbImage(intr.width, intr.height, 3);
  out.frame.depth = DepthImage(intr.width, intr.height, 1);
  out.ids = IdRaster(intr.width, intr.height, 1);
  const Vec3 origin = pose.translation();
  const Mat3& rot = pose.rotation();
  const Vec3 light = scene.light_direction(rot);
  parallel_rows(intr.height, [&](int row) {
    for (int col = 0; col < intr.width; ++col) {
      Vec3 dir_cam((col - intr.cx) / intr.fx, (row - intr.cy) / intr.fy, 1.0);
      Vec3 dir = rot * dir_cam;
      RayHit hit = scene.intersect(origin, dir);
      Vec3 color = Scene::sky_color();
      if (hit.t < Scene::kMaxRange) {
        // dir has unit camera-z, so the ray parameter is the depth.
        out.frame.depth(col, row) = static_cast<float>(hit.t);
        out.ids(col, row) = static_cast<std::uint8_t>(hit.object);
        color = scene.shade(origin + hit.t * dir, hit.object, hit.normal, light);
      }
      for (int ch = 0; ch < 3; ++ch) out.frame.rgb(col, row, ch) = quantize_unit(color[ch]);
    }
  });
  return out;
}

struct OrbitSpec {
  Vec3 center = Vec3::Zero();
  double radius_min = 1.0;
  double radius_max = 2.0;
  double elevation_min = 0.5;
  double elevation_max = 1.0;
};

struct TrajectorySpec {
  int n_frames = 30;
  OrbitSpec orbit;
  std::uint64_t seed = 0;

  void validate(const SceneSpec& scene) const {
    if (n_frames < 2) throw Error(Errc::InvalidSpec, "trajectory needs at least 2 frames");
    if (!(orbit.radius_min <= orbit.radius_max)) throw Error(Errc::InvalidSpec, "radius_min > radius_max");
    if (!(orbit.radius_min > scene.largest_object_size())) {
      throw Error(Errc::InvalidSpec, "radius_min must exceed the largest object size");
    }
    if (!(orbit.elevation_min <= orbit.elevation_max) || std::abs(orbit.elevation_max) >= 1.5 ||
        std::abs(orbit.elevation_min) >= 1.5) {
      throw Error(Errc::InvalidSpec, "elevation range must be ordered and within (-1.5, 1.5) rad");
    }
  }
};

/// Camera poses on a seeded random orbit, every camera aimed at the orbit center.
inline std::vector<Pose> orbit_poses(const TrajectorySpec& tspec) {
  std::mt19937_64 rng(tspec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto& o = tspec.orbit;
  std::vector<Pose> poses;
  poses.reserve(static_cast<std::size_t>(tspec.n_frames));
  while (static_cast<int>(poses.size()) < tspec.n_frames) {
    double radius = o.radius_min + (o.radius_max - o.radius_min) * unit(rng);
    double elevation = o.elevation_min + (o.elevation_max - o.elevation_min) * unit(rng);
    double azimuth = 2.0 * std::numbers::pi * unit(rng);
    Vec3 offset(std::cos(elevation) * std::cos(azimuth), std::cos(elevation) * std::sin(azimuth),
                std::sin(elevation));
    Vec3 eye = o.center + radius * offset;
    Pose pose = Pose::look_at(eye, o.center);
    if (!poses.empty() && poses.back() == pose) continue;
    poses.push_back(pose);
  }
  return poses;
}

inline std::vector<RenderedFrame> generate_trajectory(const Scene& scene, const TrajectorySpec& tspec,
                                                      const CameraIntrinsics& intr = {}) {
  tspec.validate(scene.spec());
  std::vector<RenderedFrame> frames;
  auto poses = orbit_poses(tspec);
  frames.reserve(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    frames.push_back(render_frame(scene, poses[i], intr, static_cast<int>(i)));
  }
  return frames;
}

}  // namespace don
