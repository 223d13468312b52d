#pragma once

#include <algorithm>
#include <array>
#include <iterator>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "don/descriptor.hpp"
#include "don/error.hpp"
#include "don/fusion.hpp"
#include "don/geometry.hpp"
#include "don/scenegen.hpp"

namespace don {

struct ReferenceEntry {
  std::vector<double> descriptor;
  int object_label = 0;
  int frame_id = 0;
  PixelCoord pixel;
};

/// Reference descriptors, an equal number per object label.
struct ReferenceSet {
  std::vector<ReferenceEntry> entries;

  std::size_t size() const noexcept { return entries.size(); }
  int dim() const { return entries.empty() ? 0 : static_cast<int>(entries.front().descriptor.size()); }
};

/// Pixels chosen by hand, per object label.
struct ManualPick {
  int object_label = 0;
  PixelCoord pixel;
};

/// Picks k_per_object reference pixels in every given mask, uniformly at
/// random (without replacement when the mask is large enough).
inline ReferenceSet select_references(const DescriptorMap& desc, std::span<const ObjectMask> masks, int k_per_object,
                                      std::uint64_t seed) {
  if (k_per_object < 1) throw Error(Errc::InvalidArgument, "k_per_object must be >= 1");
  std::mt19937_64 rng(seed);
  ReferenceSet out;
  for (const auto& m : masks) {
    std::vector<PixelIndex> pixels;
    for (int r = 0; r < m.bits.height(); ++r)
      for (int c = 0; c < m.bits.width(); ++c)
        if (m.bits(c, r)) pixels.push_back({c, r});
    if (pixels.empty()) throw Error(Errc::EmptyMask, "object " + std::to_string(m.object_label) + " has an empty mask");
    std::vector<PixelIndex> chosen;
    if (static_cast<int>(pixels.size()) >= k_per_object) {
      std::sample(pixels.begin(), pixels.end(), std::back_inserter(chosen), k_per_object, rng);
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, pixels.size() - 1);
      for (int i = 0; i < k_per_object; ++i) chosen.push_back(pixels[pick(rng)]);
    }
    for (auto p : chosen) {
      auto d = desc.at(p.col, p.row);
      out.entries.push_back({{d.begin(), d.end()}, m.object_label, m.frame_id, to_coord(p)});
    }
  }
  return out;
}

/// Manual variant: every pick must lie inside its object's mask, and every
/// object must receive the same number of picks.
inline ReferenceSet select_references(const DescriptorMap& desc, std::span<const ObjectMask> masks,
                                      std::span<const ManualPick> picks) {
  ReferenceSet out;
  std::vector<int> per_label;
  for (const auto& pick : picks) {
    const ObjectMask* mask = nullptr;
    for (const auto& m : masks)
      if (m.object_label == pick.object_label) mask = &m;
    if (!mask) throw Error(Errc::EmptyMask, "no mask for object " + std::to_string(pick.object_label));
    auto idx = nearest_pixel(pick.pixel, mask->bits.width(), mask->bits.height());
    if (!idx || !mask->test(idx->col, idx->row)) {
      throw Error(Errc::ManualOutsideMask, "manual pixel (" + std::to_string(pick.pixel.u) + ", " +
                                               std::to_string(pick.pixel.v) + ") is not on object " +
                                               std::to_string(pick.object_label));
    }
    auto d = desc.at(idx->col, idx->row);
    out.entries.push_back({{d.begin(), d.end()}, pick.object_label, mask->frame_id, to_coord(*idx)});
    if (static_cast<int>(per_label.size()) <= pick.object_label) per_label.resize(static_cast<std::size_t>(pick.object_label) + 1, 0);
    ++per_label[static_cast<std::size_t>(pick.object_label)];
  }
  int expected = -1;
  for (int c : per_label) {
    if (c == 0) continue;
    if (expected >= 0 && c != expected) throw Error(Errc::InvalidArgument, "manual picks must be equal per object");
    expected = c;
  }
  return out;
}

/// Per-pixel probability that the pixel corresponds to a reference.
struct ActivationMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // row-major

  double at(int col, int row) const { return values[static_cast<std::size_t>(row) * width + col]; }
};

/// Euclidean descriptor distance to `ref` at every pixel, divided by sqrt(D).
inline std::vector<double> distance_map(const DescriptorMap& desc, std::span<const double> ref) {
  if (static_cast<int>(ref.size()) != desc.dim()) throw Error(Errc::DimensionMismatch, "reference dimension differs from map");
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(desc.dim()));
  std::vector<double> dist(static_cast<std::size_t>(desc.width()) * desc.height());
  for (int r = 0; r < desc.height(); ++r)
    for (int c = 0; c < desc.width(); ++c)
      dist[static_cast<std::size_t>(r) * desc.width() + c] = std::sqrt(squared_distance(desc.at(c, r), ref)) * inv_sqrt_d;
  return dist;
}

/// Softmax of -distance / temperature, shifted by the minimum distance.
inline ActivationMap activation_map(const DescriptorMap& desc, std::span<const double> ref, double temperature) {
  if (!(temperature > 0.0)) throw Error(Errc::InvalidArgument, "temperature must be positive");
  auto dist = distance_map(desc, ref);
  double dmin = *std::min_element(dist.begin(), dist.end());
  ActivationMap act{desc.width(), desc.height(), std::vector<double>(dist.size())};
  double sum = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    act.values[i] = std::exp(-(dist[i] - dmin) / temperature);
    sum += act.values[i];
  }
  for (auto& v : act.values) v /= sum;
  return act;
}

enum KeypointFlags : std::uint32_t {
  kDepthFromNeighbor = 1u << 0,
  kDepthFromMedian = 1u << 1,
  kUncertain = 1u << 2,
};

enum class LiftMode { CameraFrame, DepthAppend };

struct Keypoint {
  PixelCoord pixel;
  double depth = 0.0;
  Vec3 lift = Vec3::Zero();
  std::array<double, 2> normalized{0.0, 0.0};
  double confidence = 0.0;
  double min_distance = 0.0;
  std::uint32_t flags = 0;
};

/// Global mode of the activation map. The peak is located as the minimum of
/// the distance map (lowest row-major index on ties), which is the argmax of
/// the activation by monotonicity and immune to exp() rounding collisions.
inline Keypoint extract_keypoint(const ActivationMap& act, const DescriptorMap& desc, std::span<const double> ref) {
  auto dist = distance_map(desc, ref);
  std::size_t best = 0;
  for (std::size_t i = 1; i < dist.size(); ++i)
    if (dist[i] < dist[best]) best = i;
  Keypoint kp;
  kp.pixel = {static_cast<double>(best % static_cast<std::size_t>(desc.width())),
              static_cast<double>(best / static_cast<std::size_t>(desc.width()))};
  kp.confidence = act.values[best];
  kp.min_distance = dist[best];
  return kp;
}

/// Pixel coordinates mapped to [-1, 1]: 2u/(W-1) - 1, 2v/(H-1) - 1.
inline std::array<double, 2> normalize_pixels(PixelCoord px, int width, int height) {
  if (width < 2 || height < 2) throw Error(Errc::InvalidArgument, "normalization needs width, height >= 2");
  if (!(px.u >= 0.0 && px.v >= 0.0 && px.u <= width - 1 && px.v <= height - 1)) {
    throw Error(Errc::OutOfBounds, "pixel outside the image");
  }
  return {2.0 * px.u / (width - 1) - 1.0, 2.0 * px.v / (height - 1) - 1.0};
}

inline double median_valid_depth(const Frame& frame) {
  std::vector<float> d;
  for (float v : frame.depth.data())
    if (v > 0.0f) d.push_back(v);
  if (d.empty()) return 0.0;
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid;
}

/// Attaches depth, a 3D lift and normalized coordinates. Missing depth falls
/// back to the nearest valid 3x3 neighbor, then to the frame's median depth
/// (in which case `depth` stays 0 and the lift uses the median).
inline Keypoint lift_keypoint(Keypoint kp, const Frame& frame, LiftMode mode) {
  auto idx = nearest_pixel(kp.pixel, frame.intr);
  if (!idx) throw Error(Errc::OutOfBounds, "keypoint outside frame");
  kp.normalized = normalize_pixels(kp.pixel, frame.width(), frame.height());
  double depth = frame.depth(idx->col, idx->row);
  double lift_depth = depth;
  if (depth <= 0.0) {
    double best_d2 = std::numeric_limits<double>::infinity();
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) {
        int c = idx->col + dc, r = idx->row + dr;
        if (!frame.depth.in_bounds(c, r) || frame.depth(c, r) <= 0.0f) continue;
        double d2 = dc * dc + dr * dr;
        if (d2 < best_d2) {
          best_d2 = d2;
          depth = frame.depth(c, r);
        }
      }
    if (depth > 0.0) {
      kp.flags |= kDepthFromNeighbor;
      lift_depth = depth;
    } else {
      kp.flags |= kDepthFromMedian;
      depth = 0.0;
      lift_depth = median_valid_depth(frame);
    }
  }
  kp.depth = depth;
  if (mode == LiftMode::CameraFrame) {
    kp.lift = lift_depth > 0.0 ? unproject(kp.pixel, lift_depth, frame.intr) : Vec3::Zero();
  } else {
    kp.lift = Vec3(kp.normalized[0], kp.normalized[1], lift_depth);
  }
  return kp;
}

struct KeypointConfig {
  double temperature = 0.05;
  LiftMode lift = LiftMode::CameraFrame;
  bool flag_uncertain = false;
  double uncertainty_distance = 0.5;
};

/// Full extraction for one encoded frame: one keypoint per reference entry.
inline std::vector<Keypoint> extract_keypoints(const DescriptorMap& desc, const Frame& frame, const ReferenceSet& refs,
                                               const KeypointConfig& cfg = {}) {
  std::vector<Keypoint> out;
  out.reserve(refs.size());
  for (const auto& e : refs.entries) {
    auto act = activation_map(desc, e.descriptor, cfg.temperature);
    Keypoint kp = lift_keypoint(extract_keypoint(act, desc, e.descriptor), frame, cfg.lift);
    if (cfg.flag_uncertain && kp.min_distance > cfg.uncertainty_distance) kp.flags |= kUncertain;
    out.push_back(kp);
  }
  return out;
}

/// Observation vector for several cameras: camera-major, reference-minor,
/// each keypoint contributing its 3-component lift.
inline std::vector<double> keypoint_features(std::span<const std::vector<Keypoint>> per_camera) {
  std::vector<double> out;
  for (const auto& cam : per_camera)
    for (const auto& kp : cam)
      for (int k = 0; k < 3; ++k) out.push_back(kp.lift[k]);
  return out;
}

}  // namespace don
