#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <unordered_map>
#include <vector>

#include "don/error.hpp"
#include "don/geometry.hpp"
#include "don/raster.hpp"
#include "don/scenegen.hpp"

namespace don {

/// Dense truncated signed distance grid. Values are stored divided by the
/// truncation distance, so they live in [-1, 1]; positive is free space.
struct TsdfVolume {
  Vec3 origin = Vec3::Zero();  // center of voxel (0,0,0)
  double voxel_size = 0.02;
  std::array<int, 3> dims{1, 1, 1};
  double truncation = 0.08;
  std::vector<double> tsdf;
  std::vector<double> weight;

  TsdfVolume() = default;

  TsdfVolume(const Vec3& origin_, double voxel, std::array<int, 3> dims_, double truncation_)
      : origin(origin_), voxel_size(voxel), dims(dims_), truncation(truncation_) {
    if (!(voxel > 0.0) || !(truncation_ > 0.0)) {
      throw Error(Errc::InvalidArgument, "voxel size and truncation must be positive");
    }
    if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1) throw Error(Errc::InvalidArgument, "volume dims must be >= 1");
    std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    tsdf.assign(n, 1.0);
    weight.assign(n, 0.0);
  }

  /// Grid covering `box` with truncation = truncation_voxels * voxel.
  static TsdfVolume covering(const Aabb& box, double voxel, double truncation_voxels = 4.0) {
    std::array<int, 3> d{};
    for (int ax = 0; ax < 3; ++ax) {
      d[static_cast<std::size_t>(ax)] =
          static_cast<int>(std::ceil((box.max[ax] - box.min[ax]) / voxel)) + 1;
    }
    return TsdfVolume(box.min, voxel, d, truncation_voxels * voxel);
  }

  std::size_t voxel_count() const noexcept { return tsdf.size(); }

  std::size_t index(int i, int j, int k) const noexcept {
    return (static_cast<std::size_t>(k) * dims[1] + j) * dims[0] + i;
  }

  Vec3 voxel_center(int i, int j, int k) const { return origin + voxel_size * Vec3(i, j, k); }

  bool operator==(const TsdfVolume&) const = default;
};

/// In-place running-average TSDF update with unit weight per observation.
/// Voxels more than one truncation distance behind the observed surface are
/// left untouched so that occluded space is not carved.
inline void integrate_into(TsdfVolume& vol, const Frame& frame) {
  const Pose cam_from_world = frame.pose.inverse();
  const auto& intr = frame.intr;
  for (int k = 0; k < vol.dims[2]; ++k) {
    for (int j = 0; j < vol.dims[1]; ++j) {
      for (int i = 0; i < vol.dims[0]; ++i) {
        Vec3 pc = cam_from_world.apply(vol.voxel_center(i, j, k));
        if (pc.z() <= 0.0) continue;
        PixelCoord px{intr.fx * pc.x() / pc.z() + intr.cx, intr.fy * pc.y() / pc.z() + intr.cy};
        auto idx = nearest_pixel(px, intr);
        if (!idx) continue;
        double d = frame.depth(idx->col, idx->row);
        if (d <= 0.0) continue;
        double sdf = d - pc.z();
        if (sdf < -vol.truncation) continue;
        double obs = std::min(1.0, sdf / vol.truncation);
        std::size_t n = vol.index(i, j, k);
        double w = vol.weight[n];
        vol.tsdf[n] = (vol.tsdf[n] * w + obs) / (w + 1.0);
        vol.weight[n] = w + 1.0;
      }
    }
  }
}

inline TsdfVolume integrate_frame(TsdfVolume vol, const Frame& frame) {
  integrate_into(vol, frame);
  return vol;
}

/// Zero crossings of the TSDF along grid axes, minus points outside the
/// workspace or within two voxels of the ground plane.
inline std::vector<Vec3> extract_cloud(const TsdfVolume& vol, const Aabb& workspace, double ground_plane_z) {
  std::vector<Vec3> points;
  bool any_crossing = false;
  const std::array<std::array<int, 3>, 3> steps{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  for (int k = 0; k < vol.dims[2]; ++k) {
    for (int j = 0; j < vol.dims[1]; ++j) {
      for (int i = 0; i < vol.dims[0]; ++i) {
        std::size_t a = vol.index(i, j, k);
        if (vol.weight[a] <= 0.0) continue;
        for (int ax = 0; ax < 3; ++ax) {
          const auto& s = steps[static_cast<std::size_t>(ax)];
          int ni = i + s[0], nj = j + s[1], nk = k + s[2];
          if (ni >= vol.dims[0] || nj >= vol.dims[1] || nk >= vol.dims[2]) continue;
          std::size_t b = vol.index(ni, nj, nk);
          if (vol.weight[b] <= 0.0) continue;
          double va = vol.tsdf[a], vb = vol.tsdf[b];
          if ((va > 0.0) == (vb > 0.0)) continue;
          // A jump straight from +1 to -1 is a truncation artifact, not a surface.
          if (std::abs(va) >= 1.0 || std::abs(vb) >= 1.0) continue;
          any_crossing = true;
          double t = va / (va - vb);
          Vec3 p = vol.voxel_center(i, j, k);
          p[ax] += t * vol.voxel_size;
          if (!workspace.contains(p)) continue;
          if (p.z() - ground_plane_z < 2.0 * vol.voxel_size) continue;
          points.push_back(p);
        }
      }
    }
  }
  if (!any_crossing) throw Error(Errc::EmptyVolume, "volume contains no zero crossing");
  return points;
}

struct LabeledPoint {
  Vec3 position;
  int label = 0;
};

struct LabeledCloud {
  std::vector<LabeledPoint> points;
  int label_count = 0;
};

namespace detail {

class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

struct CellKey {
  std::int64_t x, y, z;
  bool operator==(const CellKey&) const = default;
};

struct CellKeyHash {
  std::size_t operator()(const CellKey& c) const noexcept {
    return static_cast<std::size_t>(mix64(static_cast<std::uint64_t>(c.x) * 73856093ULL ^
                                          static_cast<std::uint64_t>(c.y) * 19349663ULL ^
                                          static_cast<std::uint64_t>(c.z) * 83492791ULL));
  }
};

}  // namespace detail

/// Exact single-linkage clustering (dist <= radius) via a uniform grid hash.
/// Labels run 1..K by descending cluster size, ties by lowest member index;
/// clusters smaller than `min_size` are dropped.
inline LabeledCloud cluster_objects(std::span<const Vec3> points, double radius, std::size_t min_size = 20) {
  if (!(radius > 0.0)) throw Error(Errc::InvalidArgument, "cluster radius must be positive");
  const std::size_t n = points.size();
  auto cell_of = [radius](const Vec3& p) {
    return detail::CellKey{static_cast<std::int64_t>(std::floor(p.x() / radius)),
                           static_cast<std::int64_t>(std::floor(p.y() / radius)),
                           static_cast<std::int64_t>(std::floor(p.z() / radius))};
  };
  std::unordered_map<detail::CellKey, std::vector<std::size_t>, detail::CellKeyHash> grid;
  for (std::size_t i = 0; i < n; ++i) grid[cell_of(points[i])].push_back(i);

  detail::DisjointSet sets(n);
  const double r2 = radius * radius;
  for (std::size_t i = 0; i < n; ++i) {
    auto c = cell_of(points[i]);
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          auto it = grid.find({c.x + dx, c.y + dy, c.z + dz});
          if (it == grid.end()) continue;
          for (std::size_t j : it->second) {
            if (j > i && (points[i] - points[j]).squaredNorm() <= r2) sets.unite(i, j);
          }
        }
  }

  // Roots are the minimum member index because unite keeps the smaller id.
  std::unordered_map<std::size_t, std::size_t> sizes;
  for (std::size_t i = 0; i < n; ++i) ++sizes[sets.find(i)];
  std::vector<std::pair<std::size_t, std::size_t>> clusters;  // (root, size)
  for (auto [root, size] : sizes) {
    if (size >= min_size) clusters.emplace_back(root, size);
  }
  if (clusters.empty()) throw Error(Errc::NoClusters, "no cluster reaches the minimum size");
  std::sort(clusters.begin(), clusters.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::unordered_map<std::size_t, int> label_of;
  for (std::size_t c = 0; c < clusters.size(); ++c) label_of[clusters[c].first] = static_cast<int>(c) + 1;

  LabeledCloud out;
  out.label_count = static_cast<int>(clusters.size());
  for (std::size_t i = 0; i < n; ++i) {
    auto it = label_of.find(sets.find(i));
    if (it != label_of.end()) out.points.push_back({points[i], it->second});
  }
  return out;
}

struct ObjectMask {
  int frame_id = 0;
  int object_label = 0;
  BitMask bits;

  std::size_t count() const {
    return static_cast<std::size_t>(std::count(bits.data().begin(), bits.data().end(), std::uint8_t{1}));
  }
  bool empty() const { return count() == 0; }
  bool test(int col, int row) const { return bits.in_bounds(col, row) && bits(col, row) != 0; }

  bool operator==(const ObjectMask&) const = default;
};

/// 3x3 morphological closing. Off-grid neighbors are ignored in both passes.
inline BitMask close3x3(const BitMask& in) {
  const int w = in.width(), h = in.height();
  auto pass = [w, h](const BitMask& src, bool dilate) {
    BitMask dst(w, h, 1);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        bool acc = !dilate;
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            if (!src.in_bounds(c + dc, r + dr)) continue;
            bool v = src(c + dc, r + dr) != 0;
            acc = dilate ? (acc || v) : (acc && v);
          }
        dst(c, r) = acc ? 1 : 0;
      }
    return dst;
  };
  return pass(pass(in, true), false);
}

/// Per-label masks for one frame. A point marks its pixel only when its
/// camera depth agrees with the frame depth within `occlusion_tol`.
inline std::vector<ObjectMask> reproject_masks(const LabeledCloud& cloud, const Frame& frame, double occlusion_tol) {
  if (cloud.points.empty()) throw Error(Errc::InvalidArgument, "cannot reproject an empty cloud");
  const auto& intr = frame.intr;
  std::vector<ObjectMask> masks(static_cast<std::size_t>(cloud.label_count));
  for (int l = 0; l < cloud.label_count; ++l) {
    masks[static_cast<std::size_t>(l)] = {frame.frame_id, l + 1, BitMask(intr.width, intr.height, 1)};
  }
  const Pose cam_from_world = frame.pose.inverse();
  for (const auto& p : cloud.points) {
    Vec3 pc = cam_from_world.apply(p.position);
    if (pc.z() <= 0.0) continue;
    auto idx = nearest_pixel(project(pc, intr), intr);
    if (!idx) continue;
    double d = frame.depth(idx->col, idx->row);
    if (d <= 0.0 || std::abs(pc.z() - d) > occlusion_tol) continue;
    masks[static_cast<std::size_t>(p.label - 1)].bits(idx->col, idx->row) = 1;
  }
  for (auto& m : masks) {
    m.bits = close3x3(m.bits);
    for (int r = 0; r < intr.height; ++r)
      for (int c = 0; c < intr.width; ++c)
        if (frame.depth(c, r) <= 0.0f) m.bits(c, r) = 0;
  }
  return masks;
}

/// Volumetric fusion parameters; derived distances are multiples of the voxel.
struct FusionConfig {
  double voxel_size = 0.02;
  double truncation_voxels = 4.0;
  double occlusion_voxels = 1.5;
  double cluster_voxels = 2.5;
  std::size_t min_cluster_size = 20;

  double occlusion_tol() const { return occlusion_voxels * voxel_size; }
  double cluster_radius() const { return cluster_voxels * voxel_size; }
};

inline LabeledCloud fuse_and_cluster(std::span<const Frame> frames, const Aabb& workspace, double ground_plane_z,
                                     const FusionConfig& cfg = {}) {
  TsdfVolume vol = TsdfVolume::covering(workspace, cfg.voxel_size, cfg.truncation_voxels);
  for (const auto& f : frames) integrate_into(vol, f);
  auto cloud = extract_cloud(vol, workspace, ground_plane_z);
  return cluster_objects(cloud, cfg.cluster_radius(), cfg.min_cluster_size);
}

}  // namespace don
