#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "don/error.hpp"
#include "don/fusion.hpp"
#include "don/geometry.hpp"
#include "don/scenegen.hpp"

namespace don {

/// Frames of one static-scene scan plus the object masks produced for them.
/// frames[i] is annotated by masks[i][label - 1]. `ids` holds the renderer's
/// oracle rasters when available; the learning path never reads them.
struct Trajectory {
  std::vector<Frame> frames;
  std::vector<std::vector<ObjectMask>> masks;
  std::vector<IdRaster> ids;
  int label_count = 0;

  std::size_t size() const noexcept { return frames.size(); }

  const ObjectMask* mask(std::size_t frame, int label) const {
    if (frame >= masks.size() || label < 1 || label > static_cast<int>(masks[frame].size())) return nullptr;
    return &masks[frame][static_cast<std::size_t>(label - 1)];
  }

  bool has_any_mask() const {
    for (const auto& per_frame : masks)
      for (const auto& m : per_frame)
        if (!m.empty()) return true;
    return false;
  }
};

/// Assembles a trajectory: renders are kept as oracle, masks come from fusion.
inline Trajectory make_trajectory(std::vector<RenderedFrame> rendered, const LabeledCloud& cloud,
                                  double occlusion_tol) {
  Trajectory t;
  t.label_count = cloud.label_count;
  for (auto& r : rendered) {
    t.masks.push_back(reproject_masks(cloud, r.frame, occlusion_tol));
    t.frames.push_back(std::move(r.frame));
    t.ids.push_back(std::move(r.ids));
  }
  return t;
}

/// Trajectory whose masks are all empty; every pixel is background.
inline Trajectory make_background_trajectory(std::vector<RenderedFrame> rendered) {
  Trajectory t;
  for (auto& r : rendered) {
    t.masks.emplace_back();
    t.frames.push_back(std::move(r.frame));
    t.ids.push_back(std::move(r.ids));
  }
  return t;
}

struct Match {
  PixelCoord u_a;  // integer-valued, frame a
  PixelCoord u_b;  // real-valued, frame b
};

/// One image pair for the contrastive loss. frame_a / frame_b index the
/// trajectory's frame list. A background-only sample pairs object pixels of
/// frame a with a frame b taken from a distractor-only scan: it has no valid
/// correspondences, so only the non-match term applies and u_b equals u_a.
struct TrainingSample {
  int frame_a = 0;
  int frame_b = 0;
  int target_label = 0;
  std::vector<Match> matches;
  std::vector<std::vector<PixelCoord>> non_matches;
  bool background_only = false;
};

struct SamplingConfig {
  int m = 64;
  int n = 8;
  double occlusion_tol = 0.01;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (m < 1 || n < 1) throw Error(Errc::InvalidArgument, "m and n must be >= 1");
    if (!(occlusion_tol > 0.0)) throw Error(Errc::InvalidArgument, "occlusion_tol must be positive");
  }
};

/// World point seen at integer-valued pixel `u` of `frame`.
inline Vec3 lift_to_world(PixelCoord u, const Frame& frame) {
  double d = frame.depth_at(u);
  if (!(d > 0.0)) throw Error(Errc::InvalidSource, "source pixel has no valid depth");
  return frame.pose.apply(unproject(u, d, frame.intr));
}

/// Where the surface point under u_a appears in frame b, if it is in view
/// and not occluded (frame b depth agrees with the projected depth within tol).
inline std::optional<PixelCoord> find_correspondence(PixelCoord u_a, const Frame& frame_a, const Frame& frame_b,
                                                     double tol) {
  Vec3 world = lift_to_world(u_a, frame_a);
  Vec3 pc = frame_b.pose.inverse().apply(world);
  if (pc.z() <= 0.0) return std::nullopt;
  PixelCoord u_b = project(pc, frame_b.intr);
  auto idx = nearest_pixel(u_b, frame_b.intr);
  if (!idx) return std::nullopt;
  double d = frame_b.depth(idx->col, idx->row);
  if (d <= 0.0 || std::abs(d - pc.z()) > tol) return std::nullopt;
  return u_b;
}

namespace detail {

/// Pixels strictly closer than this to the true correspondence are never non-matches.
inline constexpr double kNonMatchExclusionPx = 2.0;

inline std::vector<PixelIndex> mask_pixels(const ObjectMask& m) {
  std::vector<PixelIndex> px;
  for (int r = 0; r < m.bits.height(); ++r)
    for (int c = 0; c < m.bits.width(); ++c)
      if (m.bits(c, r)) px.push_back({c, r});
  return px;
}

inline bool on_other_mask(const std::vector<ObjectMask>& masks, int label, PixelIndex p) {
  for (const auto& m : masks)
    if (m.object_label != label && m.test(p.col, p.row)) return true;
  return false;
}

template <class Rng>
std::vector<PixelCoord> draw_non_matches(Rng& rng, int width, int height, PixelCoord truth, int n) {
  std::uniform_int_distribution<int> col(0, width - 1), row(0, height - 1);
  std::vector<PixelCoord> out;
  out.reserve(static_cast<std::size_t>(n));
  while (static_cast<int>(out.size()) < n) {
    PixelCoord c{static_cast<double>(col(rng)), static_cast<double>(row(rng))};
    if (pixel_distance(c, truth) >= kNonMatchExclusionPx) out.push_back(c);
  }
  return out;
}

}  // namespace detail

/// Seeded generator of contrastive training samples over one trajectory.
/// Ordered frame pairs are visited uniformly without replacement per epoch.
class PairSampler {
 public:
  static constexpr int kMaxPairAttempts = 20;
  static constexpr int kDrawsPerMatch = 50;

  PairSampler(const Trajectory& traj, SamplingConfig cfg) : traj_(&traj), cfg_(cfg), rng_(cfg.rng_seed) {
    cfg_.validate();
    if (traj.size() < 2) throw Error(Errc::InvalidArgument, "trajectory needs at least 2 frames");
    if (!traj.has_any_mask()) throw Error(Errc::EmptyMask, "trajectory has no nonempty object mask");
  }

  const SamplingConfig& config() const noexcept { return cfg_; }

  std::pair<int, int> next_pair() {
    if (cursor_ >= order_.size()) refill();
    return order_[cursor_++];
  }

  TrainingSample next() {
    for (int attempt = 0; attempt < kMaxPairAttempts; ++attempt) {
      auto [a, b] = next_pair();
      if (auto s = try_pair(a, b)) return *std::move(s);
    }
    throw Error(Errc::ExhaustedSampling,
                "no frame pair yielded " + std::to_string(cfg_.m) + " matches after " +
                    std::to_string(kMaxPairAttempts) + " attempts");
  }

  /// Draws m object pixels from frame a and m*n random pixels of a
  /// distractor-only frame; used to push object descriptors away from clutter.
  TrainingSample next_background(const Trajectory& background) {
    if (background.size() == 0) throw Error(Errc::InvalidArgument, "background trajectory is empty");
    for (int attempt = 0; attempt < kMaxPairAttempts; ++attempt) {
      auto [a, unused] = next_pair();
      (void)unused;
      auto label = pick_label(static_cast<std::size_t>(a));
      if (!label) continue;
      auto pixels = detail::mask_pixels(*traj_->mask(static_cast<std::size_t>(a), *label));
      std::uniform_int_distribution<std::size_t> pick(0, pixels.size() - 1);
      std::uniform_int_distribution<std::size_t> bframe(0, background.size() - 1);
      TrainingSample s;
      s.frame_a = a;
      s.frame_b = static_cast<int>(bframe(rng_));
      s.target_label = *label;
      s.background_only = true;
      const Frame& fb = background.frames[static_cast<std::size_t>(s.frame_b)];
      for (int i = 0; i < cfg_.m; ++i) {
        PixelCoord u = to_coord(pixels[pick(rng_)]);
        s.matches.push_back({u, u});
        // No true correspondence exists; the exclusion disc is centred off-grid.
        s.non_matches.push_back(detail::draw_non_matches(rng_, fb.width(), fb.height(), {-1e9, -1e9}, cfg_.n));
      }
      return s;
    }
    throw Error(Errc::ExhaustedSampling, "no frame with a nonempty mask found for a background sample");
  }

 private:
  void refill() {
    order_.clear();
    const int n = static_cast<int>(traj_->size());
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        if (a != b) order_.emplace_back(a, b);
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
  }

  std::optional<int> pick_label(std::size_t frame) {
    std::vector<int> labels;
    if (frame < traj_->masks.size()) {
      for (const auto& m : traj_->masks[frame])
        if (!m.empty()) labels.push_back(m.object_label);
    }
    if (labels.empty()) return std::nullopt;
    std::uniform_int_distribution<std::size_t> pick(0, labels.size() - 1);
    return labels[pick(rng_)];
  }

  std::optional<TrainingSample> try_pair(int a, int b) {
    auto label = pick_label(static_cast<std::size_t>(a));
    if (!label) return std::nullopt;
    const Frame& fa = traj_->frames[static_cast<std::size_t>(a)];
    const Frame& fb = traj_->frames[static_cast<std::size_t>(b)];
    const auto& masks_a = traj_->masks[static_cast<std::size_t>(a)];
    const auto& masks_b = traj_->masks[static_cast<std::size_t>(b)];
    auto pixels = detail::mask_pixels(*traj_->mask(static_cast<std::size_t>(a), *label));
    std::uniform_int_distribution<std::size_t> pick(0, pixels.size() - 1);

    TrainingSample s;
    s.frame_a = a;
    s.frame_b = b;
    s.target_label = *label;
    const int budget = kDrawsPerMatch * cfg_.m;
    for (int draw = 0; draw < budget && static_cast<int>(s.matches.size()) < cfg_.m; ++draw) {
      PixelIndex pa = pixels[pick(rng_)];
      if (fa.depth(pa.col, pa.row) <= 0.0f) continue;
      if (detail::on_other_mask(masks_a, *label, pa)) continue;
      auto ub = find_correspondence(to_coord(pa), fa, fb, cfg_.occlusion_tol);
      if (!ub) continue;
      auto pb = nearest_pixel(*ub, fb.intr);
      if (!pb || detail::on_other_mask(masks_b, *label, *pb)) continue;
      s.matches.push_back({to_coord(pa), *ub});
    }
    if (static_cast<int>(s.matches.size()) < cfg_.m) return std::nullopt;
    for (const auto& m : s.matches) {
      s.non_matches.push_back(detail::draw_non_matches(rng_, fb.width(), fb.height(), m.u_b, cfg_.n));
    }
    return s;
  }

  const Trajectory* traj_;
  SamplingConfig cfg_;
  std::mt19937_64 rng_;
  std::vector<std::pair<int, int>> order_;
  std::size_t cursor_ = 0;
};

inline TrainingSample sample_training_pair(const Trajectory& traj, const SamplingConfig& cfg) {
  PairSampler sampler(traj, cfg);
  return sampler.next();
}

}  // namespace don
