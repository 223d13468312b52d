#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "don/correspond.hpp"
#include "don/descriptor.hpp"
#include "don/error.hpp"
#include "don/keypoints.hpp"

namespace don {

/// A held-out correspondence query with its geometric ground truth.
struct HeldoutPair {
  int frame_a = 0;
  int frame_b = 0;
  PixelCoord u_a;
  PixelCoord truth;
  double distance_ratio = 1.0;  // max/min camera-to-point distance over the two frames
};

struct ScaleBin {
  double lo = 1.0;
  double hi = 1.0;  // nominal upper edge; the last bin also takes everything above it
  std::size_t evaluated = 0;
  std::size_t correct = 0;

  double fraction() const { return evaluated ? static_cast<double>(correct) / static_cast<double>(evaluated) : 0.0; }
};

inline std::vector<ScaleBin> default_scale_bins() { return {{1.0, 1.25}, {1.25, 1.6}, {1.6, 2.0}}; }

inline std::size_t scale_bin_index(std::span<const ScaleBin> bins, double ratio) {
  for (std::size_t b = 0; b + 1 < bins.size(); ++b)
    if (ratio < bins[b].hi) return b;
  return bins.size() - 1;
}

struct PckReport {
  double threshold_px = 3.0;
  std::size_t evaluated = 0;
  std::size_t correct = 0;
  std::vector<ScaleBin> bins;

  double fraction_correct() const {
    return evaluated ? static_cast<double>(correct) / static_cast<double>(evaluated) : 0.0;
  }
};

/// Fraction of an image covered by pixels within `threshold_px` of a point
/// (lattice count of the disc); the success rate of a uniform random guess.
inline double chance_rate(double threshold_px, int width, int height) {
  int count = 0;
  int r = static_cast<int>(std::floor(threshold_px));
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      if (dx * dx + dy * dy <= threshold_px * threshold_px) ++count;
  return static_cast<double>(std::max(count, 1)) / (static_cast<double>(width) * height);
}

inline double camera_distance_ratio(const Vec3& world, const Frame& a, const Frame& b) {
  double da = (a.pose.translation() - world).norm();
  double db = (b.pose.translation() - world).norm();
  return std::max(da, db) / std::min(da, db);
}

/// Stratified held-out queries: up to `per_bin` pairs per scale bin, each
/// u_a drawn from a nonempty object mask of frame a and kept only when it has
/// an unoccluded correspondence in frame b.
inline std::vector<HeldoutPair> make_heldout_pairs(const Trajectory& traj, int per_bin, double tol, std::uint64_t seed,
                                                   std::span<const ScaleBin> bins_in = {}) {
  std::vector<ScaleBin> bins = bins_in.empty() ? default_scale_bins()
                                               : std::vector<ScaleBin>(bins_in.begin(), bins_in.end());
  if (traj.size() < 2) throw Error(Errc::InvalidArgument, "held-out trajectory needs >= 2 frames");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> frame(0, static_cast<int>(traj.size()) - 1);
  std::vector<std::size_t> filled(bins.size(), 0);
  std::vector<HeldoutPair> out;
  const long budget = 2000L * per_bin * static_cast<long>(bins.size());
  for (long attempt = 0; attempt < budget; ++attempt) {
    if (std::all_of(filled.begin(), filled.end(), [&](std::size_t f) { return f >= static_cast<std::size_t>(per_bin); })) break;
    int a = frame(rng), b = frame(rng);
    if (a == b) continue;
    std::vector<PixelIndex> pixels;
    for (const auto& m : traj.masks[static_cast<std::size_t>(a)])
      for (int r = 0; r < m.bits.height(); ++r)
        for (int c = 0; c < m.bits.width(); ++c)
          if (m.bits(c, r)) pixels.push_back({c, r});
    if (pixels.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, pixels.size() - 1);
    PixelCoord ua = to_coord(pixels[pick(rng)]);
    const Frame& fa = traj.frames[static_cast<std::size_t>(a)];
    const Frame& fb = traj.frames[static_cast<std::size_t>(b)];
    if (fa.depth_at(ua) <= 0.0) continue;
    auto ub = find_correspondence(ua, fa, fb, tol);
    if (!ub) continue;
    double ratio = camera_distance_ratio(lift_to_world(ua, fa), fa, fb);
    std::size_t bin = scale_bin_index(bins, ratio);
    if (filled[bin] >= static_cast<std::size_t>(per_bin)) continue;
    ++filled[bin];
    out.push_back({a, b, ua, *ub, ratio});
  }
  return out;
}

/// Memoizing adapter around a per-frame encoder callable.
template <class EncodeFn>
class EncodingCache {
 public:
  explicit EncodingCache(EncodeFn fn) : fn_(std::move(fn)) {}

  const DescriptorMap& operator()(std::size_t frame) {
    auto it = cache_.find(frame);
    if (it == cache_.end()) it = cache_.emplace(frame, fn_(frame)).first;
    return it->second;
  }

 private:
  EncodeFn fn_;
  std::map<std::size_t, DescriptorMap> cache_;
};

/// Percentage of correct keypoints. `encode_frame(i)` returns the descriptor
/// map of trajectory frame i; a query is correct when the global mode lands
/// within threshold_px of the true correspondence (or on its nearest pixel).
template <class EncodeFn>
PckReport eval_pck(EncodeFn&& encode_frame, const Trajectory& traj, std::span<const HeldoutPair> pairs,
                   double threshold_px, double temperature = 0.05) {
  (void)traj;
  EncodingCache cache([&](std::size_t i) { return encode_frame(i); });
  PckReport rep;
  rep.threshold_px = threshold_px;
  rep.bins = default_scale_bins();
  for (const auto& p : pairs) {
    const auto& da = cache(static_cast<std::size_t>(p.frame_a));
    auto ref_span = da.at(p.u_a);
    std::vector<double> ref(ref_span.begin(), ref_span.end());
    const auto& db = cache(static_cast<std::size_t>(p.frame_b));
    auto act = activation_map(db, ref, temperature);
    Keypoint kp = extract_keypoint(act, db, ref);
    auto truth_px = nearest_pixel(p.truth, db.width(), db.height());
    bool hit = pixel_distance(kp.pixel, p.truth) <= threshold_px ||
               (truth_px && kp.pixel == to_coord(*truth_px));
    auto& bin = rep.bins[scale_bin_index(rep.bins, p.distance_ratio)];
    ++rep.evaluated;
    ++bin.evaluated;
    if (hit) {
      ++rep.correct;
      ++bin.correct;
    }
  }
  return rep;
}

/// Oracle object id for each mask label: the most frequent nonzero renderer
/// id under that label's masks across the trajectory (0 if never overlapping).
inline std::vector<int> oracle_ids_for_labels(const Trajectory& traj) {
  std::vector<std::array<std::size_t, 256>> votes(static_cast<std::size_t>(traj.label_count) + 1);
  for (auto& v : votes) v.fill(0);
  for (std::size_t f = 0; f < traj.size() && f < traj.ids.size(); ++f)
    for (const auto& m : traj.masks[f])
      for (int r = 0; r < m.bits.height(); ++r)
        for (int c = 0; c < m.bits.width(); ++c)
          if (m.bits(c, r)) ++votes[static_cast<std::size_t>(m.object_label)][traj.ids[f](c, r)];
  std::vector<int> ids(votes.size(), 0);
  for (std::size_t l = 1; l < votes.size(); ++l) {
    std::size_t best = 0;
    for (std::size_t id = 1; id < 256; ++id)
      if (votes[l][id] > votes[l][best] || (best == 0 && votes[l][id] > 0)) best = id;
    ids[l] = votes[l][best] > 0 ? static_cast<int>(best) : 0;
  }
  return ids;
}

inline std::size_t frame_index_of(const Trajectory& traj, int frame_id) {
  for (std::size_t i = 0; i < traj.size(); ++i)
    if (traj.frames[i].frame_id == frame_id) return i;
  throw Error(Errc::InvalidArgument, "frame id " + std::to_string(frame_id) + " not in trajectory");
}

struct DiscriminationReport {
  std::size_t evaluated = 0;
  std::size_t correct = 0;

  double fraction() const { return evaluated ? static_cast<double>(correct) / static_cast<double>(evaluated) : 0.0; }
};

/// Share of (frame, reference) pairs whose keypoint lands on the reference
/// object's oracle region, over frames where that object's mask is nonempty.
template <class EncodeFn>
DiscriminationReport eval_discrimination(EncodeFn&& encode_frame, const Trajectory& traj, const ReferenceSet& refs,
                                         double temperature = 0.05) {
  if (traj.ids.size() != traj.size()) throw Error(Errc::InvalidArgument, "discrimination needs oracle id rasters");
  auto label_ids = oracle_ids_for_labels(traj);
  DiscriminationReport rep;
  for (std::size_t f = 0; f < traj.size(); ++f) {
    std::optional<DescriptorMap> desc;
    for (const auto& e : refs.entries) {
      const ObjectMask* mask = traj.mask(f, e.object_label);
      if (!mask || mask->empty()) continue;
      if (!desc) desc = encode_frame(f);
      auto act = activation_map(*desc, e.descriptor, temperature);
      Keypoint kp = extract_keypoint(act, *desc, e.descriptor);
      ++rep.evaluated;
      int id = traj.ids[f](static_cast<int>(kp.pixel.u), static_cast<int>(kp.pixel.v));
      if (id != 0 && id == label_ids[static_cast<std::size_t>(e.object_label)]) ++rep.correct;
    }
  }
  return rep;
}

struct OcclusionReport {
  double mean_visible = 0.0;
  double mean_occluded = 0.0;
  double stderr_visible = 0.0;
  std::size_t n_visible = 0;
  std::size_t n_occluded = 0;
};

/// Best-match descriptor distance of every reference, split by oracle
/// visibility. A reference counts as visible in a frame when its surface
/// point has an unoccluded correspondence there, and as occluded when its
/// point projects into the image but the object has no pixel at all.
template <class EncodeFn>
OcclusionReport eval_occlusion(EncodeFn&& encode_frame, const Trajectory& traj, const ReferenceSet& refs,
                               double tol = 0.01) {
  if (traj.ids.size() != traj.size()) throw Error(Errc::InvalidArgument, "occlusion metric needs oracle id rasters");
  auto label_ids = oracle_ids_for_labels(traj);
  std::vector<double> visible, occluded;
  for (std::size_t f = 0; f < traj.size(); ++f) {
    std::optional<DescriptorMap> desc;
    const Frame& frame = traj.frames[f];
    for (const auto& e : refs.entries) {
      std::size_t src = frame_index_of(traj, e.frame_id);
      if (src == f) continue;
      const Frame& ref_frame = traj.frames[src];
      Vec3 world = lift_to_world(e.pixel, ref_frame);
      Vec3 pc = frame.pose.inverse().apply(world);
      if (pc.z() <= 0.0 || !nearest_pixel(project(pc, frame.intr), frame.intr)) continue;
      int id = label_ids[static_cast<std::size_t>(e.object_label)];
      const auto& ids = traj.ids[f].data();
      bool object_present = std::find(ids.begin(), ids.end(), static_cast<std::uint8_t>(id)) != ids.end();
      bool point_visible = object_present && find_correspondence(e.pixel, ref_frame, frame, tol).has_value();
      if (object_present && !point_visible) continue;
      if (!desc) desc = encode_frame(f);
      auto dist = distance_map(*desc, e.descriptor);
      double best = *std::min_element(dist.begin(), dist.end());
      (point_visible ? visible : occluded).push_back(best);
    }
  }
  if (occluded.empty()) throw Error(Errc::InsufficientOcclusion, "no frame fully occludes a reference object");
  if (visible.empty()) throw Error(Errc::InsufficientOcclusion, "no frame shows a reference point");
  OcclusionReport rep;
  rep.n_visible = visible.size();
  rep.n_occluded = occluded.size();
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  rep.mean_visible = mean(visible);
  rep.mean_occluded = mean(occluded);
  if (visible.size() > 1) {
    double ss = 0.0;
    for (double x : visible) ss += (x - rep.mean_visible) * (x - rep.mean_visible);
    rep.stderr_visible = std::sqrt(ss / static_cast<double>(visible.size() - 1) / static_cast<double>(visible.size()));
  }
  return rep;
}

/// Ground-truth descriptors: world position plus a large per-object offset,
/// so every surface point is unique and objects are far apart. Pixels with
/// no depth map to a far sentinel.
inline DescriptorMap oracle_descriptor_map(const Frame& frame, const IdRaster& ids) {
  DescriptorMap out(frame.width(), frame.height(), 4);
  for (int r = 0; r < frame.height(); ++r)
    for (int c = 0; c < frame.width(); ++c) {
      auto d = out.at(c, r);
      double z = frame.depth(c, r);
      if (z <= 0.0) {
        d[0] = d[1] = d[2] = 1e3;
        d[3] = -1e3;
        continue;
      }
      Vec3 w = frame.pose.apply(unproject({static_cast<double>(c), static_cast<double>(r)}, z, frame.intr));
      for (int k = 0; k < 3; ++k) d[static_cast<std::size_t>(k)] = w[k];
      d[3] = 10.0 * ids(c, r);
    }
  return out;
}

}  // namespace don
